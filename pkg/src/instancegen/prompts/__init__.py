"""Instruction texts shipped with the package, and the section markers that
the parser/assignment engines and the rule-based chat agree on."""

from importlib import resources

PARSER_HEADER = "TASK: PROMPT PARSING"
ASSIGNMENT_HEADER = "TASK: INSTANCE ASSIGNMENT"

PROMPT_LINE = "PROMPT:"
TASK_MARKER = "---- YOUR TASK ----"
PARSED_MARKER = "PARSED PROMPT:"
LAYOUT_MARKER = "LAYOUT:"
NEGATIVE_MARKER = "---- PREVIOUS INCORRECT ANSWER {k} ----"
REASONING_MARKER = "** REASONING **"
ASSIGNMENTS_MARKER = "** ASSIGNMENTS **"
DELETE = "delete"


def load_text(name: str) -> str:
    return resources.files(__name__).joinpath(name).read_text(encoding="utf-8")


def assignment_examples() -> list[str]:
    folder = resources.files(__name__).joinpath("assignment_examples")
    names = sorted(p.name for p in folder.iterdir() if p.name.endswith(".txt"))
    return [folder.joinpath(n).read_text(encoding="utf-8") for n in names]
