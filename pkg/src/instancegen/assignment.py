"""Instance assignment through a chat model: instruction assembly, reply parsing,
validation against the parsed prompt, and the retry loop with negative examples."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import prompts
from .backends import chat_complete
from .prompt_parser import ParsedPrompt

ASSIGNMENT_INSTRUCTION_FILE = "instance_assignment_instruction.txt"
DELETE = prompts.DELETE

VIOLATION_KINDS = (
    "count_mismatch", "attribute_on_deleted", "unknown_object", "unknown_attribute",
    "attribute_count_mismatch", "missing_segment", "duplicate_segment",
    # beyond the base list: carrier on the wrong object, ids not in the layout, unreadable reply
    "attribute_wrong_object", "unknown_segment", "malformed_output",
)


@dataclass(frozen=True)
class SegmentInstruction:
    object: str
    attributes: tuple[str, ...] = ()

    @property
    def deleted(self) -> bool:
        return self.object == DELETE


@dataclass
class AssignmentPlan:
    segments: dict[str, SegmentInstruction]
    reasoning: str = ""
    duplicates: tuple[str, ...] = ()

    def to_wire(self) -> dict:
        return {sid: {"object": s.object, "attributes": list(s.attributes)} for sid, s in self.segments.items()}

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), indent=2, ensure_ascii=False)

    def kept(self) -> dict[str, SegmentInstruction]:
        return {sid: s for sid, s in self.segments.items() if not s.deleted}


@dataclass(frozen=True)
class AssignmentViolation:
    kind: str
    detail: str

    def __post_init__(self):
        if self.kind not in VIOLATION_KINDS:
            raise ValueError(f"unknown violation kind {self.kind!r}")

    def __str__(self):
        return f"{self.kind}: {self.detail}"


class AssignmentFormatError(ValueError):
    """The reply lacks the two sections or a readable JSON block."""


class AssignmentFailed(RuntimeError):
    def __init__(self, attempts: list[tuple[str, list[AssignmentViolation]]]):
        self.attempts = attempts
        self.violations = [v for _, v in attempts]
        super().__init__(f"no valid assignment after {len(attempts)} attempts; last: "
                         + "; ".join(map(str, attempts[-1][1])))


# ---------------------------------------------------------------------------
# instruction


def format_answer(reasoning: str, plan_wire: Mapping) -> str:
    return (f"{prompts.REASONING_MARKER}\n{reasoning.strip()}\n\n"
            f"{prompts.ASSIGNMENTS_MARKER}\n{json.dumps(plan_wire, indent=2, ensure_ascii=False)}")


def build_assignment_instruction(parsed: ParsedPrompt, summary: Mapping,
                                 negatives: Sequence[tuple[str, Sequence]] = ()) -> str:
    """Base instruction, in-context examples, earlier failures, then the task.

    Each negative is ``(previous reply, its violations)``.
    """
    parts = [prompts.load_text(ASSIGNMENT_INSTRUCTION_FILE).rstrip()]
    for k, example in enumerate(prompts.assignment_examples(), start=1):
        parts.append(f"---- EXAMPLE {k} ----\n{example.strip()}")
    for k, (raw, violations) in enumerate(negatives, start=1):
        problems = "\n".join(f"- {v}" for v in violations) or "- (none recorded)"
        parts.append(f"{prompts.NEGATIVE_MARKER.format(k=k)}\n"
                     "The answer below is wrong. Do not repeat its mistakes.\n"
                     f"{raw.strip()}\nProblems found:\n{problems}")
    parts.append(f"{prompts.TASK_MARKER}\n{prompts.PROMPT_LINE} {parsed.prompt}\n"
                 f"{prompts.PARSED_MARKER}\n{parsed.to_json()}\n"
                 f"{prompts.LAYOUT_MARKER}\n{json.dumps(summary, indent=2, ensure_ascii=False)}\nANSWER:")
    return "\n\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# parsing


def parse_assignment_output(raw: str) -> AssignmentPlan:
    r_at = raw.find(prompts.REASONING_MARKER)
    a_at = raw.find(prompts.ASSIGNMENTS_MARKER)
    if r_at < 0 or a_at < 0:
        missing = [m for m, at in ((prompts.REASONING_MARKER, r_at), (prompts.ASSIGNMENTS_MARKER, a_at)) if at < 0]
        raise AssignmentFormatError(f"missing section marker(s): {', '.join(missing)}")
    if a_at < r_at:
        raise AssignmentFormatError("assignments section comes before the reasoning section")
    reasoning = raw[r_at + len(prompts.REASONING_MARKER):a_at].strip()
    body = raw[a_at + len(prompts.ASSIGNMENTS_MARKER):]
    start = body.find("{")
    if start < 0:
        raise AssignmentFormatError("no JSON object after the assignments marker")
    duplicates: list[str] = []

    def pairs_hook(pairs):
        seen = {}
        for k, v in pairs:
            if k in seen:
                duplicates.append(k)
            seen[k] = v
        return seen

    try:
        data, _ = json.JSONDecoder(object_pairs_hook=pairs_hook).raw_decode(body[start:])
    except json.JSONDecodeError as exc:
        raise AssignmentFormatError(f"assignments JSON is malformed: {exc}") from exc
    if not isinstance(data, dict):
        raise AssignmentFormatError("assignments must be a JSON object")
    segments = {}
    for sid, entry in data.items():
        if not isinstance(entry, dict) or not isinstance(entry.get("object"), str):
            raise AssignmentFormatError(f"segment {sid!r} has no object string")
        attrs = entry.get("attributes", [])
        if not isinstance(attrs, list) or not all(isinstance(a, str) for a in attrs):
            raise AssignmentFormatError(f"segment {sid!r} attributes must be a list of strings")
        segments[str(sid)] = SegmentInstruction(entry["object"], tuple(attrs))
    # nested objects also pass through the hook; keep only top-level id repeats
    dup_ids = tuple(d for d in duplicates if d in segments)
    return AssignmentPlan(segments, reasoning, dup_ids)


# ---------------------------------------------------------------------------
# validation


def validate_assignment(plan: AssignmentPlan, parsed: ParsedPrompt, summary: Mapping) -> list[AssignmentViolation]:
    bad: list[AssignmentViolation] = []
    ids = set(map(str, summary))
    for sid in sorted(ids - set(plan.segments), key=_id_key):
        bad.append(AssignmentViolation("missing_segment", f"segment {sid} has no instruction"))
    for sid in sorted(set(plan.segments) - ids, key=_id_key):
        bad.append(AssignmentViolation("unknown_segment", f"segment {sid} is not in the layout"))
    for sid in plan.duplicates:
        bad.append(AssignmentViolation("duplicate_segment", f"segment {sid} appears more than once"))

    quotas = {(o, a.attribute): a.desired_amount for o, spec in parsed.objects.items()
              for a in spec.instance_attributes}
    all_attrs = {a for _, a in quotas}
    counts: Counter = Counter()
    carried: Counter = Counter()
    for sid, s in sorted(plan.segments.items(), key=lambda kv: _id_key(kv[0])):
        if s.deleted:
            if s.attributes:
                bad.append(AssignmentViolation("attribute_on_deleted",
                                               f"segment {sid} is deleted but carries {list(s.attributes)}"))
            continue
        if s.object not in parsed.objects:
            bad.append(AssignmentViolation("unknown_object", f"segment {sid} is set to unknown object {s.object!r}"))
            continue
        counts[s.object] += 1
        for a in s.attributes:
            if (s.object, a) in quotas:
                carried[(s.object, a)] += 1
            elif a in all_attrs:
                owners = sorted(o for o, x in quotas if x == a)
                bad.append(AssignmentViolation(
                    "attribute_wrong_object",
                    f"segment {sid} is {s.object!r} but attribute {a!r} belongs to {', '.join(map(repr, owners))}"))
            else:
                bad.append(AssignmentViolation("unknown_attribute", f"segment {sid} carries unknown attribute {a!r}"))
    for word, spec in parsed.objects.items():
        if counts[word] != spec.desired_quantity:
            bad.append(AssignmentViolation(
                "count_mismatch", f"{word!r} set on {counts[word]} segment(s), expected {spec.desired_quantity}"))
    for (word, attr), want in quotas.items():
        if carried[(word, attr)] != want:
            bad.append(AssignmentViolation(
                "attribute_count_mismatch",
                f"{attr!r} on {carried[(word, attr)]} {word!r} segment(s), expected {want}"))
    return bad


def _id_key(sid: str):
    return (0, int(sid)) if str(sid).isdigit() else (1, str(sid))


# ---------------------------------------------------------------------------
# retry loop


@dataclass
class AssignmentResult:
    plan: AssignmentPlan
    transcript: list[tuple[str, str]] = field(default_factory=list)  # (instruction, reply) per call

    @property
    def calls(self) -> int:
        return len(self.transcript)


def format_transcript(transcript: Sequence[tuple[str, str]]) -> str:
    blocks = []
    for k, (instruction, reply) in enumerate(transcript, start=1):
        blocks.append(f"===== CALL {k} : INSTRUCTION =====\n{instruction}\n===== CALL {k} : REPLY =====\n{reply}\n")
    return "\n".join(blocks)


def assign_instances(parsed: ParsedPrompt, summary: Mapping, chat, max_attempts: int = 5, *,
                     complete: Callable = chat_complete) -> AssignmentResult:
    """First violation-free plan; every failed reply becomes a negative example."""
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    negatives: list[tuple[str, list[AssignmentViolation]]] = []
    transcript: list[tuple[str, str]] = []
    for _ in range(max_attempts):
        instruction = build_assignment_instruction(parsed, summary, negatives)
        raw = complete(chat, instruction, [])
        transcript.append((instruction, raw))
        try:
            plan = parse_assignment_output(raw)
        except AssignmentFormatError as exc:
            negatives.append((raw, [AssignmentViolation("malformed_output", str(exc))]))
            continue
        violations = validate_assignment(plan, parsed, summary)
        if not violations:
            return AssignmentResult(plan, transcript)
        negatives.append((raw, violations))
    err = AssignmentFailed(negatives)
    err.transcript = transcript
    raise err
