from .evaluate import EvalResult, PromptResult, aggregate, evaluate, image_path_for, report, score_vqa_accuracy
from .families import BANDS, QUESTIONS_PER_TIER, TIERS
from .suite import (
    BenchmarkPrompt,
    SuiteError,
    dump_suite,
    generated_suite,
    load_suite,
    parse_suite,
    validate_suite,
    write_suite,
)

__all__ = [
    "BANDS", "QUESTIONS_PER_TIER", "TIERS", "BenchmarkPrompt", "EvalResult", "PromptResult", "SuiteError",
    "aggregate", "dump_suite", "evaluate", "generated_suite", "image_path_for", "load_suite", "parse_suite",
    "report", "score_vqa_accuracy", "validate_suite", "write_suite",
]
