"""Compound-prompt suite records: validation, JSON-lines load and dump."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .families import BANDS, QUESTIONS_PER_TIER, TIERS, build_records

SUITE_RESOURCE = "compound_prompts.jsonl"
FIELDS = ("family_id", "tier", "band", "prompt", "questions", "provenance")
PROVENANCES = ("paper", "paper-prompt", "authored")
NUM_FAMILIES = 60


class SuiteError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkPrompt:
    family_id: int
    tier: str
    band: str
    prompt: str
    questions: tuple[str, ...]
    provenance: str = "authored"

    @property
    def prompt_id(self) -> str:
        """Stable name used for result images and run directories, e.g. ``07B-mid``."""
        return f"{self.family_id:02d}{self.tier}-{self.band}"

    def to_record(self) -> dict:
        return {"family_id": self.family_id, "tier": self.tier, "band": self.band, "prompt": self.prompt,
                "questions": list(self.questions), "provenance": self.provenance}


def _check_record(rec, where: str) -> BenchmarkPrompt:
    if not isinstance(rec, dict) or tuple(rec) != FIELDS:
        got = list(rec) if isinstance(rec, dict) else type(rec).__name__
        raise SuiteError(f"{where}: expected fields {list(FIELDS)}, got {got}")
    fid = rec["family_id"]
    if not isinstance(fid, int) or isinstance(fid, bool) or not 1 <= fid <= NUM_FAMILIES:
        raise SuiteError(f"{where}: family_id must be an integer in 1..{NUM_FAMILIES}")
    if rec["tier"] not in TIERS:
        raise SuiteError(f"{where}: tier must be one of {TIERS}")
    if rec["band"] not in BANDS:
        raise SuiteError(f"{where}: band must be one of {BANDS}")
    if not isinstance(rec["prompt"], str) or not rec["prompt"].strip():
        raise SuiteError(f"{where}: prompt must be a non-empty string")
    qs = rec["questions"]
    if not isinstance(qs, list) or not all(isinstance(q, str) and q.strip() for q in qs):
        raise SuiteError(f"{where}: questions must be a list of non-empty strings")
    want = QUESTIONS_PER_TIER[rec["tier"]]
    if len(qs) != want:
        raise SuiteError(f"{where}: tier {rec['tier']} needs {want} question(s), found {len(qs)}")
    if rec["provenance"] not in PROVENANCES:
        raise SuiteError(f"{where}: provenance must be one of {PROVENANCES}")
    return BenchmarkPrompt(fid, rec["tier"], rec["band"], rec["prompt"], tuple(qs), rec["provenance"])


def validate_suite(prompts: list[BenchmarkPrompt], complete: bool = True) -> None:
    """Family structure checks; ``complete`` also demands all sixty families."""
    dup = [p for p, n in Counter(p.prompt for p in prompts).items() if n > 1]
    if dup:
        raise SuiteError(f"duplicate prompt text: {dup[0]!r}")
    cells = Counter((p.family_id, p.tier, p.band) for p in prompts)
    repeated = [c for c, n in cells.items() if n > 1]
    if repeated:
        raise SuiteError(f"family {repeated[0][0]} has more than one {repeated[0][1]}/{repeated[0][2]} prompt")
    per_family = Counter(p.family_id for p in prompts)
    for fid, n in sorted(per_family.items()):
        if n != len(TIERS) * len(BANDS):
            raise SuiteError(f"family {fid} has {n} variants, expected {len(TIERS) * len(BANDS)}")
    if complete and len(per_family) != NUM_FAMILIES:
        raise SuiteError(f"suite covers {len(per_family)} families, expected {NUM_FAMILIES}")


def parse_suite(text: str, complete: bool = True) -> list[BenchmarkPrompt]:
    prompts = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SuiteError(f"line {n}: {exc}") from exc
        prompts.append(_check_record(rec, f"line {n}"))
    validate_suite(prompts, complete)
    return prompts


def load_suite(path=None, complete: bool = True) -> list[BenchmarkPrompt]:
    """Read a suite file; without ``path`` the shipped suite is used."""
    if path is None:
        text = resources.files("instancegen").joinpath("data").joinpath(SUITE_RESOURCE).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_suite(text, complete)


def dump_suite(prompts) -> str:
    return "".join(json.dumps(p.to_record(), ensure_ascii=False) + "\n" for p in prompts)


def write_suite(prompts, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_suite(prompts), encoding="utf-8")
    return path


def generated_suite() -> list[BenchmarkPrompt]:
    prompts = [_check_record(r, f"family {r['family_id']}") for r in build_records()]
    validate_suite(prompts)
    return prompts
