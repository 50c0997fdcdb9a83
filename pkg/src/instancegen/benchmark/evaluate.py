"""Judge-based scoring of a results directory against the suite, and report files."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ..backends import BackendError, ValidationError, judge_yes_no, similarity_score
from .families import BANDS, TIERS
from .suite import BenchmarkPrompt

CSV_COLUMNS = ("family_id", "tier", "band", "prompt", "answers", "vqa_acc", "vqa_sim", "image_path")


def score_vqa_accuracy(answers: Sequence[bool]) -> int:
    """1 when every paired question was answered yes."""
    answers = list(answers)
    if not answers:
        raise ValueError("no answers to score")
    return int(all(bool(a) for a in answers))


def image_path_for(results_dir, prompt: BenchmarkPrompt) -> Path:
    return Path(results_dir) / f"{prompt.prompt_id}.png"


@dataclass(frozen=True)
class PromptResult:
    prompt: BenchmarkPrompt
    image_path: str
    status: str  # "ok" | "missing_image" | "judge_error"
    answers: tuple[bool, ...] = ()
    vqa_acc: int | None = None
    vqa_sim: float | None = None
    detail: str = ""

    @property
    def scored(self) -> bool:
        return self.status == "ok"


def _mean(values) -> float | None:
    values = list(values)
    return math.fsum(values) / len(values) if values else None


def aggregate(rows: Sequence[PromptResult]) -> dict:
    """Simple means over scored rows; failed rows only count toward coverage."""
    scored = [r for r in rows if r.scored]
    sims = [r.vqa_sim for r in scored if r.vqa_sim is not None]
    out = {
        "vqa_acc": _mean(r.vqa_acc for r in scored),
        "vqa_sim": _mean(sims),
        "by_tier": {t: _mean(r.vqa_acc for r in scored if r.prompt.tier == t) for t in TIERS},
        "by_band": {b: _mean(r.vqa_acc for r in scored if r.prompt.band == b) for b in BANDS},
        "by_tier_band": {f"{t}/{b}": _mean(r.vqa_acc for r in scored if (r.prompt.tier, r.prompt.band) == (t, b))
                         for t in TIERS for b in BANDS},
        "coverage": {
            "total": len(rows),
            "scored": len(scored),
            "missing_image": sum(r.status == "missing_image" for r in rows),
            "judge_error": sum(r.status == "judge_error" for r in rows),
        },
    }
    return out


@dataclass
class EvalResult:
    rows: list[PromptResult]

    def summary(self) -> dict:
        return aggregate(self.rows)


def evaluate_prompt(results_dir, prompt: BenchmarkPrompt, judge, similarity=None, *,
                    timeout: float | None = 120.0, retries: int = 1) -> PromptResult:
    path = image_path_for(results_dir, prompt)
    if not path.is_file():
        return PromptResult(prompt, str(path), "missing_image", detail="no image")
    try:
        answers = tuple(judge_yes_no(judge, path, q, timeout=timeout, retries=retries) for q in prompt.questions)
        sim = None
        if similarity is not None:
            sim = similarity_score(similarity, path, prompt.prompt, timeout=timeout, retries=retries)
    except (BackendError, ValidationError) as exc:
        return PromptResult(prompt, str(path), "judge_error", detail=f"{type(exc).__name__}: {exc}")
    return PromptResult(prompt, str(path), "ok", answers, score_vqa_accuracy(answers), sim)


def evaluate(results_dir, suite: Sequence[BenchmarkPrompt], judge, similarity=None, *, jobs: int = 1,
             timeout: float | None = 120.0, retries: int = 1) -> EvalResult:
    """Ask every paired question about ``<results_dir>/<prompt_id>.png``.

    Prompts are judged concurrently up to ``jobs``; rows keep suite order.
    """
    def one(p):
        return evaluate_prompt(results_dir, p, judge, similarity, timeout=timeout, retries=retries)

    if jobs <= 1:
        rows = [one(p) for p in suite]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, suite))
    return EvalResult(rows)


def _bar_chart(path: Path, labels, values, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 3.2), dpi=100)
    heights = [v if v is not None else 0.0 for v in values]
    bars = ax.bar(labels, heights, color="#4C72B0")
    for bar, v in zip(bars, values):
        ax.annotate("n/a" if v is None else f"{v:.2f}", (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("VQA accuracy")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def report(result: EvalResult, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("results.csv", "summary.json", "summary_by_tier.png",
                                           "summary_by_band.png")}
    with paths["results.csv"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in result.rows:
            p = r.prompt
            w.writerow([p.family_id, p.tier, p.band, p.prompt,
                        ";".join("yes" if a else "no" for a in r.answers) if r.scored else r.status,
                        "" if r.vqa_acc is None else r.vqa_acc,
                        "" if r.vqa_sim is None else repr(r.vqa_sim),
                        r.image_path])
    summary = result.summary()
    paths["summary.json"].write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    _bar_chart(paths["summary_by_tier.png"], list(TIERS), [summary["by_tier"][t] for t in TIERS], "By tier")
    _bar_chart(paths["summary_by_band.png"], list(BANDS), [summary["by_band"][b] for b in BANDS], "By count band")
    return paths
