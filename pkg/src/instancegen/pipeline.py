"""End-to-end orchestration: parse, seed search, layout, assignment, guided generation."""

from __future__ import annotations

import hashlib
import json
import logging
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .assignment import AssignmentFailed, assign_instances, format_transcript
from .attention import UnknownWordError, aggregate_word_map, render_word_attention, word_attention
from .backends import BackendError, BackendSuite, ValidationError, build_suite
from .config import RunConfig
from .guidance import GuidanceError, run_guided_generation
from .layout import (
    CopyPlacementError,
    InstanceLayout,
    build_layout,
    build_summary,
    copy_instances,
    render_layout,
)
from .prompt_parser import NoObjectsError, ParsedPrompt, ParseFailure, parse_prompt

log = logging.getLogger(__name__)

ARTIFACTS = ("parsed_prompt.json", "layout.json", "segments.json", "assignment.json",
             "guidance_trace.csv", "initial.png", "output.png", "layout.png")

VALIDATION_ERRORS = (ValueError, ParseFailure, NoObjectsError, AssignmentFailed, ValidationError,
                     UnknownWordError, CopyPlacementError)
BACKEND_ERRORS = (BackendError, GuidanceError)


@dataclass
class StageError:
    stage: str
    kind: str
    message: str
    category: str  # "validation" | "backend" | "internal"


@dataclass
class RunRecord:
    run_id: str
    output_dir: str
    artifacts: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    seed_used: int | None = None
    seed_attempts: list[dict] = field(default_factory=list)
    deficit_repaired: int = 0
    error: StageError | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "error"}
        d["error"] = None if self.error is None else self.error.__dict__
        return d


def run_id_for(config: RunConfig) -> str:
    digest = hashlib.sha1(json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")).hexdigest()
    return digest[:12]


def _scale(run) -> int:
    (H, W), (h, w) = run.image_size, run.attention.attn_resolution
    if H % h or W % w or H // h != W // w:
        raise ValidationError(f"image {(H, W)} is not an integer multiple of attention grid {(h, w)}")
    return H // h


def word_maps(run, parsed: ParsedPrompt, config: RunConfig):
    """Aggregated maps per object word (with anchors) and per attribute."""
    rec = run.attention
    objects = {w: word_attention(rec, w, config.aggregation) for w in parsed.object_words}
    attrs = {}
    for a in parsed.attribute_words():
        try:
            attrs[a] = aggregate_word_map(rec, a, config.aggregation)
        except UnknownWordError:
            log.warning("attribute %r has no prompt tokens; scoring it as zero", a)
            attrs[a] = np.zeros(rec.attn_resolution)
    return objects, attrs


def layout_for_run(run, parsed: ParsedPrompt, config: RunConfig, suite: BackendSuite):
    objects, attrs = word_maps(run, parsed, config)
    anchors = [a for wa in objects.values() for a in wa.anchors]
    detections = suite.detect(run.image)
    layout = build_layout(run.image, anchors, detections, suite.segment, _scale(run), config.layout)
    return layout, objects, attrs


def seed_search(parsed: ParsedPrompt, config: RunConfig, suite: BackendSuite):
    """Consecutive seeds until a layout has enough masks; otherwise copy into the best one.

    Returns ``(run, layout, word_attention, attribute_maps, attempts, deficit)``.
    """
    required = parsed.required_instance_count()
    attempts = []
    best = None
    for k in range(config.seed_search_max):
        seed = config.seed + k
        run = suite.generate(parsed.prompt, seed, config.generation, config.capture)
        layout, objects, attrs = layout_for_run(run, parsed, config, suite)
        attempts.append({"seed": seed, "masks": len(layout.masks)})
        if len(layout.masks) >= required:
            return run, layout, objects, attrs, attempts, 0
        if best is None or len(layout.masks) > len(best[1].masks):
            best = (run, layout, objects, attrs)
    run, layout, objects, attrs = best
    deficit = required - len(layout.masks)
    layout = copy_instances(layout, deficit, rng_seed=run.seed, config=config.layout)
    return run, layout, objects, attrs, attempts, deficit


class _Stages:
    def __init__(self, record: RunRecord):
        self.record = record
        self.name = None
        self._t0 = 0.0

    def __call__(self, name):
        self.name = name
        return self

    def __enter__(self):
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.record.timings[self.name] = round(time.perf_counter() - self._t0, 4)
        if exc is None:
            return False
        if isinstance(exc, BACKEND_ERRORS):
            category = "backend"
        elif isinstance(exc, VALIDATION_ERRORS):
            category = "validation"
        else:
            category = "internal"
            log.error("stage %s failed:\n%s", self.name, "".join(traceback.format_exception(exc)))
        self.record.error = StageError(self.name, type(exc).__name__, str(exc), category)
        return True


def run_pipeline(config: RunConfig, suite: BackendSuite | None = None) -> RunRecord:
    """Run every stage, persisting artifacts under ``config.output_dir``.

    Stage failures are recorded on the returned record rather than raised.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = RunRecord(run_id_for(config), str(out))
    stage = _Stages(record)

    def keep(name, path):
        record.artifacts[name] = str(path)

    with stage("backends"):
        if suite is None:
            suite = build_suite(config.backends, config.backend_set, timeout=config.timeout)
    if record.error:
        return _finish(record, out)

    with stage("parse"):
        parsed = parse_prompt(config.prompt, suite.require("chat"),
                              complete=lambda chat, i, t: suite.chat_complete(i, t))
        keep("parsed_prompt.json", io.write_json(out / "parsed_prompt.json", parsed.to_wire()))
    if record.error:
        return _finish(record, out)

    with stage("layout"):
        run, layout, objects, attrs, attempts, deficit = seed_search(parsed, config, suite)
        record.seed_used, record.seed_attempts, record.deficit_repaired = run.seed, attempts, deficit
        summary = build_summary(layout, {w: wa.map for w, wa in objects.items()}, attrs)
        layout.summary = summary
        keep("initial.png", io.save_png(out / "initial.png", run.image))
        keep("layout.json", io.write_json(out / "layout.json", io.layout_to_wire(layout)))
        keep("segments.json", io.write_json(out / "segments.json", summary))
        keep("layout.png", io.save_png(out / "layout.png", render_layout(run.image, layout)))
        for w, wa in objects.items():
            io.save_png(out / "attention" / f"{_safe(w)}.png", render_word_attention(wa))
    if record.error:
        return _finish(record, out)

    with stage("assignment"):
        try:
            result = assign_instances(parsed, summary, suite.require("chat"), config.max_attempts,
                                      complete=lambda chat, i, t: suite.chat_complete(i, t))
        except AssignmentFailed as exc:
            (out / "assignment_transcript.txt").write_text(format_transcript(getattr(exc, "transcript", [])),
                                                           encoding="utf-8")
            raise
        plan = result.plan
        keep("assignment.json", io.write_json(out / "assignment.json",
                                              {"reasoning": plan.reasoning, "assignments": plan.to_wire()}))
        (out / "assignment_transcript.txt").write_text(format_transcript(result.transcript), encoding="utf-8")
        keep("assignment_transcript.txt", out / "assignment_transcript.txt")
    if record.error:
        return _finish(record, out)

    with stage("guidance"):
        try:
            guided, hooks = run_guided_generation(parsed.prompt, plan, layout, run, suite.require("diffusion"),
                                                  config.schedule, config.weights)
        except GuidanceError as exc:
            io.write_json(out / "guidance_failure.json", exc.diagnostics)
            raise
        keep("guidance_trace.csv", io.write_trace_csv(out / "guidance_trace.csv", hooks.trace))
        keep("output.png", io.save_png(out / "output.png", guided.image))
    return _finish(record, out)


def layout_only(config: RunConfig, suite: BackendSuite | None = None) -> RunRecord:
    """Stages up to ``segments.json``."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = RunRecord(run_id_for(config), str(out))
    stage = _Stages(record)
    with stage("backends"):
        if suite is None:
            suite = build_suite(config.backends, config.backend_set, timeout=config.timeout)
    if not record.error:
        with stage("parse"):
            parsed = parse_prompt(config.prompt, suite.require("chat"),
                                  complete=lambda chat, i, t: suite.chat_complete(i, t))
            record.artifacts["parsed_prompt.json"] = str(io.write_json(out / "parsed_prompt.json", parsed.to_wire()))
    if not record.error:
        with stage("layout"):
            run, layout, objects, attrs, attempts, deficit = seed_search(parsed, config, suite)
            record.seed_used, record.seed_attempts, record.deficit_repaired = run.seed, attempts, deficit
            summary = build_summary(layout, {w: wa.map for w, wa in objects.items()}, attrs)
            record.artifacts["initial.png"] = str(io.save_png(out / "initial.png", run.image))
            record.artifacts["layout.json"] = str(io.write_json(out / "layout.json", io.layout_to_wire(layout)))
            record.artifacts["segments.json"] = str(io.write_json(out / "segments.json", summary))
            record.artifacts["layout.png"] = str(io.save_png(out / "layout.png", render_layout(run.image, layout)))
    return _finish(record, out)


def _safe(word: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in word) or "word"


def _finish(record: RunRecord, out: Path) -> RunRecord:
    io.write_json(out / "run.json", record.to_dict())
    return record
