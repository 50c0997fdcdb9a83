"""External-model contracts, guarded call wrappers and the backend registry.

Every pipeline stage reaches models through the module-level functions here
(``diffusion_generate``, ``detect_instances`` ...). They add the timeout and
retry policy and check each result against its contract, so the fakes and
the real adapters are held to the same rules.
"""

from __future__ import annotations

import importlib
import importlib.util
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .base import (
    DEFAULT_TIMEOUT,
    AttentionCapture,
    AttentionRecord,
    BackendError,
    BackendTimeout,
    BackendUnavailable,
    CaptureRangeError,
    DiffusionRun,
    EmptyResponse,
    GenerationConfig,
    HookError,
    JudgeParseError,
    ScriptExhausted,
    ValidationError,
    check_capture,
    guarded_call,
    image_key,
    parse_yes_no,
    tokenize,
    validate_detections,
)

log = logging.getLogger(__name__)

__all__ = [
    "AttentionCapture", "AttentionRecord", "BackendError", "BackendSuite", "BackendTimeout",
    "BackendUnavailable", "CaptureRangeError", "DiffusionRun", "EmptyResponse",
    "GenerationConfig", "HookError", "JudgeParseError", "ScriptExhausted", "ValidationError",
    "build_suite", "chat_complete", "detect_instances", "diffusion_generate",
    "diffusion_guided_generate", "judge_yes_no", "load_backend", "segment_at_point",
    "similarity_score", "similarity_scores", "tokenize", "image_key",
]

KINDS = ("diffusion", "detector", "point_segmenter", "chat", "judge", "similarity")
PLUGIN_DIR_ENV = "INSTANCEGEN_BACKEND_DIR"
REPROMPT_SUFFIX = "\nAnswer with a single word: yes or no."


# ---------------------------------------------------------------------------
# contract checks


def _check_run(run: DiffusionRun, config: GenerationConfig, capture: AttentionCapture) -> DiffusionRun:
    if len(run.latents) != config.num_steps + 1:
        raise ValidationError(f"expected {config.num_steps + 1} latents, got {len(run.latents)}")
    rec = run.attention
    want_layers = tuple(range(capture.layers[0], capture.layers[1] + 1))
    want_steps = tuple(range(capture.timesteps[0], capture.timesteps[1] + 1))
    if tuple(rec.layers) != want_layers or tuple(rec.timesteps) != want_steps:
        raise ValidationError("attention record does not match the capture spec")
    if not np.all(np.isfinite(rec.cross)) or np.any(rec.cross < 0):
        raise ValidationError("cross-attention values must be finite and non-negative")
    n_tok = rec.cross.shape[2]
    for word, idx in rec.token_grouping.items():
        if any(j < 0 or j >= n_tok for j in idx):
            raise ValidationError(f"token grouping for {word!r} points outside the record")
    img = np.asarray(run.image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValidationError(f"image must be HxWx3 uint8, got {img.shape} {img.dtype}")
    return run


def _check_generation_args(backend, config: GenerationConfig, capture: AttentionCapture) -> None:
    if config.num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    check_capture(capture, backend.num_layers, config.num_steps)


# ---------------------------------------------------------------------------
# operations


def diffusion_generate(backend, prompt: str, seed: int, config: GenerationConfig = GenerationConfig(),
                       capture: AttentionCapture = AttentionCapture(), *,
                       timeout: float | None = DEFAULT_TIMEOUT, retries: int = 1) -> DiffusionRun:
    _check_generation_args(backend, config, capture)
    run = guarded_call(backend.generate, prompt, seed, config, capture, timeout=timeout, retries=retries)
    return _check_run(run, config, capture)


def diffusion_guided_generate(backend, prompt: str, seed: int, config: GenerationConfig,
                              capture: AttentionCapture, hooks, *,
                              timeout: float | None = DEFAULT_TIMEOUT) -> DiffusionRun:
    """Guided sampling. Never retried: hooks carry per-call counters."""
    _check_generation_args(backend, config, capture)
    run = guarded_call(backend.guided_generate, prompt, seed, config, capture, hooks,
                       timeout=timeout, retries=0)
    return _check_run(run, config, capture)


def detect_instances(detector, image, *, timeout: float | None = DEFAULT_TIMEOUT, retries: int = 1):
    image = np.asarray(image)
    if image.size == 0:
        raise ValueError("image is empty")
    raw = guarded_call(detector.detect, image, timeout=timeout, retries=retries)
    return validate_detections(raw, image.shape)


def segment_at_point(segmenter, image, point: tuple[int, int], *,
                     timeout: float | None = DEFAULT_TIMEOUT, retries: int = 1) -> np.ndarray:
    image = np.asarray(image)
    h, w = image.shape[:2]
    r, c = int(point[0]), int(point[1])
    if not (0 <= r < h and 0 <= c < w):
        raise ValueError(f"point {point} outside image of size {(h, w)}")
    mask = np.asarray(guarded_call(segmenter.segment, image, (r, c), timeout=timeout, retries=retries))
    if mask.shape != (h, w):
        raise ValidationError(f"segment mask shape {mask.shape} != image {(h, w)}")
    if mask.dtype != bool:
        if not np.isin(mask, (0, 1)).all():
            raise ValidationError("segment mask is not binary")
        mask = mask.astype(bool)
    if mask.any() and not mask[r, c]:
        raise ValidationError(f"segment mask does not contain its prompt point {point}")
    return mask


def chat_complete(chat, instruction: str, transcript: Sequence[tuple[str, str]] = (), *,
                  timeout: float | None = DEFAULT_TIMEOUT, retries: int = 1) -> str:
    log.info("chat call: instruction %d chars, %d transcript turns", len(instruction), len(transcript))

    def call():
        reply = chat.complete(instruction, list(transcript))
        if reply is None or not str(reply).strip():
            raise EmptyResponse("chat backend returned an empty response")
        return str(reply)

    return guarded_call(call, timeout=timeout, retries=retries)


def judge_yes_no(judge, image, question: str, *, timeout: float | None = DEFAULT_TIMEOUT,
                 retries: int = 1) -> bool:
    """Yes/no answer; one reprompt on an unparseable reply, then ``JudgeParseError``."""
    reply = guarded_call(judge.ask, image, question, timeout=timeout, retries=retries)
    answer = parse_yes_no(reply)
    if answer is None:
        log.warning("judge reply %r is not yes/no; reprompting", reply)
        reply = guarded_call(judge.ask, image, question + REPROMPT_SUFFIX, timeout=timeout, retries=retries)
        answer = parse_yes_no(reply)
    if answer is None:
        raise JudgeParseError(f"judge did not answer yes/no to {question!r}: {reply!r}")
    return answer


def _check_score(value) -> float:
    value = float(value)
    if not np.isfinite(value) or not (0.0 <= value <= 1.0):
        raise ValidationError(f"similarity score {value} outside [0, 1]")
    return value


def similarity_score(scorer, image, prompt: str, *, timeout: float | None = DEFAULT_TIMEOUT,
                     retries: int = 1) -> float:
    return _check_score(guarded_call(scorer.score, image, prompt, timeout=timeout, retries=retries))


def similarity_scores(scorer, images: Sequence, prompts: Sequence[str], *,
                      timeout: float | None = DEFAULT_TIMEOUT, retries: int = 1) -> list[float]:
    """Scores for aligned ``images``/``prompts``, in input order."""
    if len(images) != len(prompts):
        raise ValueError("images and prompts must have equal length")
    batch = getattr(scorer, "score_batch", None)
    if batch is not None:
        out = list(guarded_call(batch, list(images), list(prompts), timeout=timeout, retries=retries))
        if len(out) != len(prompts):
            raise ValidationError(f"batch scorer returned {len(out)} scores for {len(prompts)} prompts")
        return [_check_score(v) for v in out]
    return [similarity_score(scorer, im, p, timeout=timeout, retries=retries) for im, p in zip(images, prompts)]


# ---------------------------------------------------------------------------
# suite


@dataclass
class BackendSuite:
    """One handle per model kind. Handles are probed lazily, once, before first use."""

    diffusion: Any = None
    detector: Any = None
    point_segmenter: Any = None
    chat: Any = None
    judge: Any = None
    similarity: Any = None
    timeout: float | None = DEFAULT_TIMEOUT
    retries: int = 1
    _ready: set = field(default_factory=set, repr=False)

    def require(self, kind: str):
        handle = getattr(self, kind)
        if handle is None:
            raise BackendUnavailable(f"no {kind} backend configured")
        if kind not in self._ready:
            probe = getattr(handle, "probe", None)
            try:
                ok = probe() if probe is not None else True
            except Exception as exc:
                raise BackendUnavailable(f"{kind} backend failed its probe: {exc}") from exc
            if not ok:
                raise BackendUnavailable(f"{kind} backend failed its probe")
            self._ready.add(kind)
        return handle

    def probe_all(self) -> dict[str, bool]:
        out = {}
        for kind in KINDS:
            if getattr(self, kind) is None:
                continue
            try:
                self.require(kind)
                out[kind] = True
            except BackendUnavailable:
                out[kind] = False
        return out

    # bound conveniences -----------------------------------------------------

    def generate(self, prompt, seed, config=GenerationConfig(), capture=AttentionCapture()):
        return diffusion_generate(self.require("diffusion"), prompt, seed, config, capture,
                                  timeout=self.timeout, retries=self.retries)

    def guided_generate(self, prompt, seed, config, capture, hooks):
        return diffusion_guided_generate(self.require("diffusion"), prompt, seed, config, capture, hooks,
                                         timeout=self.timeout)

    def detect(self, image):
        return detect_instances(self.require("detector"), image, timeout=self.timeout, retries=self.retries)

    def segment(self, image, point):
        return segment_at_point(self.require("point_segmenter"), image, point,
                                timeout=self.timeout, retries=self.retries)

    def chat_complete(self, instruction, transcript=()):
        return chat_complete(self.require("chat"), instruction, transcript,
                             timeout=self.timeout, retries=self.retries)

    def judge_yes_no(self, image, question):
        return judge_yes_no(self.require("judge"), image, question, timeout=self.timeout, retries=self.retries)

    def similarity_score(self, image, prompt):
        return similarity_score(self.require("similarity"), image, prompt,
                                timeout=self.timeout, retries=self.retries)


# ---------------------------------------------------------------------------
# registry


def _synthetic_factories() -> dict[str, dict[str, Callable[..., Any]]]:
    from . import synthetic as s

    def diffusion(fixture=None, **opts):
        return s.SyntheticDiffusion.from_fixture(fixture, **opts) if fixture else s.SyntheticDiffusion(**opts)

    def scripted_chat(fixture=None, replies=None):
        return s.ScriptedChat.from_fixture(fixture) if fixture else s.ScriptedChat(replies or [])

    def scripted_judge(fixture=None, answers=None, default=None):
        if fixture:
            import json

            data = json.loads(Path(fixture).read_text())
            return s.ScriptedJudge(data.get("answers"), data.get("default"))
        return s.ScriptedJudge(answers, default)

    return {
        "diffusion": {"synthetic": diffusion},
        "detector": {"synthetic": s.SyntheticDetector, "scripted": s.ScriptedDetector},
        "point_segmenter": {"synthetic": s.BlobPointSegmenter},
        "chat": {"synthetic": s.RuleBasedChat, "rule-based": s.RuleBasedChat, "scripted": scripted_chat},
        "judge": {"synthetic": s.HashJudge, "hash": s.HashJudge, "scripted": scripted_judge},
        "similarity": {"synthetic": s.HashSimilarity, "hash": s.HashSimilarity,
                       "constant": s.ConstantSimilarity},
    }


def _real_factories() -> dict[str, dict[str, Callable[..., Any]]]:
    def lazy(name):
        def make(**opts):
            from . import adapters

            return getattr(adapters, name)(**opts)
        return make

    return {
        "detector": {"maskrcnn": lazy("TorchvisionMaskRCNN")},
        "point_segmenter": {"sam2": lazy("SAM2PointSegmenter")},
        "chat": {"openai": lazy("OpenAIChat")},
        "judge": {"openai": lazy("OpenAIJudge")},
        "similarity": {"vqascore": lazy("VQAScoreSimilarity")},
    }


def _plugin_factories() -> dict[str, dict[str, Callable[..., Any]]]:
    """Factories from ``*.py`` files in ``$INSTANCEGEN_BACKEND_DIR``.

    A plugin file exposes ``BACKENDS = {kind: {name: factory}}``.
    """
    root = os.environ.get(PLUGIN_DIR_ENV)
    out: dict[str, dict[str, Callable]] = {}
    if not root:
        return out
    for path in sorted(Path(root).glob("*.py")):
        spec = importlib.util.spec_from_file_location(f"instancegen_plugin_{path.stem}", path)
        module = importlib.util.module_from_spec(spec)
        try:
            spec.loader.exec_module(module)
        except Exception as exc:
            log.warning("skipping backend plugin %s: %s", path, exc)
            continue
        for kind, table in getattr(module, "BACKENDS", {}).items():
            out.setdefault(kind, {}).update(table)
    return out


def available_backends() -> dict[str, list[str]]:
    merged: dict[str, set] = {k: set() for k in KINDS}
    for table in (_synthetic_factories(), _real_factories(), _plugin_factories()):
        for kind, names in table.items():
            merged.setdefault(kind, set()).update(names)
    return {k: sorted(v) for k, v in merged.items()}


def load_backend(kind: str, spec) -> Any:
    """Instantiate one backend.

    ``spec`` is a registered name, a ``"package.module:Class"`` path, or a
    mapping ``{"name": ..., "options": {...}}`` around either form.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown backend kind {kind!r}")
    if spec is None:
        return None
    options: dict = {}
    if isinstance(spec, Mapping):
        options = dict(spec.get("options", {}))
        spec = spec["name"]
    if not isinstance(spec, str):
        return spec  # already a handle
    if ":" in spec:
        module_name, _, attr = spec.partition(":")
        try:
            factory = getattr(importlib.import_module(module_name), attr)
        except (ImportError, AttributeError) as exc:
            raise BackendUnavailable(f"cannot import {spec!r}: {exc}") from exc
        return factory(**options)
    for table in (_plugin_factories(), _synthetic_factories(), _real_factories()):
        factory = table.get(kind, {}).get(spec)
        if factory is not None:
            try:
                return factory(**options)
            except ImportError as exc:
                raise BackendUnavailable(f"{kind} backend {spec!r} needs a missing package: {exc}") from exc
            except (BackendError, ValueError, TypeError):
                raise
            except Exception as exc:  # weight downloads, device setup, ...
                raise BackendUnavailable(f"{kind} backend {spec!r} failed to start: {exc}") from exc
    raise BackendUnavailable(f"no {kind} backend named {spec!r}")


SYNTHETIC_SET = {"diffusion": "synthetic", "detector": "synthetic", "point_segmenter": "synthetic",
                 "chat": "synthetic", "judge": "synthetic", "similarity": "synthetic"}
REAL_SET = {"diffusion": None, "detector": "maskrcnn", "point_segmenter": "sam2",
            "chat": "openai", "judge": "openai", "similarity": "vqascore"}


def build_suite(selection: Mapping[str, Any] | None = None, backend_set: str = "synthetic",
                timeout: float | None = DEFAULT_TIMEOUT, retries: int = 1) -> BackendSuite:
    """Suite from a backend set, with per-kind overrides from ``selection``."""
    if backend_set not in ("synthetic", "real"):
        raise ValueError(f"unknown backend set {backend_set!r}")
    chosen = dict(SYNTHETIC_SET if backend_set == "synthetic" else REAL_SET)
    chosen.update({k: v for k, v in (selection or {}).items() if k in KINDS})
    handles = {kind: load_backend(kind, spec) for kind, spec in chosen.items()}
    names = {f.name for f in fields(BackendSuite)}
    return BackendSuite(**{k: v for k, v in handles.items() if k in names}, timeout=timeout, retries=retries)
