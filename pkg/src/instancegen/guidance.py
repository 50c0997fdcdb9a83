"""Assignment-conditioned guidance: losses on cross-attention, attention masking,
and the latent-optimization schedule, packaged as backend hooks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels
from .attention import downsample_mask
from .backends import AttentionCapture, GenerationConfig, HookError, diffusion_guided_generate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GuidanceWeights:
    foreground_pixel_weight: float = 1.5
    background_pixel_weight: float = 1.0
    attr_weight: float = 0.8
    bg_weight: float = 0.3
    delta: float = -1.5
    clamp_epsilon: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.clamp_epsilon < 0.5:
            raise ValueError("clamp_epsilon must lie in (0, 0.5)")


Window = tuple[tuple[int, int], tuple[int, int]]  # (timesteps, layers), inclusive


def _in_window(window: Window | None, t: int, layer: int) -> bool:
    if window is None:
        return False
    (t0, t1), (l0, l1) = window
    return t0 <= t <= t1 and l0 <= layer <= l1


@dataclass(frozen=True)
class OptimizationSchedule:
    optimize_window: tuple[int, int] = (0, 20)
    base_iterations: int = 1
    extra_iterations: Mapping[int, int] = field(default_factory=lambda: {0: 15, 5: 15, 10: 5})
    learning_rate: float = 0.015
    self_mask_window: Window | None = ((0, 3), (10, 21))
    cross_mask_window: Window | None = ((0, 22), (0, 21))
    loss_layers: tuple[int, int] = (2, 20)

    def __post_init__(self):
        if self.base_iterations < 0 or any(v < 0 for v in self.extra_iterations.values()):
            raise ValueError("iteration counts must be >= 0")
        lo, hi = self.optimize_window
        if lo > hi or lo < 0:
            raise ValueError(f"bad optimize window {self.optimize_window}")

    def iterations(self) -> dict[int, int]:
        lo, hi = self.optimize_window
        out = {t: self.base_iterations for t in range(lo, hi + 1)}
        for t, n in self.extra_iterations.items():
            out[int(t)] = out.get(int(t), 0) + int(n)
        return {t: n for t, n in out.items() if n > 0}

    def total_iterations(self) -> int:
        return sum(self.iterations().values())

    def check_against(self, num_steps: int, num_layers: int) -> None:
        if self.optimize_window[1] > num_steps:
            raise ValueError("optimize window extends past the last timestep")
        for name in ("self_mask_window", "cross_mask_window"):
            w = getattr(self, name)
            if w is None:
                continue
            (t0, t1), (l0, l1) = w
            if not (0 <= t0 <= t1 <= num_steps and 0 <= l0 <= l1 < num_layers):
                raise ValueError(f"{name} {w} outside timesteps [0, {num_steps}] x layers [0, {num_layers - 1}]")


# ---------------------------------------------------------------------------
# losses


def _check_pair(C, m):
    C = np.asarray(C, dtype=np.float64)
    m = np.asarray(m)
    if C.shape != m.shape:
        raise ValueError(f"map {C.shape} and mask {m.shape} differ in shape")
    return np.ascontiguousarray(C), np.ascontiguousarray(m.astype(np.uint8))


def object_loss_grad(C, m, weights: GuidanceWeights = GuidanceWeights()) -> tuple[float, np.ndarray]:
    """Weighted binary cross-entropy and its gradient w.r.t. ``C``."""
    C, m = _check_pair(C, m)
    return kernels.weighted_bce(C, m, weights.foreground_pixel_weight, weights.background_pixel_weight,
                                weights.clamp_epsilon)


def object_loss(C, m, weights: GuidanceWeights = GuidanceWeights()) -> float:
    return object_loss_grad(C, m, weights)[0]


def attribute_loss_grad(C, m, weights: GuidanceWeights = GuidanceWeights()) -> tuple[float, np.ndarray]:
    """Cross-entropy over the attribute's segments only."""
    C, m = _check_pair(C, m)
    return kernels.masked_ce(C, m, weights.clamp_epsilon)


def attribute_loss(C, m, weights: GuidanceWeights = GuidanceWeights()) -> float:
    return attribute_loss_grad(C, m, weights)[0]


def background_loss_grad(z_ref, z, background) -> tuple[float, np.ndarray]:
    """Mean squared latent drift over background pixels (and channels).

    Latents are ``(C, h, w)`` or ``(h, w)``; ``background`` is ``(h, w)``.
    """
    z_ref = np.asarray(z_ref, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if z_ref.shape != z.shape:
        raise ValueError("reference and live latents differ in shape")
    B = np.asarray(background, dtype=bool)
    if B.shape != z.shape[-2:]:
        raise ValueError("background mask does not match the latent grid")
    n = int(B.sum()) * (z.shape[0] if z.ndim == 3 else 1)
    if n == 0:
        return 0.0, np.zeros_like(z)
    diff = np.where(B, z_ref - z, 0.0)
    return float(np.sum(diff * diff) / n), -2.0 * diff / n


def background_loss(z_ref, z, background) -> float:
    return background_loss_grad(z_ref, z, background)[0]


def total_loss(obj_losses, attr_losses, bg_loss: float, weights: GuidanceWeights = GuidanceWeights()) -> float:
    return float(sum(obj_losses)) + weights.attr_weight * float(sum(attr_losses)) + weights.bg_weight * float(bg_loss)


# ---------------------------------------------------------------------------
# attention transforms


def cross_attention_transform(scores, suppress, delta: float) -> np.ndarray:
    """Multiply pre-softmax scores by ``delta`` where ``suppress`` is set."""
    scores = np.asarray(scores)
    return np.where(np.asarray(suppress, dtype=bool), scores * delta, scores)


def self_attention_transform(S, foreground) -> np.ndarray:
    """Zero every query/key pair that crosses the foreground/background split.

    ``S`` is ``(h*w, h*w)`` with rows as queries; ``foreground`` is ``(h, w)``.
    """
    f = np.asarray(foreground, dtype=bool).ravel()
    S = np.asarray(S)
    if S.shape != (f.size, f.size):
        raise ValueError(f"self-attention shape {S.shape} does not match {f.size} pixels")
    return np.where(f[:, None] == f[None, :], S, 0.0).astype(S.dtype, copy=False)


# ---------------------------------------------------------------------------
# targets from an assignment


@dataclass
class GuidanceTargets:
    """Attention-resolution masks derived from a plan and a layout."""

    object_masks: dict[str, np.ndarray]
    attribute_masks: dict[str, np.ndarray]
    attribute_objects: dict[str, str]
    segment_masks: dict[str, np.ndarray]
    foreground: np.ndarray

    @property
    def background(self) -> np.ndarray:
        return ~self.foreground

    @classmethod
    def from_plan(cls, plan, layout, grid: tuple[int, int], delete_word: str = "delete") -> "GuidanceTargets":
        objects: dict[str, np.ndarray] = {}
        attrs: dict[str, np.ndarray] = {}
        owners: dict[str, str] = {}
        segments: dict[str, np.ndarray] = {}
        fg = np.zeros(grid, dtype=bool)
        for sid, instr in plan.segments.items():
            if instr.object == delete_word:
                continue
            cells = downsample_mask(layout.mask_by_id(int(sid)).pixels, grid)
            segments[sid] = cells
            fg |= cells
            objects.setdefault(instr.object, np.zeros(grid, dtype=bool))
            objects[instr.object] |= cells
            for a in instr.attributes:
                attrs.setdefault(a, np.zeros(grid, dtype=bool))
                attrs[a] |= cells
                owners[a] = instr.object
        return cls(objects, attrs, owners, segments, fg)

    def suppression_masks(self, token_groups: Mapping[str, list[int]], n_tokens: int,
                          grid: tuple[int, int]) -> np.ndarray | None:
        """Per-token boolean suppression masks ``(n_tokens, h, w)``.

        Object tokens are suppressed outside their own segments (other
        segments and background); attribute tokens only on foreground
        segments that do not carry the attribute. Tokens claimed by an object
        are not re-claimed by an attribute.
        """
        out = np.zeros((n_tokens, *grid), dtype=bool)
        claimed: set[int] = set()
        for word, own in self.object_masks.items():
            for j in token_groups.get(word, []):
                out[j] = ~own
                claimed.add(j)
        for attr, own in self.attribute_masks.items():
            for j in token_groups.get(attr, []):
                if j in claimed:
                    continue
                out[j] = self.foreground & ~own
                claimed.add(j)
        return out if out.any() else None


# ---------------------------------------------------------------------------
# hooks


@dataclass
class LossRecord:
    timestep: int
    iteration: int
    obj: float
    att: float
    bg: float
    total: float


class GuidanceError(RuntimeError):
    """Guided generation stopped; ``diagnostics`` describes the failing step."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


class AssignmentGuidance:
    """Hook object handed to ``diffusion_guided_generate``.

    Counts every loss call and every in-window transform application so the
    schedule can be audited after a run.
    """

    def __init__(self, targets: GuidanceTargets, token_groups: Mapping[str, list[int]], n_tokens: int,
                 reference_latents, schedule: OptimizationSchedule = OptimizationSchedule(),
                 weights: GuidanceWeights = GuidanceWeights()):
        self.targets = targets
        self.schedule = schedule
        self.weights = weights
        self.iterations = schedule.iterations()
        self.learning_rate = schedule.learning_rate
        self.loss_layers = schedule.loss_layers
        self.reference = list(reference_latents)
        grid = targets.foreground.shape
        self.word_tokens = {w: list(token_groups.get(w, [])) for w in targets.object_masks}
        self.attr_tokens = {a: list(token_groups.get(a, [])) for a in targets.attribute_masks}
        for name, toks in {**self.word_tokens, **self.attr_tokens}.items():
            if not toks:
                raise ValueError(f"no prompt tokens for {name!r}")
        self.suppress = targets.suppression_masks(token_groups, n_tokens, grid)
        self.trace: list[LossRecord] = []
        self.loss_calls = 0
        self.cross_applied: list[tuple[int, int]] = []
        self.self_applied: list[tuple[int, int]] = []

    # -- losses -------------------------------------------------------------

    def _word_map(self, maps, tokens):
        sub = maps[tokens]
        pick = np.argmax(sub, axis=0)
        return np.take_along_axis(sub, pick[None], axis=0)[0], pick

    def latent_loss(self, t: int, iteration: int, view):
        self.loss_calls += 1
        w = self.weights
        maps = np.asarray(view.cross_attention(), dtype=np.float64)
        dmaps = np.zeros_like(maps)
        obj_terms, att_terms = [], []
        for word, mask in self.targets.object_masks.items():
            toks = self.word_tokens[word]
            C, pick = self._word_map(maps, toks)
            loss, g = object_loss_grad(C, mask, w)
            obj_terms.append(loss)
            for k, j in enumerate(toks):
                dmaps[j] += np.where(pick == k, g, 0.0)
        for attr, mask in self.targets.attribute_masks.items():
            toks = self.attr_tokens[attr]
            C, pick = self._word_map(maps, toks)
            loss, g = attribute_loss_grad(C, mask, w)
            att_terms.append(loss)
            for k, j in enumerate(toks):
                dmaps[j] += w.attr_weight * np.where(pick == k, g, 0.0)
        z_ref = self.reference[t] if t < len(self.reference) else self.reference[-1]
        bg, dz_bg = background_loss_grad(z_ref, view.z, self.targets.background)
        total = total_loss(obj_terms, att_terms, bg, w)
        rec = LossRecord(t, iteration, float(sum(obj_terms)), float(sum(att_terms)), bg, total)
        if not np.isfinite(total):
            raise GuidanceError(f"non-finite loss at t={t}, iteration={iteration}", rec.__dict__)
        self.trace.append(rec)
        dz = np.asarray(view.backprop(dmaps)) + w.bg_weight * dz_bg
        return total, dz

    # -- transforms ---------------------------------------------------------

    def cross_transform(self, t: int, layer: int, scores):
        if self.suppress is None or not _in_window(self.schedule.cross_mask_window, t, layer):
            return scores
        self.cross_applied.append((t, layer))
        return cross_attention_transform(scores, self.suppress, self.weights.delta)

    def self_transform(self, t: int, layer: int, probs):
        if not _in_window(self.schedule.self_mask_window, t, layer):
            return probs
        self.self_applied.append((t, layer))
        return self_attention_transform(probs, self.targets.foreground)


def run_guided_generation(prompt: str, plan, layout, reference, diffusion,
                          schedule: OptimizationSchedule = OptimizationSchedule(),
                          weights: GuidanceWeights = GuidanceWeights(),
                          capture: AttentionCapture | None = None):
    """Re-generate ``prompt`` with the reference run's seed under the plan's guidance.

    Returns ``(run, hooks)``; ``hooks.trace`` holds the per-iteration losses.
    """
    rec = reference.attention
    grid = rec.attn_resolution
    schedule.check_against(reference.num_steps, diffusion.num_layers)
    targets = GuidanceTargets.from_plan(plan, layout, grid)
    groups = {w: rec.tokens_for(w) for w in [*targets.object_masks, *targets.attribute_masks]}
    hooks = AssignmentGuidance(targets, groups, len(rec.tokens), reference.latents, schedule, weights)
    config = GenerationConfig(reference.num_steps, reference.guidance_scale)
    if capture is None:
        capture = AttentionCapture(layers=(min(rec.layers), max(rec.layers)),
                                   timesteps=(min(rec.timesteps), max(rec.timesteps)))
    try:
        run = diffusion_guided_generate(diffusion, prompt, reference.seed, config, capture, hooks)
    except HookError as exc:
        cause = exc.__cause__
        if isinstance(cause, GuidanceError):
            raise cause
        raise GuidanceError(str(exc), {"last": hooks.trace[-1].__dict__ if hooks.trace else None}) from exc
    return run, hooks
