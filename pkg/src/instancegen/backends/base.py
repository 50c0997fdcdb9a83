"""Backend contracts, shared record types and call guards."""

from __future__ import annotations

import concurrent.futures
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 120.0


class BackendError(RuntimeError):
    """A backend could not produce a result."""


class BackendUnavailable(BackendError):
    pass


class BackendTimeout(BackendError):
    pass


class ScriptExhausted(BackendError):
    """A scripted fake was called more times than it has replies."""


class EmptyResponse(BackendError):
    pass


class JudgeParseError(BackendError):
    """The judge did not answer yes or no, even after a reprompt."""


class HookError(BackendError):
    """A guidance hook raised or returned a non-finite value."""


class ValidationError(ValueError):
    """Backend output violates its contract."""


class CaptureRangeError(ValueError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    num_steps: int = 26
    guidance_scale: float = 4.0

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")


@dataclass(frozen=True)
class AttentionCapture:
    """Which attention maps to keep from a run (inclusive ranges).

    ``branch`` selects the classifier-free-guidance branch the cross maps are
    read from: ``"conditional"`` or ``"combined"`` (mean of both branches).
    """

    layers: tuple[int, int] = (2, 20)
    timesteps: tuple[int, int] = (0, 25)
    self_layers: tuple[int, int] | None = None
    self_timesteps: tuple[int, int] | None = None
    branch: str = "conditional"

    def __post_init__(self):
        if self.branch not in ("conditional", "combined"):
            raise ValueError(f"unknown capture branch {self.branch!r}")


def _irange(bounds):
    lo, hi = bounds
    return list(range(lo, hi + 1))


def check_capture(capture: AttentionCapture, num_layers: int, num_steps: int) -> None:
    pairs = [("layers", capture.layers, num_layers), ("timesteps", capture.timesteps, num_steps)]
    if capture.self_layers is not None:
        pairs.append(("self_layers", capture.self_layers, num_layers))
    if capture.self_timesteps is not None:
        pairs.append(("self_timesteps", capture.self_timesteps, num_steps))
    for name, (lo, hi), limit in pairs:
        if not (0 <= lo <= hi < limit):
            raise CaptureRangeError(f"capture {name} [{lo}, {hi}] outside [0, {limit - 1}]")


_WORD_RE = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")


def tokenize(prompt: str) -> list[str]:
    """Lower-cased word tokens; index 0 of a record is reserved for <start>."""
    return _WORD_RE.findall(prompt.lower())


@dataclass
class AttentionRecord:
    """Captured attention from one diffusion run.

    ``cross`` is dense: ``cross[li, ti, j]`` is the map of token ``j`` at
    ``layers[li]`` and ``timesteps[ti]``.
    """

    cross: np.ndarray
    layers: tuple[int, ...]
    timesteps: tuple[int, ...]
    tokens: list[str]
    token_grouping: dict[str, list[int]]
    self_maps: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    @property
    def attn_resolution(self) -> tuple[int, int]:
        return tuple(self.cross.shape[-2:])

    def cross_map(self, layer: int, timestep: int, token: int) -> np.ndarray:
        return self.cross[self.layers.index(layer), self.timesteps.index(timestep), token]

    def keys(self):
        for layer in self.layers:
            for t in self.timesteps:
                for j in range(len(self.tokens)):
                    yield (layer, t, j)

    def tokens_for(self, word: str) -> list[int]:
        """Token indices for a word, or for every word of a multi-word phrase."""
        if word in self.token_grouping:
            return list(self.token_grouping[word])
        out: list[int] = []
        for part in tokenize(word):
            for j in self.token_grouping.get(part, []):
                if j not in out:
                    out.append(j)
        return out


@dataclass
class DiffusionRun:
    prompt: str
    image: np.ndarray  # (H, W, 3) uint8
    latents: list[np.ndarray]
    attention: AttentionRecord
    seed: int
    num_steps: int
    guidance_scale: float
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def image_size(self) -> tuple[int, int]:
        return tuple(self.image.shape[:2])


class LatentView(Protocol):
    """What a latent-loss hook sees at one optimization iteration."""

    z: np.ndarray

    def cross_attention(self) -> np.ndarray:
        """Per-token maps ``(n_tokens, h, w)`` for the current latent."""

    def backprop(self, grad_maps: np.ndarray) -> np.ndarray:
        """Vector-Jacobian product: d(loss)/d(maps) -> d(loss)/d(z)."""


class GuidanceHooks(Protocol):
    iterations: Mapping[int, int]
    learning_rate: float

    def latent_loss(self, t: int, iteration: int, view: LatentView) -> tuple[float, np.ndarray]: ...

    def cross_transform(self, t: int, layer: int, scores: np.ndarray) -> np.ndarray: ...

    def self_transform(self, t: int, layer: int, probs: np.ndarray) -> np.ndarray: ...


class DiffusionBackend(Protocol):
    num_layers: int
    attn_resolution: tuple[int, int]
    image_size: tuple[int, int]

    def generate(self, prompt: str, seed: int, config: GenerationConfig,
                 capture: AttentionCapture) -> DiffusionRun: ...

    def guided_generate(self, prompt: str, seed: int, config: GenerationConfig,
                        capture: AttentionCapture, hooks: GuidanceHooks) -> DiffusionRun: ...


class Detector(Protocol):
    def detect(self, image: np.ndarray) -> list[tuple[np.ndarray, str, float]]: ...


class PointSegmenter(Protocol):
    def segment(self, image: np.ndarray, point: tuple[int, int]) -> np.ndarray: ...


class ChatModel(Protocol):
    def complete(self, instruction: str, transcript: Sequence[tuple[str, str]]) -> str: ...


class Judge(Protocol):
    def ask(self, image: Any, question: str) -> str: ...


class Similarity(Protocol):
    def score(self, image: Any, prompt: str) -> float: ...


# ---------------------------------------------------------------------------
# call guards and contract checks


def guarded_call(fn: Callable, *args, timeout: float | None = DEFAULT_TIMEOUT,
                 retries: int = 1, **kwargs):
    """Run ``fn`` with a wall-clock timeout and at most ``retries`` retries.

    Only timeouts, unavailability and empty responses are retried; anything
    else propagates unchanged.
    """
    last: Exception | None = None
    for attempt in range(retries + 1):
        try:
            if timeout is None:
                return fn(*args, **kwargs)
            pool = concurrent.futures.ThreadPoolExecutor(max_workers=1)
            future = pool.submit(fn, *args, **kwargs)
            try:
                return future.result(timeout=timeout)
            except concurrent.futures.TimeoutError:
                raise BackendTimeout(f"{getattr(fn, '__qualname__', fn)} timed out after {timeout}s") from None
            finally:
                # don't block on a hung worker; it is abandoned
                pool.shutdown(wait=False)
        except (BackendTimeout, BackendUnavailable, EmptyResponse) as exc:
            last = exc
            log.warning("backend call failed (attempt %d/%d): %s", attempt + 1, retries + 1, exc)
        except (ScriptExhausted, ValidationError):
            raise
    assert last is not None
    raise last


def validate_detections(detections, image_shape) -> list[tuple[np.ndarray, str, float]]:
    h, w = image_shape[:2]
    out = []
    for k, (mask, label, conf) in enumerate(detections):
        mask = np.asarray(mask)
        if mask.shape != (h, w):
            raise ValidationError(f"detection {k}: mask shape {mask.shape} != image {(h, w)}")
        if mask.dtype != bool:
            if not np.isin(mask, (0, 1)).all():
                raise ValidationError(f"detection {k}: mask is not binary")
            mask = mask.astype(bool)
        conf = float(conf)
        if not (0.0 <= conf <= 1.0) or not np.isfinite(conf):
            raise ValidationError(f"detection {k}: confidence {conf} outside [0, 1]")
        out.append((mask, str(label), conf))
    return out


_YES_NO = re.compile(r"^\W*(yes|no)\b", re.IGNORECASE)


def parse_yes_no(reply: str) -> bool | None:
    m = _YES_NO.match(reply or "")
    if m is None:
        return None
    return m.group(1).lower() == "yes"


def image_key(image) -> str:
    """Stable identifier for an image argument (file stem or content hash)."""
    if isinstance(image, (str, Path)):
        return Path(image).stem
    import hashlib

    return hashlib.sha1(np.ascontiguousarray(image).tobytes()).hexdigest()[:16]
