"""Deterministic stand-ins for every external model.

The synthetic diffusion model renders "blob scenes": each counted object in
the prompt becomes a few soft discs in a small latent grid. Cross-attention is
a per-layer softmax over token keys, so maps have known ground truth and the
guidance losses have honest gradients with respect to the latent.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage as ndi

from .. import prompts
from ..text import parse_prompt_rules
from .base import (
    AttentionCapture,
    AttentionRecord,
    DiffusionRun,
    GenerationConfig,
    HookError,
    ScriptExhausted,
    check_capture,
    image_key,
    tokenize,
)

START = "<start>"
BACKGROUND_RGB = np.array([226.0, 221.0, 206.0])
_FUNCTION_WORDS = {
    "a", "an", "the", "and", "in", "on", "of", "with", "is", "are", "at", "to",
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "only", "other", "others", "rest", "them", "their", "its", "it", "for", "by",
    "while", "another", "each", "from", "image", "photo", "picture",
}


def _stable_seed(*parts) -> int:
    return zlib.crc32("\x1f".join(str(p) for p in parts).encode("utf-8"))


@dataclass(frozen=True)
class Blob:
    word: str
    row: float
    col: float
    radius: float
    attributes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {"word": self.word, "row": self.row, "col": self.col, "radius": self.radius}
        if self.attributes:
            d["attributes"] = list(self.attributes)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Blob":
        return cls(d["word"], float(d["row"]), float(d["col"]), float(d["radius"]),
                   tuple(d.get("attributes", ())))


def _softmax(x, axis):
    x = x - x.max(axis=axis, keepdims=True)
    np.exp(x, out=x)
    x /= x.sum(axis=axis, keepdims=True)
    return x


def place_blobs(requests: Sequence[tuple[str, int]], grid: tuple[int, int],
                rng: np.random.Generator, radius_range=(2.2, 3.0), gap: float = 3.0,
                tries: int = 400) -> list[Blob]:
    """Non-overlapping discs for ``(word, count)`` requests; drops what won't fit."""
    h, w = grid
    placed: list[Blob] = []
    for word, count in requests:
        for _ in range(count):
            r = float(rng.uniform(*radius_range))
            for _ in range(tries):
                row = float(rng.uniform(r + 1.0, h - r - 2.0))
                col = float(rng.uniform(r + 1.0, w - r - 2.0))
                if all(np.hypot(row - b.row, col - b.col) >= r + b.radius + gap for b in placed):
                    placed.append(Blob(word, round(row, 3), round(col, 3), round(r, 3)))
                    break
    return placed


class SyntheticDiffusion:
    """Toy latent diffusion model with real attention arithmetic.

    Parameters
    ----------
    attn_resolution : latent/attention grid size.
    scale : image pixels per attention pixel (integer).
    scenes : optional scripted scenes, ``{prompt: {seed or "*": [Blob, ...]}}``.
        Prompts without a script get a procedural scene whose instance counts
        deviate from the requested ones depending on the seed.
    """

    def __init__(self, attn_resolution=(24, 24), scale: int = 4, channels: int = 16,
                 num_layers: int = 22, scenes: Mapping | None = None,
                 count_jitter: Mapping[int, float] | None = None, noise: float = 0.35):
        self.attn_resolution = tuple(attn_resolution)
        self.scale = int(scale)
        self.image_size = (self.attn_resolution[0] * self.scale, self.attn_resolution[1] * self.scale)
        self.channels = channels
        self.num_layers = num_layers
        self.noise = noise
        self.count_jitter = dict(count_jitter or {-2: 0.1, -1: 0.3, 0: 0.45, 1: 0.15})
        self.scenes = {}
        for prompt, by_seed in (scenes or {}).items():
            self.scenes[prompt] = {
                k: [b if isinstance(b, Blob) else Blob.from_dict(b) for b in blobs]
                for k, blobs in by_seed.items()
            }
        self.cross_betas = 4.0 * (0.8 + 0.4 * np.arange(num_layers) / max(num_layers - 1, 1))
        self.self_beta = 1.0
        self.self_locality = 1.5
        self.value_gain = 2.0
        self.decode_beta = 4.0
        self.attribute_weight = 1.7
        self.step_size = 0.35
        h, w = self.attn_resolution
        rr, cc = np.divmod(np.arange(h * w), w)
        d2 = (rr[:, None] - rr[None, :]) ** 2 + (cc[:, None] - cc[None, :]) ** 2
        self._position_bias = -d2 / (2.0 * self.self_locality ** 2)
        self.calls = {"generate": 0, "guided_generate": 0}

    @classmethod
    def from_fixture(cls, path, **kwargs) -> "SyntheticDiffusion":
        """Load scripted scenes from JSON ``{"scenes": [{"prompt", "seed", "blobs"}]}``."""
        data = json.loads(Path(path).read_text())
        scenes: dict[str, dict] = {}
        for entry in data["scenes"]:
            seed = entry.get("seed", "*")
            scenes.setdefault(entry["prompt"], {})[seed if seed == "*" else int(seed)] = entry["blobs"]
        opts = {k: v for k, v in data.items() if k != "scenes"}
        opts.update(kwargs)
        return cls(scenes=scenes, **opts)

    def probe(self) -> bool:
        return True

    # -- scene ------------------------------------------------------------

    def scene(self, prompt: str, seed: int) -> list[Blob]:
        script = self.scenes.get(prompt)
        if script is not None:
            if seed in script:
                return list(script[seed])
            if "*" in script:
                return list(script["*"])
        rng = np.random.default_rng(_stable_seed("scene", prompt, seed))
        parsed = parse_prompt_rules(prompt)["objects"]
        deltas = sorted(self.count_jitter)
        probs = np.array([self.count_jitter[d] for d in deltas], dtype=float)
        probs /= probs.sum()
        requests = []
        for word, info in parsed.items():
            q = int(info["desired_quantity"])
            delta = int(rng.choice(deltas, p=probs))
            requests.append((word, max(1, q + delta)))
        blobs = place_blobs(requests, self.attn_resolution, rng)
        out = []
        for word, info in parsed.items():
            mine = [k for k, b in enumerate(blobs) if b.word == word]
            for adj in info["instance_adjectives"].values():
                n = min(int(adj["desired amount"]), len(mine))
                for k in rng.choice(mine, size=n, replace=False) if n else []:
                    b = blobs[int(k)]
                    blobs[int(k)] = Blob(b.word, b.row, b.col, b.radius, b.attributes + (adj["adjective"],))
        out.extend(blobs)
        return out

    # -- model pieces -----------------------------------------------------

    def _raw_key(self, word: str) -> np.ndarray:
        rng = np.random.default_rng(_stable_seed("key", word))
        k = rng.standard_normal(self.channels)
        return k / np.linalg.norm(k)

    def keys(self, tokens: Sequence[str]) -> np.ndarray:
        """Unit keys for ``tokens``; distinct words get orthogonal directions.

        Orthogonalization runs in first-occurrence order with ``<start>``
        first, so the background never leaks into word maps. Function words
        are scaled down.
        """
        basis: dict[str, np.ndarray] = {}
        for word in [START] + [t for t in tokens if t != START]:
            if word in basis:
                continue
            k = self._raw_key(word)
            for b in basis.values():
                k = k - (k @ b) * b
            n = np.linalg.norm(k)
            if n < 1e-6:  # more words than channels: fall back to the raw key
                k, n = self._raw_key(word), 1.0
            basis[word] = k / n
        out = []
        for t in tokens:
            k = basis[t]
            out.append(k * 0.25 if t != START and t in _FUNCTION_WORDS else k)
        return np.stack(out)

    def _bump(self, blob: Blob) -> np.ndarray:
        h, w = self.attn_resolution
        rr, cc = np.mgrid[0:h, 0:w]
        d = np.hypot(rr - blob.row, cc - blob.col)
        return 1.0 / (1.0 + np.exp((d - blob.radius) / 0.6))

    def initial_latent(self, scene: Sequence[Blob], keys: Mapping[str, np.ndarray], seed: int) -> np.ndarray:
        h, w = self.attn_resolution
        z = np.zeros((self.channels, h, w))
        fg = np.zeros((h, w))
        for blob in scene:
            bump = self._bump(blob)
            fg = np.maximum(fg, bump)
            z += 2.0 * bump[None] * keys[blob.word][:, None, None]
            for attr in blob.attributes:
                for word in tokenize(attr):
                    if word in keys:
                        z += self.attribute_weight * bump[None] * keys[word][:, None, None]
        z += 2.0 * (1.0 - fg)[None] * keys[START][:, None, None]
        rng = np.random.default_rng(_stable_seed("noise", seed))
        z += self.noise * rng.standard_normal(z.shape)
        return z

    def cross_probs(self, z: np.ndarray, key_matrix: np.ndarray, layer: int) -> np.ndarray:
        base = key_matrix @ z.reshape(self.channels, -1)
        return _softmax(self.cross_betas[layer] * base, axis=0)

    def decode(self, z: np.ndarray, tokens: Sequence[str], key_matrix: np.ndarray) -> np.ndarray:
        h, w = self.attn_resolution
        p = _softmax(self.decode_beta * (key_matrix @ z.reshape(self.channels, -1)), axis=0)
        colors = np.stack([self.word_color(t) for t in tokens])
        rgb = (colors.T @ p).reshape(3, h, w).transpose(1, 2, 0)
        up = ndi.zoom(rgb, (self.scale, self.scale, 1), order=1, mode="nearest", grid_mode=True)
        return np.clip(np.rint(up), 0, 255).astype(np.uint8)

    @staticmethod
    def word_color(word: str) -> np.ndarray:
        if word == START or word in _FUNCTION_WORDS:
            return BACKGROUND_RGB
        import colorsys

        hue = (_stable_seed("color", word) % 360) / 360.0
        return 255.0 * np.array(colorsys.hsv_to_rgb(hue, 0.8, 0.65))

    # -- sampling ---------------------------------------------------------

    def generate(self, prompt: str, seed: int, config: GenerationConfig = GenerationConfig(),
                 capture: AttentionCapture = AttentionCapture()) -> DiffusionRun:
        self.calls["generate"] += 1
        return self._sample(prompt, seed, config, capture, None)

    def guided_generate(self, prompt: str, seed: int, config: GenerationConfig,
                        capture: AttentionCapture, hooks) -> DiffusionRun:
        self.calls["guided_generate"] += 1
        return self._sample(prompt, seed, config, capture, hooks)

    def _sample(self, prompt, seed, config, capture, hooks) -> DiffusionRun:
        check_capture(capture, self.num_layers, config.num_steps)
        h, w = self.attn_resolution
        C = self.channels
        tokens = [START] + tokenize(prompt)
        grouping: dict[str, list[int]] = {}
        for j, word in enumerate(tokens[1:], start=1):
            grouping.setdefault(word, []).append(j)
        key_matrix = self.keys(tokens)
        scene = self.scene(prompt, seed)
        extra = [b.word for b in scene if b.word not in tokens]
        key_by_word = dict(zip(tokens + extra, self.keys(tokens + extra)))
        z = self.initial_latent(scene, key_by_word, seed)

        cap_layers = tuple(range(capture.layers[0], capture.layers[1] + 1))
        cap_steps = tuple(range(capture.timesteps[0], capture.timesteps[1] + 1))
        cross = np.zeros((len(cap_layers), len(cap_steps), len(tokens), h, w), dtype=np.float32)
        self_layers = range(capture.self_layers[0], capture.self_layers[1] + 1) if capture.self_layers else ()
        self_steps = range(capture.self_timesteps[0], capture.self_timesteps[1] + 1) if capture.self_timesteps else ()
        self_maps: dict[tuple[int, int], np.ndarray] = {}

        T = config.num_steps
        g = config.guidance_scale
        # guidance scale acts as a bounded logit sharpening; a literal
        # extrapolation against the empty prompt is unstable in this toy
        sharpen = 1.0 + 0.1 * (g - 1.0)
        latents = []
        loss_trace = []
        for t in range(T):
            if hooks is not None:
                z = self._optimize(t, z, key_matrix, hooks, loss_trace)
            latents.append(z.copy())
            Z = z.reshape(C, -1)
            base = key_matrix @ Z
            gram = (Z.T @ Z) / np.sqrt(C)
            shared_self = _softmax(self.self_beta * gram + self._position_bias, axis=1)
            v_shared = np.zeros((C, h * w))
            pred = np.zeros((C, h * w))
            for layer in range(self.num_layers):
                scores = (sharpen * self.cross_betas[layer]) * base
                if hooks is not None:
                    out = hooks.cross_transform(t, layer, scores.reshape(-1, h, w))
                    scores = np.asarray(out).reshape(len(tokens), -1)
                probs = _softmax(scores.copy(), axis=0)
                if layer in cap_layers and t in cap_steps:
                    stored = probs
                    if capture.branch == "combined":
                        uncond = np.zeros_like(probs)
                        uncond[0] = 1.0
                        stored = 0.5 * (probs + uncond)
                    cross[cap_layers.index(layer), cap_steps.index(t)] = stored.reshape(-1, h, w)
                values = key_matrix.T @ probs
                self_attn = shared_self
                if hooks is not None:
                    self_attn = hooks.self_transform(t, layer, shared_self)
                if layer in self_layers and t in self_steps:
                    self_maps[(layer, t)] = np.array(self_attn, dtype=np.float32)
                pred += values
                if self_attn is shared_self:
                    v_shared += values
                else:
                    pred += (np.asarray(self_attn) @ values.T).T
            pred += (shared_self @ v_shared.T).T
            pred *= self.value_gain / (2 * self.num_layers)
            z = z + self.step_size * (pred.reshape(C, h, w) - z)
        latents.append(z.copy())
        image = self.decode(z, tokens, key_matrix)
        record = AttentionRecord(cross=cross, layers=cap_layers, timesteps=cap_steps,
                                 tokens=tokens, token_grouping=grouping, self_maps=self_maps)
        meta = {"scene": [b.to_dict() for b in scene], "scale": self.scale}
        if hooks is not None:
            meta["loss_trace"] = loss_trace
        return DiffusionRun(prompt=prompt, image=image, latents=latents, attention=record,
                            seed=seed, num_steps=T, guidance_scale=g, meta=meta)

    def _optimize(self, t, z, key_matrix, hooks, trace):
        n = int(hooks.iterations.get(t, 0))
        lr = float(hooks.learning_rate)
        layers = getattr(hooks, "loss_layers", None) or (0, self.num_layers - 1)
        for it in range(n):
            view = SyntheticLatentView(self, z, key_matrix, layers)
            try:
                loss, grad = hooks.latent_loss(t, it, view)
            except HookError:
                raise
            except Exception as exc:
                raise HookError(f"latent loss hook raised at t={t}, iteration={it}: {exc}") from exc
            grad = np.asarray(grad, dtype=np.float64)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise HookError(f"non-finite loss/gradient at t={t}, iteration={it}")
            trace.append((t, it, float(loss)))
            z = z - lr * grad
        return z


class SyntheticLatentView:
    """Cross-attention of the current latent plus its vector-Jacobian product."""

    def __init__(self, model: SyntheticDiffusion, z: np.ndarray, key_matrix: np.ndarray,
                 layers: tuple[int, int]):
        self.model = model
        self.z = z
        self.key_matrix = key_matrix
        self.layers = list(range(layers[0], layers[1] + 1))
        self._probs = None

    def _layer_probs(self):
        if self._probs is None:
            self._probs = [self.model.cross_probs(self.z, self.key_matrix, l) for l in self.layers]
        return self._probs

    def cross_attention(self) -> np.ndarray:
        h, w = self.model.attn_resolution
        mean = sum(self._layer_probs()) / len(self.layers)
        return mean.reshape(-1, h, w)

    def backprop(self, grad_maps: np.ndarray) -> np.ndarray:
        C = self.model.channels
        g = np.asarray(grad_maps, dtype=np.float64).reshape(self.key_matrix.shape[0], -1)
        dz = np.zeros((C, g.shape[1]))
        for layer, p in zip(self.layers, self._layer_probs()):
            gs = p * (g - np.sum(p * g, axis=0, keepdims=True))
            dz += self.model.cross_betas[layer] * (self.key_matrix.T @ gs)
        dz /= len(self.layers)
        return dz.reshape(self.z.shape)


# ---------------------------------------------------------------------------
# segmentation fakes


def foreground_components(image: np.ndarray, threshold: float = 40.0, min_area: int = 12):
    """Label map of pixels whose colour departs from the synthetic background."""
    dist = np.linalg.norm(image.astype(np.float64) - BACKGROUND_RGB, axis=-1)
    fg = dist > threshold
    labels, n = ndi.label(fg, structure=np.ones((3, 3), dtype=int))
    if n:
        sizes = ndi.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
        for k, size in enumerate(sizes, start=1):
            if size < min_area:
                labels[labels == k] = 0
    return labels


class SyntheticDetector:
    """Connected colour blobs as instance masks.

    ``miss_rate`` drops blobs (a closed-vocabulary detector misses classes);
    ``union_rate`` adds a merged mask of two blobs (the over-large masks real
    detectors sometimes emit). Both are seeded by the image content.
    """

    def __init__(self, miss_rate: float = 0.25, union_rate: float = 0.3, confidence: float = 0.9):
        self.miss_rate = miss_rate
        self.union_rate = union_rate
        self.confidence = confidence

    def probe(self) -> bool:
        return True

    def detect(self, image):
        labels = foreground_components(image)
        ids = [k for k in np.unique(labels) if k != 0]
        rng = np.random.default_rng(_stable_seed("detect", image_key(image)))
        out = []
        for k in ids:
            if rng.random() < self.miss_rate:
                continue
            out.append((labels == k, "object", self.confidence))
        if len(ids) >= 2 and rng.random() < self.union_rate:
            a, b = rng.choice(ids, size=2, replace=False)
            out.append(((labels == a) | (labels == b), "object", self.confidence * 0.8))
        return out


class ScriptedDetector:
    """Returns fixed detections: one list for every call, or one list per call."""

    def __init__(self, detections=None, per_call: Sequence | None = None):
        self.detections = list(detections or [])
        self.per_call = list(per_call) if per_call is not None else None
        self.calls = 0

    def probe(self) -> bool:
        return True

    def detect(self, image):
        self.calls += 1
        if self.per_call is not None:
            if self.calls > len(self.per_call):
                raise ScriptExhausted("scripted detector has no more outputs")
            return list(self.per_call[self.calls - 1])
        return list(self.detections)


class BlobPointSegmenter:
    """Returns the connected blob under the point, or an empty mask."""

    def probe(self) -> bool:
        return True

    def segment(self, image, point):
        labels = foreground_components(image)
        k = labels[point[0], point[1]]
        if k == 0:
            return np.zeros(labels.shape, dtype=bool)
        return labels == k


class MaskLookupSegmenter:
    """Point segmenter over a fixed list of masks (first mask containing the point)."""

    def __init__(self, masks: Sequence[np.ndarray]):
        self.masks = [np.asarray(m, dtype=bool) for m in masks]

    def probe(self) -> bool:
        return True

    def segment(self, image, point):
        for m in self.masks:
            if m[point[0], point[1]]:
                return m.copy()
        return np.zeros(np.asarray(image).shape[:2], dtype=bool)


# ---------------------------------------------------------------------------
# chat, judge and similarity fakes


class ScriptedChat:
    """Replays canned replies in order; records every call."""

    def __init__(self, replies: Sequence[str]):
        self.replies = list(replies)
        self.calls: list[tuple[str, list[tuple[str, str]]]] = []

    @classmethod
    def from_fixture(cls, path) -> "ScriptedChat":
        return cls(json.loads(Path(path).read_text())["replies"])

    def probe(self) -> bool:
        return True

    def complete(self, instruction, transcript):
        self.calls.append((instruction, list(transcript)))
        if len(self.calls) > len(self.replies):
            raise ScriptExhausted(f"scripted chat exhausted after {len(self.replies)} replies")
        return self.replies[len(self.calls) - 1]


def _json_after(text: str, marker: str):
    at = text.rfind(marker)
    if at < 0:
        raise ValueError(f"marker {marker!r} not found")
    start = text.index("{", at)
    obj, _ = json.JSONDecoder().raw_decode(text[start:])
    return obj


def greedy_assignment(parsed: Mapping, summary: Mapping) -> tuple[str, dict]:
    """Max-score assignment: scarcest object first, then attributes per object."""
    ids = list(summary)
    free = set(ids)
    plan = {sid: {"object": prompts.DELETE, "attributes": []} for sid in ids}
    notes = []
    objects = parsed["objects"]
    order = sorted(objects, key=lambda o: (int(objects[o]["desired_quantity"]), list(objects).index(o)))
    for obj in order:
        q = int(objects[obj]["desired_quantity"])
        ranked = sorted(free, key=lambda s: (-float(summary[s]["object_probabilities"].get(obj, 0.0)), int(s)))
        chosen = ranked[:q]
        for sid in chosen:
            plan[sid]["object"] = obj
            free.discard(sid)
        notes.append(f"'{obj}' needs {q}; set clusters {sorted(chosen, key=int)} by highest probability.")
    for obj in objects:
        carriers = [s for s in ids if plan[s]["object"] == obj]
        for adj in objects[obj]["instance_adjectives"].values():
            name, amount = adj["adjective"], int(adj["desired amount"])
            avail = [s for s in carriers if not plan[s]["attributes"]] or carriers
            ranked = sorted(avail, key=lambda s: (-float(summary[s]["attribute_probabilities"].get(name, 0.0)), int(s)))
            for sid in ranked[:amount]:
                plan[sid]["attributes"].append(name)
            notes.append(f"'{name}' on {amount} '{obj}' cluster(s): {sorted(ranked[:amount], key=int)}.")
    deleted = [s for s in ids if plan[s]["object"] == prompts.DELETE]
    notes.append(f"Deleted clusters: {deleted}.")
    reasoning = "\n".join(f"{k}. {n}" for k, n in enumerate(notes, start=1))
    return reasoning, plan


class RuleBasedChat:
    """Answers the parser and assignment instructions without a language model.

    Parsing uses :func:`instancegen.text.parse_prompt_rules`; assignment uses
    :func:`greedy_assignment`. Output formats match what the engines expect.
    """

    def __init__(self):
        self.calls = 0

    def probe(self) -> bool:
        return True

    def complete(self, instruction, transcript):
        self.calls += 1
        if prompts.PARSER_HEADER in instruction:
            user = [text for role, text in transcript if role == "user" and text.startswith(prompts.PROMPT_LINE)]
            if not user:
                raise ValueError("no PROMPT: line in transcript")
            prompt = user[-1][len(prompts.PROMPT_LINE):].strip()
            return json.dumps(parse_prompt_rules(prompt), indent=2, ensure_ascii=False)
        if prompts.ASSIGNMENT_HEADER in instruction:
            task = instruction[instruction.rfind(prompts.TASK_MARKER):]
            parsed = _json_after(task, prompts.PARSED_MARKER)
            summary = _json_after(task, prompts.LAYOUT_MARKER)
            reasoning, plan = greedy_assignment(parsed, summary)
            return (f"{prompts.REASONING_MARKER}\n{reasoning}\n\n"
                    f"{prompts.ASSIGNMENTS_MARKER}\n{json.dumps(plan, indent=2, ensure_ascii=False)}")
        raise ValueError("rule-based chat does not recognise this instruction")


class ScriptedJudge:
    """Replies from a table keyed by ``(image_key, question)`` or ``question``."""

    def __init__(self, answers: Mapping | None = None, default: str | None = None, rule=None):
        self.answers = dict(answers or {})
        self.default = default
        self.rule = rule
        self.calls: list[tuple[str, str]] = []

    def probe(self) -> bool:
        return True

    def ask(self, image, question):
        key = image_key(image)
        self.calls.append((key, question))
        if self.rule is not None:
            return self.rule(key, question)
        for k in ((key, question), question, key):
            if k in self.answers:
                return self.answers[k]
        if self.default is None:
            raise ScriptExhausted(f"no scripted answer for {key!r} / {question!r}")
        return self.default


class HashJudge:
    """Pseudo-random but reproducible yes/no answers, for smoke runs only."""

    def __init__(self, yes_rate: float = 0.6):
        self.yes_rate = yes_rate

    def probe(self) -> bool:
        return True

    def ask(self, image, question):
        v = _stable_seed("judge", image_key(image), question) % 1000 / 1000.0
        return "Yes." if v < self.yes_rate else "No."


class ConstantSimilarity:
    def __init__(self, value: float = 0.5):
        self.value = value

    def probe(self) -> bool:
        return True

    def score(self, image, prompt):
        return self.value


class HashSimilarity:
    """Reproducible similarity in [0.6, 0.95] for smoke runs."""

    def probe(self) -> bool:
        return True

    def score(self, image, prompt):
        return 0.6 + 0.35 * (_stable_seed("sim", image_key(image), prompt) % 1000) / 1000.0
