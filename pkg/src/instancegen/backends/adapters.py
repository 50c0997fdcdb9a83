"""Adapters for real models. Each imports its heavy dependency on construction,
so importing this module never fails; a missing package surfaces as
``BackendUnavailable`` from the registry.

No diffusion adapter ships here: guided generation needs per-layer attention
processors for a specific model family. Provide one as a plugin (see
``INSTANCEGEN_BACKEND_DIR``) implementing ``generate``/``guided_generate``.
"""

from __future__ import annotations

import base64
import io
import logging
import os
from typing import Sequence

import numpy as np

from .base import BackendUnavailable, EmptyResponse

log = logging.getLogger(__name__)


def _png_data_url(image) -> str:
    from PIL import Image

    if isinstance(image, (str, os.PathLike)):
        img = Image.open(image).convert("RGB")
    else:
        img = Image.fromarray(np.asarray(image, dtype=np.uint8))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


class _OpenAICompatible:
    """Minimal client for any ``/chat/completions`` endpoint."""

    def __init__(self, model: str = "gpt-4o", base_url: str | None = None,
                 api_key_env: str = "OPENAI_API_KEY", temperature: float = 0.0, timeout: float = 120.0):
        import httpx

        self.model = model
        self.base_url = (base_url or os.environ.get("OPENAI_BASE_URL") or "https://api.openai.com/v1").rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        self.temperature = temperature
        self._client = httpx.Client(timeout=timeout)

    def probe(self) -> bool:
        if not self.api_key:
            raise BackendUnavailable("API key environment variable is not set")
        return True

    def _post(self, messages: list[dict]) -> str:
        resp = self._client.post(
            f"{self.base_url}/chat/completions",
            headers={"Authorization": f"Bearer {self.api_key}"},
            json={"model": self.model, "messages": messages, "temperature": self.temperature},
        )
        if resp.status_code >= 500 or resp.status_code == 429:
            raise BackendUnavailable(f"chat endpoint returned {resp.status_code}")
        resp.raise_for_status()
        choices = resp.json().get("choices") or []
        text = choices[0]["message"].get("content") if choices else None
        if not text:
            raise EmptyResponse("chat endpoint returned no content")
        return text


class OpenAIChat(_OpenAICompatible):
    def complete(self, instruction: str, transcript: Sequence[tuple[str, str]]) -> str:
        log.info("openai chat: instruction length %d", len(instruction))
        messages = [{"role": "system", "content": instruction}]
        messages += [{"role": role, "content": text} for role, text in transcript]
        if len(messages) == 1:
            messages.append({"role": "user", "content": "Follow the instruction above."})
        return self._post(messages)


class OpenAIJudge(_OpenAICompatible):
    def ask(self, image, question: str) -> str:
        content = [{"type": "image_url", "image_url": {"url": _png_data_url(image)}},
                   {"type": "text", "text": question + " Answer yes or no."}]
        return self._post([{"role": "user", "content": content}])


class TorchvisionMaskRCNN:
    """COCO Mask R-CNN from torchvision."""

    def __init__(self, score_threshold: float = 0.5, mask_threshold: float = 0.5, device: str = "cpu"):
        import torch
        import torchvision

        self._torch = torch
        weights = torchvision.models.detection.MaskRCNN_ResNet50_FPN_Weights.DEFAULT
        self.categories = weights.meta["categories"]
        self.model = torchvision.models.detection.maskrcnn_resnet50_fpn(weights=weights).eval().to(device)
        self.device = device
        self.score_threshold = score_threshold
        self.mask_threshold = mask_threshold

    def probe(self) -> bool:
        return True

    def detect(self, image):
        torch = self._torch
        x = torch.from_numpy(np.asarray(image)).permute(2, 0, 1).float().div(255).to(self.device)
        with torch.no_grad():
            out = self.model([x])[0]
        dets = []
        for mask, label, score in zip(out["masks"], out["labels"], out["scores"]):
            s = float(score)
            if s < self.score_threshold:
                continue
            m = (mask[0] > self.mask_threshold).cpu().numpy()
            dets.append((m, self.categories[int(label)], s))
        return dets


class SAM2PointSegmenter:
    def __init__(self, model_id: str = "facebook/sam2-hiera-large", device: str = "cpu"):
        from sam2.sam2_image_predictor import SAM2ImagePredictor

        self.predictor = SAM2ImagePredictor.from_pretrained(model_id, device=device)
        self._last_key = None

    def probe(self) -> bool:
        return True

    def segment(self, image, point):
        from .base import image_key

        key = image_key(image)
        if key != self._last_key:
            self.predictor.set_image(np.asarray(image))
            self._last_key = key
        r, c = point
        masks, scores, _ = self.predictor.predict(point_coords=np.array([[c, r]]), point_labels=np.array([1]),
                                                  multimask_output=True)
        return np.asarray(masks[int(np.argmax(scores))], dtype=bool)


class VQAScoreSimilarity:
    def __init__(self, model: str = "clip-flant5-xxl"):
        import t2v_metrics

        self.scorer = t2v_metrics.VQAScore(model=model)

    def probe(self) -> bool:
        return True

    def score(self, image, prompt: str) -> float:
        return float(self.scorer(images=[str(image)], texts=[prompt])[0][0])

    def score_batch(self, images, prompts):
        return [self.score(im, p) for im, p in zip(images, prompts)]
