"""Structured object/attribute/count records parsed from free text by a chat model.

Wire format (what the chat model returns and what is persisted) keeps every
quantity as a decimal string; the in-memory form uses integers::

    {"prompt": "...",
     "objects": {"squirrel": {"desired_quantity": "1",
                              "instance_adjectives": {"1": {"adjective": "holding nut",
                                                            "desired amount": "1"}}}}}
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

from . import prompts
from .backends import chat_complete

PARSER_INSTRUCTION_FILE = "prompt_parser_instruction.txt"

_ADJ_KEYS = {"adjective", "desired amount", "spatial_constraint"}
_OBJ_KEYS = {"desired_quantity", "instance_adjectives"}
_FENCE = re.compile(r"^```[a-zA-Z]*\s*|\s*```\s*$")


@dataclass(frozen=True)
class InstanceAttribute:
    attribute: str
    desired_amount: int
    spatial_constraint: str | None = None


@dataclass(frozen=True)
class ObjectSpec:
    desired_quantity: int
    instance_attributes: tuple[InstanceAttribute, ...] = ()


@dataclass(frozen=True)
class ParsedPrompt:
    prompt: str
    objects: Mapping[str, ObjectSpec] = field(default_factory=dict)

    @property
    def object_words(self) -> list[str]:
        return list(self.objects)

    def attribute_words(self) -> list[str]:
        seen: list[str] = []
        for spec in self.objects.values():
            for a in spec.instance_attributes:
                if a.attribute not in seen:
                    seen.append(a.attribute)
        return seen

    def required_instance_count(self) -> int:
        return sum(spec.desired_quantity for spec in self.objects.values())

    def to_wire(self) -> dict:
        objects = {}
        for word, spec in self.objects.items():
            adjs = {}
            for k, a in enumerate(spec.instance_attributes, start=1):
                entry = {"adjective": a.attribute, "desired amount": str(a.desired_amount)}
                if a.spatial_constraint is not None:
                    entry["spatial_constraint"] = a.spatial_constraint
                adjs[str(k)] = entry
            objects[word] = {"desired_quantity": str(spec.desired_quantity), "instance_adjectives": adjs}
        return {"prompt": self.prompt, "objects": objects}

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), indent=2, ensure_ascii=False)


@dataclass(frozen=True)
class Violation:
    path: str  # JSON pointer
    message: str

    def __str__(self):
        return f"{self.path or '/'}: {self.message}"


class ParseSyntaxError(ValueError):
    """The reply is not JSON at all."""


class NoObjectsError(ValueError):
    """The prompt names no countable objects."""


class ParseFailure(ValueError):
    """Still invalid after the retry. ``attempts`` holds ``(raw, violations)`` per call."""

    def __init__(self, attempts):
        self.attempts = attempts
        last = attempts[-1][1]
        super().__init__("prompt parse failed after retry: " + "; ".join(map(str, last)))


def _pointer(*parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ParseSyntaxError(f"duplicate key {k!r}")
        out[k] = v
    return out


def extract_json_text(raw: str) -> str:
    """Strip code fences and any prose before the first ``{``."""
    text = _FENCE.sub("", raw.strip())
    start = text.find("{")
    if start < 0:
        raise ParseSyntaxError("no JSON object in reply")
    try:
        _, end = json.JSONDecoder().raw_decode(text[start:])
    except json.JSONDecodeError as exc:
        raise ParseSyntaxError(str(exc)) from exc
    return text[start:start + end]


def _positive_int(value) -> int | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value if value > 0 else None
    if isinstance(value, str) and value.strip().isdigit():
        n = int(value.strip())
        return n if n > 0 else None
    return None


def validate_parsed(raw: str) -> ParsedPrompt | list[Violation]:
    """Schema check of a wire-format reply.

    Raises ``ParseSyntaxError`` if ``raw`` is not JSON; otherwise returns the
    parsed record or a non-empty list of violations.
    """
    try:
        data = json.loads(raw, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ParseSyntaxError(str(exc)) from exc
    bad: list[Violation] = []
    if not isinstance(data, dict):
        return [Violation("", "top level must be an object")]
    prompt = data.get("prompt")
    if not isinstance(prompt, str):
        bad.append(Violation("/prompt", "missing or not a string"))
    if "objects" not in data:
        return bad + [Violation("/objects", "missing")]
    objects = data["objects"]
    if not isinstance(objects, dict):
        return bad + [Violation("/objects", "must be an object")]
    for key in set(data) - {"prompt", "objects"}:
        bad.append(Violation(_pointer(key), "unexpected key"))

    parsed: dict[str, ObjectSpec] = {}
    folded: set[str] = set()
    for word, spec in objects.items():
        here = ("objects", word)
        if not word.strip():
            bad.append(Violation(_pointer(*here), "object word is empty"))
            continue
        if word.strip().lower() in folded:
            bad.append(Violation(_pointer(*here), "object word repeated"))
        folded.add(word.strip().lower())
        if not isinstance(spec, dict):
            bad.append(Violation(_pointer(*here), "must be an object"))
            continue
        for key in set(spec) - _OBJ_KEYS:
            bad.append(Violation(_pointer(*here, key), "unexpected key"))
        qty = _positive_int(spec.get("desired_quantity"))
        if qty is None:
            bad.append(Violation(_pointer(*here, "desired_quantity"),
                                 f"must be a positive integer string, got {spec.get('desired_quantity')!r}"))
        adjs = spec.get("instance_adjectives", {})
        if not isinstance(adjs, dict):
            bad.append(Violation(_pointer(*here, "instance_adjectives"), "must be an object"))
            adjs = {}
        attrs: list[InstanceAttribute] = []
        for k, entry in adjs.items():
            at = (*here, "instance_adjectives", k)
            if not isinstance(entry, dict):
                bad.append(Violation(_pointer(*at), "must be an object"))
                continue
            for key in set(entry) - _ADJ_KEYS:
                bad.append(Violation(_pointer(*at, key), "unexpected key"))
            name = entry.get("adjective")
            if not isinstance(name, str) or not name.strip():
                bad.append(Violation(_pointer(*at, "adjective"), "missing or empty"))
                continue
            amount = _positive_int(entry.get("desired amount"))
            if amount is None:
                bad.append(Violation(_pointer(*at, "desired amount"),
                                     f"must be a positive integer string, got {entry.get('desired amount')!r}"))
                continue
            if qty is not None and amount > qty:
                bad.append(Violation(_pointer(*at, "desired amount"),
                                     f"{amount} exceeds desired_quantity {qty} of {word!r}"))
            spatial = entry.get("spatial_constraint")
            if spatial is not None and not isinstance(spatial, str):
                bad.append(Violation(_pointer(*at, "spatial_constraint"), "must be a string"))
                spatial = None
            if any(a.attribute == name for a in attrs):
                bad.append(Violation(_pointer(*at, "adjective"), f"attribute {name!r} repeated for {word!r}"))
            attrs.append(InstanceAttribute(name, amount, spatial))
        if qty is not None:
            parsed[word] = ObjectSpec(qty, tuple(attrs))
    if bad:
        return bad
    return ParsedPrompt(prompt, parsed)


def parsed_from_wire(data: Mapping) -> ParsedPrompt:
    result = validate_parsed(json.dumps(data))
    if isinstance(result, list):
        raise ValueError("; ".join(map(str, result)))
    return result


def _feedback(violations) -> str:
    lines = "\n".join(f"- {v}" for v in violations)
    return f"Your previous answer does not follow the required format:\n{lines}\nReturn the corrected JSON only."


def parse_prompt(prompt: str, chat, *, complete: Callable = chat_complete, retries: int = 1) -> ParsedPrompt:
    """Ask ``chat`` to break ``prompt`` down; re-ask at most ``retries`` times."""
    if not prompt or not prompt.strip():
        raise ValueError("prompt is empty")
    instruction = prompts.load_text(PARSER_INSTRUCTION_FILE)
    transcript = [("user", f"{prompts.PROMPT_LINE} {prompt.strip()}")]
    attempts = []
    for _ in range(retries + 1):
        raw = complete(chat, instruction, transcript)
        try:
            result = validate_parsed(extract_json_text(raw))
        except ParseSyntaxError as exc:
            result = [Violation("", f"invalid JSON: {exc}")]
        if not isinstance(result, list):
            if not result.objects:
                raise NoObjectsError(f"no countable objects found in {prompt!r}")
            return result
        attempts.append((raw, result))
        transcript += [("assistant", raw), ("user", _feedback(result))]
    raise ParseFailure(attempts)
