"""Rule-based prompt reading used by the synthetic backends.

This is not a replacement for the LLM parser. It understands the simple
"<count> <noun> and <count> <noun> in <setting>, <attribute clauses>" shape
used by the shipped fixtures and benchmark families, which is enough to drive
desk-scale runs without a language model.
"""

from __future__ import annotations

import re

NUMBER_WORDS = {
    "a": 1, "an": 1, "one": 1, "single": 1, "two": 2, "three": 3, "four": 4,
    "five": 5, "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}
NUMBER_NAMES = {1: "one", 2: "two", 3: "three", 4: "four", 5: "five", 6: "six",
                7: "seven", 8: "eight", 9: "nine", 10: "ten"}

# words that end a noun run after a count word
_BREAKS = {
    "and", "in", "on", "at", "with", "near", "under", "by", "of", "from", "inside",
    "standing", "sitting", "lying", "posing", "playing", "resting", "floating",
    "flying", "parked", "hanging", "swimming", "grazing", "perched", "arranged",
    "placed", "next", "beside", "around", "behind", "while", "that", "which",
}
_SETTING_PREPS = {"in", "on", "at", "near", "under", "inside", "by", "across", "through", "against", "atop"}
_META_NOUNS = {"image", "photo", "picture", "painting", "scene", "view", "piece", "group"}
_ATTR_VERBS = ("is", "are", "has", "have", "wears", "wear", "wearing")
_SPATIAL_RE = re.compile(
    r"\b(?:on|in|at|to)\s+the\s+(?:far\s+)?(?:left|right|top|bottom|middle|center|centre|front|back)"
    r"(?:\s+(?:left|right))?\b|\b(?:leftmost|rightmost|top\s+left|top\s+right|bottom\s+left|bottom\s+right)\b"
    r"|\bbetween\b|\bfrom\s+the\s+(?:left|right)\b|\bin\s+the\s+(?:center|centre|middle)\b"
)

_SPLIT_RE = re.compile(r"\s+(?:and|while|but)\s+(?=(?:the|one|two|three|four|five|six|seven|only|another|a)\b)")

_WORD = re.compile(r"[^\W_]+(?:'[^\W_]+)?", re.UNICODE)


def words(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def count_value(word: str) -> int | None:
    if word.isdigit():
        return int(word)
    return NUMBER_WORDS.get(word)


def _same_noun(a: str, b: str) -> bool:
    if a == b:
        return True
    for x, y in ((a, b), (b, a)):
        if x + "s" == y or x + "es" == y or (x.endswith("y") and x[:-1] + "ies" == y):
            return True
    irregular = {("person", "people"), ("man", "men"), ("woman", "women"),
                 ("child", "children"), ("mouse", "mice"), ("goose", "geese"),
                 ("fish", "fish"), ("sheep", "sheep"), ("knife", "knives"),
                 ("leaf", "leaves"), ("wolf", "wolves"), ("shelf", "shelves")}
    return (a, b) in irregular or (b, a) in irregular


def object_phrases(clause: str) -> list[tuple[str, int]]:
    """``(noun, count)`` pairs for every counted noun run in a clause.

    Scanning stops at the first setting preposition ("in a forest").
    """
    toks = words(clause)
    for k, t in enumerate(toks):
        if t in _SETTING_PREPS and k > 0:
            toks = toks[:k]
            break
    out: list[tuple[str, int]] = []
    i = 0
    while i < len(toks):
        n = count_value(toks[i])
        if n is None:
            i += 1
            continue
        j = i + 1
        run = []
        while j < len(toks) and toks[j] not in _BREAKS and count_value(toks[j]) is None:
            run.append(toks[j])
            j += 1
        follower = toks[j] if j < len(toks) else ""
        if run and run[-1] not in _META_NOUNS and follower not in ("of", "with"):
            out.append((run[-1], n))
        i = j
    return out


def _attribute(clause: str, objects: dict[str, dict]) -> tuple[str, str, int | None, str | None] | None:
    toks = words(clause)
    verb_at = next((k for k, t in enumerate(toks) if t in _ATTR_VERBS), None)
    if verb_at is None:
        return None
    head, tail = toks[:verb_at], toks[verb_at + 1:]
    spatial_m = _SPATIAL_RE.search(clause.lower())
    spatial = spatial_m.group(0) if spatial_m else None
    if spatial:
        spatial_words = set(words(spatial))
        tail = [t for t in tail if t not in spatial_words]
        head_clean = [t for t in head if t not in spatial_words]
    else:
        head_clean = head
    tail = [t for t in tail if t not in ("a", "an", "the", "and", "is", "also")]
    if not tail:
        return None
    amount: int | None = 1
    if "other" in head_clean or "rest" in head_clean or "others" in head_clean:
        amount = None  # remainder of the object's quantity
    for t in head_clean:
        v = count_value(t)
        if amount is not None and v is not None and t not in ("a", "an"):
            amount = v
            break
    obj = None
    for t in head_clean:
        for name in objects:
            if _same_noun(t, name):
                obj = name
    if obj is None and len(objects) == 1:
        obj = next(iter(objects))
    if obj is None:
        return None
    return obj, " ".join(tail), amount, spatial


def parse_prompt_rules(prompt: str) -> dict:
    """Wire-format parse (quantities as strings) of a simply-phrased prompt."""
    clauses = [c.strip() for c in prompt.split(",") if c.strip()]
    objects: dict[str, dict] = {}
    rest_start = len(clauses)
    for k, clause in enumerate(clauses):
        found = object_phrases(clause)
        if k > 0 and (not found or any(v in words(clause) for v in _ATTR_VERBS)):
            rest_start = k
            break
        for noun, n in found:
            known = next((name for name in objects if _same_noun(name, noun)), None)
            if known is not None:
                objects[known]["q"] += n
            else:
                objects[noun] = {"q": n, "attrs": []}
    attr_clauses = []
    for clause in clauses[rest_start:]:
        attr_clauses.extend(p.strip() for p in _SPLIT_RE.split(clause) if p.strip())
    for clause in attr_clauses:
        got = _attribute(clause, objects)
        if got is None:
            continue
        obj, attr, amount, spatial = got
        if amount is None:
            amount = objects[obj]["q"] - sum(a for _, a, _ in objects[obj]["attrs"])
        amount = min(amount, objects[obj]["q"])
        if amount < 1:
            continue
        objects[obj]["attrs"].append((attr, amount, spatial))
    wire = {"prompt": prompt, "objects": {}}
    for name, info in objects.items():
        adj = {}
        for k, (attr, amount, spatial) in enumerate(info["attrs"], start=1):
            entry = {"adjective": attr, "desired amount": str(amount)}
            if spatial:
                entry["spatial_constraint"] = spatial
            adj[str(k)] = entry
        wire["objects"][name] = {"desired_quantity": str(info["q"]), "instance_adjectives": adj}
    return wire
