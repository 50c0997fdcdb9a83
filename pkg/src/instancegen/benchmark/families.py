"""The sixty scene families behind the compound-prompt suite.

Each family expands to nine prompts (tiers A/B/C x count bands low/mid/high)
through a small grammar. A few cells are published verbatim; those override
the generated text and carry ``paper`` provenance. Everything else is
``authored``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

TIERS = ("A", "B", "C")
BANDS = ("low", "mid", "high")
BAND_TOTALS = {"low": (2, 3), "mid": (4, 5), "high": (6, 7)}
QUESTIONS_PER_TIER = {"A": 1, "B": 2, "C": 3}

_NUMBERS = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine")


@dataclass(frozen=True)
class Noun:
    singular: str
    plural: str


@dataclass(frozen=True)
class Family:
    """A scene with counted nouns, one attribute and one spatial phrase.

    ``template`` receives one ``{k}`` slot per noun (filled with e.g. "two
    dogs"); by default the slots are joined with commas and "and", followed
    by ``setting``. The attribute goes on ``nouns[attr_index]``.
    """

    nouns: tuple[Noun, ...]
    setting: str
    attribute: str  # predicate for one instance, e.g. "yawning" or "a schnauzer"
    spatial: str
    attr_index: int = 0
    template: str | None = None
    counts: dict[str, tuple[int, ...]] | None = None
    verbatim: dict[tuple[str, str], dict] = field(default_factory=dict)


def N(singular: str, plural: str | None = None) -> Noun:
    return Noun(singular, plural or singular + "s")


def count_phrase(n: int, noun: Noun, article: bool = True) -> str:
    if n == 1:
        if not article:
            return f"one {noun.singular}"
        return ("an " if noun.singular[0] in "aeiou" else "a ") + noun.singular
    return f"{_NUMBERS[n]} {noun.plural}"


def _join(parts: list[str]) -> str:
    if len(parts) == 1:
        return parts[0]
    return ", ".join(parts[:-1]) + " and " + parts[-1]


def default_counts(family: Family, index: int) -> dict[str, tuple[int, ...]]:
    """Per-band counts that hit the band totals; the attributed noun gets the most."""
    k = len(family.nouns)
    odd = index % 2
    table = {
        1: {"low": (2 + odd,), "mid": (4 + odd,), "high": (6 + odd,)},
        2: {"low": (2, 1), "mid": (3, 1 + odd), "high": (4 + odd, 2)},
        3: {"low": (1, 1, 1), "mid": (2, 1 + odd, 1), "high": (3, 2, 1 + odd)},
    }[k]
    out = {}
    for band, counts in table.items():
        counts = list(counts)
        # move the largest count onto the attributed noun
        counts[0], counts[family.attr_index] = counts[family.attr_index], counts[0]
        out[band] = tuple(counts)
    return out


def _scene(family: Family, counts: tuple[int, ...]) -> str:
    slots = [count_phrase(n, noun) for n, noun in zip(counts, family.nouns)]
    if family.template:
        return family.template.format(*slots)
    return f"{_join(slots)} {family.setting}"


def generated_cell(family: Family, counts: tuple[int, ...], tier: str) -> tuple[str, list[str]]:
    noun = family.nouns[family.attr_index]
    n_attr = counts[family.attr_index]
    one = family.attribute
    scene = _scene(family, counts)
    count_q = "Are there exactly " + _join([count_phrase(n, nn, article=False)
                                            for n, nn in zip(counts, family.nouns)]) + " in this image?"
    if n_attr == 1:
        attr_clause = f"the {noun.singular} is {one}"
        attr_q = f"Is the {noun.singular} {one} in this image?"
    else:
        attr_clause = f"one of the {noun.plural} is {one}"
        attr_q = f"Is exactly one {noun.singular} {one} in this image?"
    spatial_clause = f"the {noun.singular} {family.spatial} is {one}"
    spatial_q = f"Is only the {noun.singular} {family.spatial} {one} in this image?"
    if tier == "A":
        return scene, [count_q]
    if tier == "B":
        return f"{scene}, {attr_clause}", [count_q, attr_q]
    return f"{scene}, {spatial_clause}", [count_q, attr_q, spatial_q]


def expand(family_id: int, family: Family) -> list[dict]:
    """Nine suite records for one family, in tier-major then band order."""
    counts = family.counts or default_counts(family, family_id)
    records = []
    for tier in TIERS:
        for band in BANDS:
            lo, hi = BAND_TOTALS[band]
            if not lo <= sum(counts[band]) <= hi:
                raise ValueError(f"family {family_id} band {band}: {counts[band]} outside {lo}-{hi}")
            prompt, questions = generated_cell(family, counts[band], tier)
            provenance = "authored"
            override = family.verbatim.get((tier, band))
            if override:
                prompt = override["prompt"]
                provenance = "paper" if "questions" in override else "paper-prompt"
                questions = list(override.get("questions", override.get("authored_questions", questions)))
            records.append({"family_id": family_id, "tier": tier, "band": band, "prompt": prompt,
                            "questions": questions, "provenance": provenance})
    return records


# -- published cells -----------------------------------------------------

_MEERKAT_Q = ("Do exactly six meerkats appear in this image?",
              "Is exactly one meerkat yawning in this image?",
              "Is only the second meerkat from the right yawning in this image?")
_BACKYARD_Q = ("Do exactly three dogs and one cat appear in this image?",
               "Is exactly one dog a Schnauzer and one cat a Persian in this image?",
               "Is only the dog on the far right a Schnauzer, and only the cat on the far left a Persian in this image?")
# the published donut cells come without questions, and two glazed donuts
# do not fit the one-instance grammar
_DONUT_Q = ("Are there exactly five donuts in this image?",
            "Are exactly two donuts chocolate glazed and the rest plain in this image?",
            "Are only the donuts on the top left and bottom right chocolate glazed in this image?")

FAMILIES: tuple[Family, ...] = (
    Family((N("meerkat"),), "standing watch in the Savannah", "yawning", "on the far right",
           counts={"low": (3,), "mid": (4,), "high": (6,)},
           verbatim={
               ("A", "high"): {"prompt": "Six meerkats standing watch in the Savannah",
                               "questions": _MEERKAT_Q[:1]},
               ("B", "high"): {"prompt": "Six meerkats standing watch in the Savannah, only one of them is yawning",
                               "questions": _MEERKAT_Q[:2]},
               ("C", "high"): {"prompt": "Six meerkats standing watch in the Savannah, only the second meerkat "
                                         "from the right is yawning",
                               "questions": _MEERKAT_Q},
           }),
    Family((N("dog"), N("cat")), "in a backyard", "a schnauzer", "on the far right",
           counts={"low": (2, 1), "mid": (3, 1), "high": (5, 2)},
           verbatim={
               ("A", "mid"): {"prompt": "Three dogs and a cat in a backyard", "questions": _BACKYARD_Q[:1]},
               ("B", "mid"): {"prompt": "Three dogs and a cat in a backyard, one dog is a Schnauzer and the cat "
                                        "is Persian",
                              "questions": _BACKYARD_Q[:2]},
               ("C", "mid"): {"prompt": "Three dogs and a cat in a backyard, one dog is a Schnauzer and is on the "
                                        "far right, the cat is in the far left and is Persian",
                              "questions": _BACKYARD_Q},
           }),
    Family((N("man", "men"), N("woman", "women"), N("dog")), "", "a golden retriever",
           "between the man and the woman", attr_index=2,
           template="{0} and {1} sitting down with {2}",
           counts={"low": (1, 1, 1), "mid": (1, 1, 2), "high": (2, 2, 3)},
           verbatim={
               ("A", "mid"): {"prompt": "a man and a woman sitting down with their two dogs"},
               ("B", "mid"): {"prompt": "a man and a woman sitting down with their two dogs, one of the dogs is a "
                                        "golden retriever"},
               ("C", "mid"): {"prompt": "a man and a woman sitting down with their two dogs, the dog between the "
                                        "man and the woman is a golden retriever"},
           }),
    Family((N("donut"),), "in a box", "chocolate glazed", "on the top left",
           counts={"low": (3,), "mid": (5,), "high": (7,)},
           verbatim={
               ("A", "mid"): {"prompt": "five donuts in a box"},
               ("B", "mid"): {"prompt": "five donuts in a box, two are chocolate glazed, the rest are plain",
                              "authored_questions": _DONUT_Q[:2]},
               ("C", "mid"): {"prompt": "five donuts in a box, the donut on the top left and bottom right are "
                                        "chocolate glazed, the rest are plain",
                              "authored_questions": _DONUT_Q},
           }),
    Family((N("dog"), N("cat")), "", "a sphinx", "on the far right", attr_index=1,
           template="an image of {0} and {1}",
           counts={"low": (1, 2), "mid": (2, 3), "high": (3, 4)},
           verbatim={
               ("A", "mid"): {"prompt": "an image of two dogs and three cats"},
               ("B", "mid"): {"prompt": "an image of two dogs and three cats, one of the cats is a sphinx while "
                                        "the other cats are tabbies"},
               ("C", "mid"): {"prompt": "an image of two dogs and three cats, the cat on the far right is a sphinx "
                                        "while the other cats are tabbies"},
               ("C", "low"): {"prompt": "an image of a dog and two cats, the cat on the far right is a sphinx"},
           }),
    # -- authored: one counted noun
    Family((N("apple"),), "on a wooden table", "green", "on the far left"),
    Family((N("balloon"),), "floating above a park", "red", "highest in the sky"),
    Family((N("candle"),), "on a birthday cake", "unlit", "on the far right"),
    Family((N("horse"),), "grazing in a meadow", "white", "on the far left"),
    Family((N("penguin"),), "on an ice floe", "a chick", "on the far left"),
    Family((N("cupcake"),), "on a plate", "topped with a cherry", "closest to the camera"),
    Family((N("bird"),), "on a power line", "a cardinal", "on the far right"),
    Family((N("book"),), "on a shelf", "open", "on the far left"),
    Family((N("mug"),), "on a kitchen counter", "striped", "on the far right"),
    Family((N("sheep", "sheep"),), "in a field", "black", "closest to the camera"),
    Family((N("duck"),), "swimming in a pond", "a duckling", "closest to the camera"),
    Family((N("bicycle"),), "parked by a brick wall", "blue", "on the far left"),
    Family((N("lemon"),), "in a glass bowl", "sliced in half", "on the far right"),
    Family((N("puppy", "puppies"),), "sleeping on a rug", "spotted", "on the far left"),
    Family((N("kite"),), "flying over a beach", "shaped like a fish", "on the far left"),
    Family((N("owl"),), "perched on a branch", "asleep", "on the far right"),
    Family((N("pumpkin"),), "on a porch", "carved", "on the far left"),
    Family((N("doll"),), "on a bed", "wearing a hat", "on the far right"),
    Family((N("butterfly", "butterflies"),), "on a flowering bush", "blue", "highest up"),
    Family((N("car"),), "in a parking lot", "yellow", "on the far left"),
    Family((N("cactus", "cacti"),), "in a desert", "flowering", "on the far right"),
    Family((N("pillow"),), "on a sofa", "striped", "on the far left"),
    Family((N("ball"),), "in a playing field", "a volleyball", "in front"),
    # -- authored: two counted nouns
    Family((N("dog"), N("ball")), "", "a dalmatian", "on the far left",
           template="{0} playing with {1} on a lawn"),
    Family((N("fish", "fish"), N("seahorse")), "in an aquarium", "striped", "on the far left"),
    Family((N("muffin"), N("cookie")), "on a baking tray", "blueberry", "on the far right"),
    Family((N("cat"), N("mouse", "mice")), "in a barn", "ginger", "on the far left"),
    Family((N("chair"), N("table")), "on a patio", "wooden", "on the far right"),
    Family((N("boat"), N("buoy")), "in a harbor", "a sailboat", "on the far left"),
    Family((N("rabbit"), N("carrot")), "in a vegetable garden", "brown", "on the far right"),
    Family((N("child", "children"), N("kite")), "on a windy hill", "wearing a raincoat",
           "on the far left"),
    Family((N("cow"), N("calf", "calves")), "in a pasture", "brown", "on the far right"),
    Family((N("orange"), N("banana")), "in a fruit bowl", "peeled", "on the far left"),
    Family((N("squirrel"), N("acorn")), "under an oak tree", "gray", "on the far right"),
    Family((N("frog"), N("turtle")), "in a pond", "bright green", "on the far left"),
    Family((N("hat"), N("scarf", "scarves")), "on a coat rack", "knitted", "on the far right"),
    Family((N("guitar"), N("drum")), "on a stage", "acoustic", "on the far left"),
    Family((N("robot"), N("dinosaur")), "on a toy shelf", "silver", "on the far right"),
    Family((N("tomato", "tomatoes"), N("pepper")), "on a cutting board", "sliced", "on the far left"),
    Family((N("pigeon"), N("crow")), "on a rooftop", "white", "on the far right"),
    Family((N("goat"), N("chicken")), "on a farm", "black", "on the far left"),
    Family((N("vase"), N("lamp")), "on a mantelpiece", "filled with roses",
           "on the far right"),
    Family((N("bee"), N("flower")), "in a meadow", "a sunflower", "on the far left", attr_index=1),
    Family((N("girl"), N("dog")), "", "wearing a yellow dress", "on the far right",
           template="{0} walking {1} in a park"),
    Family((N("bottle"), N("glass", "glasses")), "on a bar counter", "empty", "on the far left"),
    Family((N("elephant"), N("giraffe")), "at a watering hole", "spraying water",
           "on the far right"),
    Family((N("pencil"), N("eraser")), "on a desk", "sharpened", "on the far left"),
    Family((N("umbrella"), N("bench", "benches")), "on a rainy street", "polka dotted",
           "on the far right"),
    Family((N("lion"), N("zebra")), "on the savanna", "a lioness", "on the far left"),
    Family((N("snowman", "snowmen"), N("sled")), "in a snowy yard", "wearing a top hat",
           "on the far right"),
    Family((N("bear"), N("fish", "fish")), "by a river", "a grizzly", "on the far left"),
    # -- authored: three counted nouns
    Family((N("boy"), N("girl"), N("dog")), "at a picnic", "a corgi", "on the far left", attr_index=2),
    Family((N("plate"), N("cup"), N("spoon")), "on a dining table", "chipped", "on the far right"),
    Family((N("cat"), N("dog"), N("bird")), "in a living room", "a tabby", "on the far left"),
    Family((N("tent"), N("campfire"), N("backpack")), "at a campsite", "orange", "on the far right"),
)


def build_records() -> list[dict]:
    if len(FAMILIES) != 60:
        raise AssertionError(f"expected 60 families, have {len(FAMILIES)}")
    out = []
    for family_id, family in enumerate(FAMILIES, start=1):
        out.extend(expand(family_id, family))
    return out
