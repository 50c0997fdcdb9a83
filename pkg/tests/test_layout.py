import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from instancegen.attention import AnchorPoint
from instancegen.backends.synthetic import MaskLookupSegmenter
from instancegen.layout import (
    CopyPlacementError,
    InstanceLayout,
    InstanceMask,
    anchor_pixel,
    assign_anchors,
    build_layout,
    build_summary,
    copy_instances,
    filter_oversized,
    layout_violations,
    merge_point_masks,
    postprocess,
    required_instance_count,
    resolve_detector_overlaps,
)

from oracles import chebyshev_gap, layout_problems

SIZE = 40


def rect(r0, r1, c0, c1, size=SIZE):
    m = np.zeros((size, size), bool)
    m[r0:r1, c0:c1] = True
    return m


def mask(i, pixels, anchors=(), provenance="detector"):
    return InstanceMask(i, pixels, list(anchors), provenance)


def anchor(r, c, word="dog"):
    return AnchorPoint(r, c, word, 1.0)


# -- rule table ----------------------------------------------------------------

def test_detector_overlap_goes_to_smaller_mask():
    a, b = mask(1, rect(0, 10, 0, 10)), mask(2, rect(8, 13, 0, 10))
    assert (a.pixels & b.pixels).sum() == 20
    out = resolve_detector_overlaps([a, b])
    assert [m.area for m in out] == [80, 50]
    assert not (out[0].pixels & out[1].pixels).any()


def test_detector_overlap_tie_goes_to_lower_id():
    a, b = mask(1, rect(0, 10, 0, 10)), mask(2, rect(5, 15, 0, 10))
    out = resolve_detector_overlaps([a, b])
    assert [m.area for m in out] == [100, 50]


def test_disjoint_pair_is_unchanged():
    a, b = mask(1, rect(0, 5, 0, 5)), mask(2, rect(10, 15, 10, 15))
    for fn in (resolve_detector_overlaps, merge_point_masks):
        out = fn([a, b])
        assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(out, [a, b]))


def test_point_masks_with_heavy_overlap_merge():
    a = mask(1, rect(0, 10, 0, 10), [anchor(1, 1)], "point_prompt")
    b = mask(2, rect(2, 12, 0, 10), [anchor(2, 2)], "point_prompt")
    assert (a.pixels & b.pixels).sum() == 80
    out = merge_point_masks([a, b])
    assert len(out) == 1
    assert out[0].area == 120
    assert out[0].anchors == [anchor(1, 1), anchor(2, 2)]


def test_point_masks_with_half_overlap_split():
    a = mask(1, rect(0, 10, 0, 10), [anchor(1, 1)], "point_prompt")
    b = mask(2, rect(5, 15, 0, 10), [anchor(3, 3)], "point_prompt")
    out = merge_point_masks([a, b])
    assert [m.area for m in out] == [100, 50]


def test_anchor_goes_to_smallest_containing_mask():
    big, small = mask(1, rect(0, 20, 0, 25)), mask(2, rect(5, 15, 5, 15))
    assert (big.area, small.area) == (500, 100)
    kept, unresolved = assign_anchors([anchor(10, 10)], [big, small])
    assert [m.id for m in kept] == [2]
    assert not unresolved


def test_anchor_on_background_unresolved_and_empty_masks_discarded():
    ms = [mask(1, rect(0, 5, 0, 5)), mask(2, rect(10, 15, 10, 15)), mask(3, rect(20, 25, 20, 25))]
    kept, unresolved = assign_anchors([anchor(2, 2), anchor(12, 12), anchor(35, 35)], ms)
    assert [m.id for m in kept] == [1, 2]
    assert unresolved == [anchor(35, 35)]


def test_oversized_filter_pair():
    area = SIZE * SIZE
    half, fifth = mask(1, rect(0, 20, 0, 40)), mask(2, rect(0, 16, 0, 20))
    assert half.area / area == 0.5 and fifth.area / area == 0.2
    assert [m.id for m in filter_oversized([half, fifth], area)] == [2]
    assert filter_oversized([], area) == []


def test_small_mask_dropped():
    out = postprocess([mask(1, rect(0, 5, 0, 5)), mask(2, rect(20, 30, 20, 30))])
    assert [m.id for m in out] == [2]


def test_touching_masks_get_a_gap():
    a, b = mask(1, rect(0, 10, 0, 20)), mask(2, rect(10, 20, 0, 20))
    assert a.area == b.area == 200
    out = postprocess([a, b])
    assert len(out) == 2
    assert chebyshev_gap(out[0].pixels, out[1].pixels) > 2
    assert out[0].area == 200  # equal sizes: the higher id gives way


def test_single_mask_untouched():
    m = mask(1, rect(3, 12, 3, 12))
    out = postprocess([m])
    assert np.array_equal(out[0].pixels, m.pixels)


def test_required_instance_count(porcupine_parsed):
    assert required_instance_count(porcupine_parsed) == 3


# -- randomized scenes ---------------------------------------------------------

def random_scene(rng, size=96, scale=4):
    """Disks with anchors at their centres, imperfect detections and point masks."""
    blobs = []
    for _ in range(200):
        if len(blobs) >= rng.integers(2, 8):
            break
        rad = int(rng.integers(4, 9))
        cr, cc = rng.integers(2, size // scale - 2, size=2)
        pr, pc = cr * scale + scale // 2, cc * scale + scale // 2
        if any(np.hypot(pr - q[0], pc - q[1]) < rad + q[2] + 4 for q in blobs):
            continue
        blobs.append((int(pr), int(pc), rad, int(cr), int(cc)))
    yy, xx = np.mgrid[0:size, 0:size]
    disks = [(yy - pr) ** 2 + (xx - pc) ** 2 <= rad ** 2 for pr, pc, rad, _, _ in blobs]
    anchors = [AnchorPoint(cr, cc, "thing", 1.0) for *_, cr, cc in blobs]
    detections = []
    for d in disks:
        if rng.random() < 0.6:
            grown = d | np.roll(d, int(rng.integers(-3, 4)), axis=1)
            detections.append((grown, "thing", 0.9))
    if len(disks) >= 2:
        detections.append((disks[0] | disks[1], "thing", 0.7))
    detections.append((np.ones((size, size), bool), "thing", 0.5))
    seg_masks = [d | np.roll(d, int(rng.integers(-2, 3)), axis=0) for d in disks]
    image = np.zeros((size, size, 3), np.uint8)
    return image, anchors, detections, MaskLookupSegmenter(seg_masks), scale


def check_layout(layout, anchors):
    masks = [m.pixels for m in layout.masks]
    listed = [anchor_pixel(a, layout.scale) for m in layout.masks for a in m.anchors]
    problems = layout_problems(masks, listed)
    problems += layout_violations(layout)
    placed = sum(len(m.anchors) for m in layout.masks) + len(layout.dropped_anchors)
    if placed != len(anchors):
        problems.append(f"{placed} anchors accounted for, {len(anchors)} given")
    return problems


def test_random_scenes_satisfy_invariants():
    rng = np.random.default_rng(2024)
    for k in range(100):
        image, anchors, det, seg, scale = random_scene(rng)
        layout = build_layout(image, anchors, det, seg.segment, scale)
        assert check_layout(layout, anchors) == [], f"scene {k}"
        assert not layout.deficient, f"scene {k} lost anchors {layout.dropped_anchors}"
        assert [m.id for m in layout.masks] == list(range(1, len(layout.masks) + 1))


def test_layout_area_never_grows():
    rng = np.random.default_rng(5)
    for _ in range(20):
        image, anchors, det, seg, scale = random_scene(rng)
        layout = build_layout(image, anchors, det, seg.segment, scale)
        union = np.zeros(image.shape[:2], bool)
        for m, _, _ in det:
            if m.mean() <= 0.33:
                union |= m
        for m in seg.masks:
            union |= m
        covered = np.zeros_like(union)
        for m in layout.masks:
            covered |= m.pixels
        assert not (covered & ~union).any()


def test_copy_instances_fills_deficit():
    rng = np.random.default_rng(11)
    done = 0
    for _ in range(30):
        image, anchors, det, seg, scale = random_scene(rng)
        layout = build_layout(image, anchors, det, seg.segment, scale)
        if not 1 <= len(layout.masks) <= 4:
            continue
        before = [m.copy() for m in layout.masks]
        out = copy_instances(layout, 2, rng_seed=3)
        assert len(out.masks) == len(before) + 2
        for old, new in zip(before, out.masks):
            assert np.array_equal(old.pixels, new.pixels) and new.provenance == old.provenance
        copies = out.masks[len(before):]
        assert all(c.provenance == "copied" and c.source_id in {m.id for m in before} for c in copies)
        assert layout_problems([m.pixels for m in out.masks], []) == []
        again = copy_instances(layout, 2, rng_seed=3)
        assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(out.masks, again.masks))
        for m in layout.masks:  # input layout untouched
            assert np.array_equal(m.pixels, next(b for b in before if b.id == m.id).pixels)
        done += 1
    assert done >= 10


def test_copies_sample_originals_only():
    base = InstanceLayout([mask(1, rect(2, 10, 2, 10, 64)),
                           InstanceMask(2, rect(20, 28, 2, 10, 64), [], "copied", source_id=1)], (64, 64))
    out = copy_instances(base, 4, rng_seed=0)
    assert {m.source_id for m in out.masks[2:]} == {1}


def test_copy_instances_preconditions():
    base = InstanceLayout([mask(1, rect(2, 10, 2, 10))], (SIZE, SIZE))
    with pytest.raises(ValueError):
        copy_instances(base, 0, rng_seed=0)
    full = InstanceLayout([mask(1, np.ones((SIZE, SIZE), bool))], (SIZE, SIZE))
    with pytest.raises(CopyPlacementError):
        copy_instances(full, 1, rng_seed=0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(3, 12), st.integers(3, 12)),
                min_size=1, max_size=6))
def test_overlap_rules_produce_disjoint_subsets(boxes):
    ms = [mask(i, rect(r, r + h, c, c + w)) for i, (r, c, h, w) in enumerate(boxes, start=1)]
    union = np.zeros((SIZE, SIZE), bool)
    for m in ms:
        union |= m.pixels
    for fn in (resolve_detector_overlaps, merge_point_masks):
        out = fn(ms)
        covered = np.zeros_like(union)
        for m in out:
            assert not (covered & m.pixels).any()
            covered |= m.pixels
        assert not (covered & ~union).any()
    for m, orig in zip(resolve_detector_overlaps(ms), ms):
        assert not (m.pixels & ~orig.pixels).any()


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(3, 12), st.integers(3, 12)),
                min_size=1, max_size=6))
def test_postprocess_invariants(boxes):
    ms = resolve_detector_overlaps([mask(i, rect(r, r + h, c, c + w))
                                    for i, (r, c, h, w) in enumerate(boxes, start=1)])
    out = postprocess(ms)
    assert layout_problems([m.pixels for m in out], []) == []


# -- summary -------------------------------------------------------------------

def test_summary_constant_field_and_centre():
    lay = InstanceLayout([mask(1, rect(0, 40, 0, 40))], (SIZE, SIZE), scale=4)
    s = build_summary(lay, {"dog": np.full((10, 10), 0.4)}, {"red": np.full((10, 10), 0.05)})
    assert s["1"]["object_probabilities"]["dog"] == "0.40"
    assert s["1"]["attribute_probabilities"]["red"] == "0.050"
    assert s["1"]["cluster_size"] == "100.0"
    assert (s["1"]["distance_from_top"], s["1"]["distance_from_left"]) == ("50.0", "50.0")


def test_summary_reproduces_reference_scores(porcupine_summary):
    """Three regions whose attention fields average to the reference scores."""
    grid = (48, 48)
    third = np.zeros(grid, bool)
    third.flat[np.flatnonzero(rect(20, 48, 20, 48, 48))[:745]] = True
    regions = {"1": rect(0, 14, 0, 28, 48), "2": rect(20, 35, 0, 15, 48), "3": third}
    words = ("porcupine", "squirrel", "raccoon")
    maps = {w: np.zeros(grid) for w in words}
    attrs = {"holding nut": np.zeros(grid)}
    for sid, cells in regions.items():
        ref = porcupine_summary[sid]
        for w in words:
            maps[w][cells] = float(ref["object_probabilities"][w])
        attrs["holding nut"][cells] = float(ref["attribute_probabilities"]["holding nut"])
    lay = InstanceLayout([mask(int(k), v) for k, v in regions.items()], grid)
    s = build_summary(lay, maps, attrs)
    for sid, ref in porcupine_summary.items():
        assert s[sid]["cluster_size"] == ref["cluster_size"]
        assert s[sid]["object_probabilities"] == ref["object_probabilities"]
        assert s[sid]["attribute_probabilities"] == ref["attribute_probabilities"]
    assert s["3"]["object_probabilities"]["porcupine"] == "0.71"
