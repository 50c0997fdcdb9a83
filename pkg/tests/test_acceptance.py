"""Acceptance criteria 1 to 10, each as one test with its runtime budget.

A line per criterion is printed at the end of the session (see conftest).
Run alone with ``pytest tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
"""

import json
import math
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from instancegen.assignment import assign_instances, parse_assignment_output, validate_assignment
from instancegen.backends import AttentionCapture, GenerationConfig, diffusion_generate
from instancegen.backends.synthetic import ScriptedChat, ScriptedJudge
from instancegen.benchmark import evaluate, image_path_for, load_suite
from instancegen.config import RunConfig
from instancegen.guidance import (
    GuidanceWeights,
    OptimizationSchedule,
    attribute_loss,
    attribute_loss_grad,
    background_loss,
    background_loss_grad,
    object_loss,
    object_loss_grad,
    run_guided_generation,
)
from instancegen.layout import (
    assign_anchors,
    build_layout,
    copy_instances,
    filter_oversized,
    merge_point_masks,
    postprocess,
    resolve_detector_overlaps,
)
from instancegen.pipeline import ARTIFACTS, run_pipeline

from conftest import prepare_scene
from oracles import bce_loop, ce_loop, central_difference, layout_problems
from test_layout import anchor, check_layout, mask, random_scene, rect


@contextmanager
def budget(seconds):
    start = time.perf_counter()
    yield
    spent = time.perf_counter() - start
    assert spent < seconds, f"took {spent:.2f} s, budget {seconds} s"


@pytest.mark.criterion(1, "loss values match a per-pixel brute-force sum")
def test_c1_loss_oracle():
    with budget(5):
        rng = np.random.default_rng(1)
        for _ in range(200):
            C = rng.uniform(1e-3, 1 - 1e-3, (8, 8))
            m = rng.random((8, 8)) < rng.uniform(0.1, 0.9)
            assert math.isclose(object_loss(C, m), bce_loop(C, m), rel_tol=1e-10)
            assert math.isclose(attribute_loss(C, m), ce_loop(C, m), rel_tol=1e-10)
        single = np.array([[1, 0], [0, 0]], bool)
        assert abs(object_loss(np.array([[0.9, 0.1], [0.1, 0.1]]), single) - 0.4741) < 1e-4
        assert abs(object_loss(np.full((2, 2), 0.5), np.array([[1, 1], [0, 0]], bool)) - 3.4657) < 1e-4
        corner = np.array([[0, 0], [0, 1]], bool)
        assert abs(attribute_loss(np.full((2, 2), 0.5), corner) - math.log(2)) < 1e-4


@pytest.mark.criterion(2, "analytic gradients match central differences")
def test_c2_gradients():
    with budget(30):
        rng = np.random.default_rng(2)
        for _ in range(50):
            C = rng.uniform(0.05, 0.95, (6, 6))
            m = rng.random((6, 6)) < 0.5
            for loss, grad in ((object_loss, object_loss_grad), (attribute_loss, attribute_loss_grad)):
                np.testing.assert_allclose(grad(C, m)[1], central_difference(lambda x: loss(x, m), C, h=1e-5),
                                           rtol=1e-4, atol=1e-9)
            z_ref, z = rng.normal(size=(4, 6, 6)), rng.normal(size=(4, 6, 6))
            np.testing.assert_allclose(background_loss_grad(z_ref, z, m)[1],
                                       central_difference(lambda x: background_loss(z_ref, x, m), z, h=1e-5),
                                       rtol=1e-4, atol=1e-9)


@pytest.mark.criterion(3, "100 random scenes give valid layouts; copying restores counts")
def test_c3_layout_invariants():
    with budget(60):
        rng = np.random.default_rng(3)
        copied = 0
        for k in range(100):
            image, anchors, det, seg, scale = random_scene(rng)
            layout = build_layout(image, anchors, det, seg.segment, scale)
            assert check_layout(layout, anchors) == [], f"scene {k}"
            assert not layout.dropped_anchors, f"scene {k}"
            if len(layout.masks) <= 4:
                before = [m.copy() for m in layout.masks]
                out = copy_instances(layout, 2, rng_seed=k)
                assert len(out.masks) == len(before) + 2
                assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(before, out.masks))
                assert layout_problems([m.pixels for m in out.masks], []) == []
                copied += 1
        assert copied >= 20


@pytest.mark.criterion(4, "overlap and filter rule table")
def test_c4_rule_table():
    with budget(1):
        out = resolve_detector_overlaps([mask(1, rect(0, 10, 0, 10)), mask(2, rect(8, 13, 0, 10))])
        assert [m.area for m in out] == [80, 50]

        merged = merge_point_masks([mask(1, rect(0, 10, 0, 10), [anchor(1, 1)], "point_prompt"),
                                    mask(2, rect(2, 12, 0, 10), [anchor(2, 2)], "point_prompt")])
        assert len(merged) == 1 and merged[0].area == 120

        split = merge_point_masks([mask(1, rect(0, 10, 0, 10), [anchor(1, 1)], "point_prompt"),
                                   mask(2, rect(5, 15, 0, 10), [anchor(3, 3)], "point_prompt")])
        assert [m.area for m in split] == [100, 50]

        kept, unresolved = assign_anchors([anchor(10, 10)], [mask(1, rect(0, 20, 0, 25)), mask(2, rect(5, 15, 5, 15))])
        assert [m.id for m in kept] == [2] and not unresolved

        assert [m.id for m in filter_oversized([mask(1, rect(0, 20, 0, 40)), mask(2, rect(0, 16, 0, 20))],
                                               40 * 40)] == [2]

        assert [m.id for m in postprocess([mask(1, rect(0, 5, 0, 5)), mask(2, rect(20, 30, 20, 30))])] == [2]


@pytest.mark.criterion(5, "56 loss calls; attention transforms only inside their windows")
def test_c5_schedule():
    scene = prepare_scene()
    with budget(10):
        _, hooks = run_guided_generation(scene.parsed.prompt, scene.plan, scene.layout, scene.run,
                                         scene.suite.require("diffusion"))
    assert hooks.loss_calls == 56
    assert hooks.self_applied and all(0 <= t <= 3 and 10 <= l <= 21 for t, l in hooks.self_applied)
    assert hooks.cross_applied and all(0 <= t <= 22 and 0 <= l <= 21 for t, l in hooks.cross_applied)
    assert len(set(hooks.self_applied)) == 4 * 12
    assert len(set(hooks.cross_applied)) == 23 * 22


@pytest.mark.criterion(6, "delta 1 with zero weights reproduces the plain run bit for bit")
def test_c6_identity():
    scene = prepare_scene()
    diffusion = scene.suite.require("diffusion")
    weights = GuidanceWeights(foreground_pixel_weight=0.0, background_pixel_weight=0.0,
                              attr_weight=0.0, bg_weight=0.0, delta=1.0)
    guided, _ = run_guided_generation(scene.parsed.prompt, scene.plan, scene.layout, scene.run, diffusion,
                                      OptimizationSchedule(self_mask_window=None), weights)
    plain = diffusion_generate(diffusion, scene.parsed.prompt, scene.run.seed,
                               GenerationConfig(scene.run.num_steps, scene.run.guidance_scale), AttentionCapture())
    assert guided.image.tobytes() == plain.image.tobytes()


@pytest.mark.criterion(7, "assignment retries once and the reference pairing validates")
def test_c7_assignment(porcupine_parsed, porcupine_summary, porcupine_reply, porcupine_bad_reply):
    assert validate_assignment(parse_assignment_output(porcupine_reply), porcupine_parsed, porcupine_summary) == []
    chat = ScriptedChat([porcupine_bad_reply, porcupine_reply])
    result = assign_instances(porcupine_parsed, porcupine_summary, chat)
    assert result.calls == 2
    assert validate_assignment(result.plan, porcupine_parsed, porcupine_summary) == []
    second_instruction = chat.calls[1][0]
    assert porcupine_bad_reply.strip() in second_instruction and "count_mismatch" in second_instruction


@pytest.mark.criterion(8, "identical configs give byte-identical artifacts")
def test_c8_determinism(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        record = run_pipeline(RunConfig.from_dict({"prompt": "two dogs and a cat in a backyard", "seed": 0,
                                                   "output_dir": str(d)}))
        assert record.ok, record.error
    for name in ("output.png", "layout.json", "assignment.json"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes(), name


def _scripted_answer(key, question):
    family, tier, band = int(key[:2]), key[2], key.split("-")[1]
    if tier == "B" and family > 20:
        return "no"
    if tier == "C" and band == "high":
        return "no"
    return "yes"


@pytest.mark.criterion(9, "540-prompt suite; scripted judge gives hand-computed means")
def test_c9_benchmark(tmp_path):
    suite = load_suite()
    assert len(suite) == 540
    assert {t: {len(p.questions) for p in suite if p.tier == t} for t in "ABC"} == {"A": {1}, "B": {2}, "C": {3}}
    for p in suite:
        image_path_for(tmp_path, p).write_bytes(b"")
    means = evaluate(tmp_path, suite, ScriptedJudge(rule=_scripted_answer)).summary()["by_tier"]
    # A: every prompt passes; B: families 1..20 of 60; C: two bands of three
    assert abs(means["A"] - 1.0) <= 1e-12
    assert abs(means["B"] - 20 / 60) <= 1e-12
    assert abs(means["C"] - 2 / 3) <= 1e-12


@pytest.mark.criterion(10, "five-prompt smoke run on a real diffusion backend")
def test_c10_real_backend_smoke(tmp_path):
    spec = os.environ.get("INSTANCEGEN_ACCEPTANCE_CONFIG")
    if not spec:
        pytest.skip("set INSTANCEGEN_ACCEPTANCE_CONFIG to a run config naming a real diffusion backend")
    base = json.loads(open(spec, encoding="utf-8").read())
    suite = [p for p in load_suite() if p.tier == "A"][:5]
    for p in suite:
        out = tmp_path / p.prompt_id
        record = run_pipeline(RunConfig.from_dict(base, prompt=p.prompt, output_dir=str(out)))
        assert record.ok, record.error
        assert all((out / name).is_file() for name in ARTIFACTS)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
