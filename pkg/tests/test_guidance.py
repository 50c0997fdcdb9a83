import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from instancegen.backends import AttentionCapture, GenerationConfig, diffusion_generate
from instancegen.guidance import (
    GuidanceTargets,
    GuidanceWeights,
    OptimizationSchedule,
    attribute_loss,
    attribute_loss_grad,
    background_loss,
    background_loss_grad,
    cross_attention_transform,
    object_loss,
    object_loss_grad,
    run_guided_generation,
    self_attention_transform,
    total_loss,
)

from oracles import bce_loop, bg_loop, ce_loop, central_difference

W = GuidanceWeights()


# -- worked values ------------------------------------------------------------

def test_object_loss_single_fg_pixel():
    C = np.array([[0.9, 0.1], [0.1, 0.1]])
    m = np.array([[1, 0], [0, 0]], dtype=bool)
    assert object_loss(C, m) == pytest.approx(-4.5 * math.log(0.9), abs=1e-12)
    assert object_loss(C, m) == pytest.approx(0.4741, abs=1e-4)


def test_object_loss_uniform_half():
    C = np.full((2, 2), 0.5)
    m = np.array([[1, 1], [0, 0]], dtype=bool)
    assert object_loss(C, m) == pytest.approx(3.4657, abs=1e-4)


def test_object_loss_perfect_map_is_near_zero():
    m = np.random.default_rng(0).random((6, 6)) < 0.5
    weighted = 1.5 * m.sum() + (~m).sum()
    assert object_loss(m.astype(float), m) <= weighted * -math.log(1 - 1e-6) + 1e-12


def test_attribute_loss_values():
    assert attribute_loss(np.full((3, 3), 0.3), np.zeros((3, 3), bool)) == 0.0
    m = np.zeros((2, 2), bool)
    m[1, 1] = True
    assert attribute_loss(np.full((2, 2), 0.5), m) == pytest.approx(math.log(2), abs=1e-12)
    assert attribute_loss(np.full((2, 2), 1 - 1e-6), np.ones((2, 2), bool)) < 1e-5


def test_background_loss_values():
    z = np.zeros((2, 2))
    assert background_loss(z, z.copy(), np.ones((2, 2), bool)) == 0.0
    z2 = z.copy()
    z2[0, 1] = 1.0
    assert background_loss(z, z2, np.ones((2, 2), bool)) == pytest.approx(0.25)
    assert background_loss(z, z2, np.zeros((2, 2), bool)) == 0.0


def test_total_loss_weighting():
    assert total_loss([1.0], [1.0], 1.0) == pytest.approx(2.1)
    assert total_loss([], [], 0.0) == 0.0
    assert total_loss([0.5, 0.7], [], 0.0) == pytest.approx(1.2)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        object_loss(np.zeros((2, 2)), np.zeros((2, 3), bool))
    with pytest.raises(ValueError):
        background_loss(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 3), bool))


# -- transforms ---------------------------------------------------------------

def test_cross_transform_values():
    scores = np.array([[0.4, 0.2]])
    out = cross_attention_transform(scores, np.array([[True, False]]), -1.5)
    assert out[0, 0] == pytest.approx(-0.6)
    assert out[0, 1] == 0.2
    np.testing.assert_array_equal(cross_attention_transform(scores, np.zeros((1, 2), bool), -1.5), scores)
    np.testing.assert_array_equal(cross_attention_transform(scores, np.ones((1, 2), bool), 1.0), scores)


def test_self_transform_blocks_cross_partition_pairs():
    rng = np.random.default_rng(3)
    fg = np.array([[True, False], [False, True]])
    S = rng.random((4, 4))
    out = self_attention_transform(S, fg)
    f = fg.ravel()
    for i in range(4):
        for j in range(4):
            assert out[i, j] == (S[i, j] if f[i] == f[j] else 0.0)
    np.testing.assert_array_equal(self_attention_transform(S, np.ones((2, 2), bool)), S)


# -- property checks against the brute-force oracles --------------------------

maps = st.tuples(st.integers(1, 8), st.integers(1, 8)).flatmap(
    lambda s: st.tuples(arrays(np.float64, s, elements=st.floats(1e-3, 1 - 1e-3)), arrays(np.bool_, s)))


@settings(max_examples=100, deadline=None)
@given(maps)
def test_losses_match_brute_force(pair):
    C, m = pair
    assert object_loss(C, m) == pytest.approx(bce_loop(C, m), rel=1e-10)
    assert attribute_loss(C, m) == pytest.approx(ce_loop(C, m), rel=1e-10, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(maps, st.floats(0.1, 10))
def test_object_loss_weight_scaling(pair, k):
    # scaling both pixel weights scales the loss
    C, m = pair
    w = GuidanceWeights(foreground_pixel_weight=1.5 * k, background_pixel_weight=k)
    assert object_loss(C, m, w) == pytest.approx(k * object_loss(C, m), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(maps)
def test_losses_nonnegative_and_mask_monotone(pair):
    C, m = pair
    assert object_loss(C, m) >= 0
    more = m.copy()
    more.flat[0] = True
    assert attribute_loss(C, more) >= attribute_loss(C, m)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_background_loss_matches_loop(ch, h, w, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(ch, h, w)), rng.normal(size=(ch, h, w))
    B = rng.random((h, w)) < 0.5
    assert background_loss(a, b, B) == pytest.approx(bg_loop(a, b, B), rel=1e-12, abs=1e-15)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(50):
        C = rng.uniform(0.05, 0.95, (4, 5))
        m = rng.random((4, 5)) < 0.5
        _, g = object_loss_grad(C, m)
        np.testing.assert_allclose(g, central_difference(lambda x: object_loss(x, m), C), rtol=1e-4, atol=1e-8)
        _, g = attribute_loss_grad(C, m)
        np.testing.assert_allclose(g, central_difference(lambda x: attribute_loss(x, m), C), rtol=1e-4, atol=1e-8)
        z_ref, z = rng.normal(size=(2, 4, 5)), rng.normal(size=(2, 4, 5))
        _, g = background_loss_grad(z_ref, z, m)
        np.testing.assert_allclose(g, central_difference(lambda x: background_loss(z_ref, x, m), z),
                                   rtol=1e-4, atol=1e-8)


# -- schedule ------------------------------------------------------------------

def test_default_schedule_arithmetic():
    s = OptimizationSchedule()
    it = s.iterations()
    assert s.total_iterations() == 56
    assert it[0] == 16 and it[5] == 16 and it[10] == 6 and it[20] == 1
    assert 21 not in it


def test_schedule_rejects_bad_windows():
    with pytest.raises(ValueError):
        OptimizationSchedule(optimize_window=(5, 2))
    with pytest.raises(ValueError):
        OptimizationSchedule(base_iterations=-1)
    with pytest.raises(ValueError):
        OptimizationSchedule(cross_mask_window=((0, 22), (0, 40))).check_against(26, 22)


def test_guided_run_counts_and_windows(guided_scene):
    s = guided_scene
    _, hooks = run_guided_generation(s.parsed.prompt, s.plan, s.layout, s.run, s.suite.require("diffusion"))
    assert hooks.loss_calls == 56
    assert len(hooks.trace) == 56
    assert hooks.self_applied and hooks.cross_applied
    assert all(0 <= t <= 3 and 10 <= l <= 21 for t, l in hooks.self_applied)
    assert all(0 <= t <= 22 and 0 <= l <= 21 for t, l in hooks.cross_applied)
    assert len(set(hooks.self_applied)) == 4 * 12
    assert len(set(hooks.cross_applied)) == 23 * 22


def test_guided_run_lowers_the_loss(guided_scene):
    s = guided_scene
    _, hooks = run_guided_generation(s.parsed.prompt, s.plan, s.layout, s.run, s.suite.require("diffusion"))
    first_step = [r.total for r in hooks.trace if r.timestep == 0]
    assert first_step[-1] < first_step[0]


def test_identity_guidance_reproduces_plain_run(guided_scene):
    s = guided_scene
    diffusion = s.suite.require("diffusion")
    weights = GuidanceWeights(foreground_pixel_weight=0.0, background_pixel_weight=0.0,
                              attr_weight=0.0, bg_weight=0.0, delta=1.0)
    schedule = OptimizationSchedule(self_mask_window=None)
    guided, hooks = run_guided_generation(s.parsed.prompt, s.plan, s.layout, s.run, diffusion, schedule, weights)
    plain = diffusion_generate(diffusion, s.parsed.prompt, s.run.seed, GenerationConfig(s.run.num_steps,
                               s.run.guidance_scale), AttentionCapture())
    assert hooks.loss_calls == 56
    assert np.array_equal(guided.image, plain.image)
    assert all(np.array_equal(a, b) for a, b in zip(guided.latents, plain.latents))


def test_targets_split_objects_and_background(guided_scene):
    s = guided_scene
    grid = s.run.attention.attn_resolution
    t = GuidanceTargets.from_plan(s.plan, s.layout, grid)
    union = np.zeros(grid, bool)
    for m in t.object_masks.values():
        assert not (union & m).any()
        union |= m
    np.testing.assert_array_equal(union, t.foreground)
    np.testing.assert_array_equal(t.background, ~t.foreground)
