import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fourier_scattering.analysis import (BandLimitSpec, PreconditionError, WarpField,
                                         band_limit, brute_force_concentration_constant,
                                         concentration_constant, diffeo_distance,
                                         energy_ledger, estimate_decay, lower_bound_check,
                                         path_concentration, proof_decay_bound,
                                         threshold_census, translation_distance, warp)
from fourier_scattering.frame import ConfigurationError, LatticeSpec, build_frame
from fourier_scattering.transform import ScatterConfig, scatter


@pytest.fixture(scope="module")
def frame():
    return build_frame(LatticeSpec(1, 64, 4))


# ---- ledger


def test_ledger_identity_random(frame, rng):
    f = rng.standard_normal(64)
    led = energy_ledger(scatter(f, frame, K=3, keep_coefficients=False))
    assert led.identity_applicable
    assert led.relative_residual <= 1e-8
    assert led.node[0] == pytest.approx(np.sum(f ** 2))
    assert all(s >= -1e-9 for s in led.layer_parseval_slack())


def test_ledger_constant(frame):
    f = np.full(64, 0.5)
    led = energy_ledger(scatter(f, frame, K=2))
    assert led.coef[0] == pytest.approx(16.0)
    assert all(abs(c) < 1e-25 for c in led.coef[1:])
    assert all(abs(e) < 1e-25 for e in led.node[1:])


def test_ledger_zero(frame):
    led = energy_ledger(scatter(np.zeros(64), frame, K=2))
    assert all(c == 0 for c in led.coef) and all(e == 0 for e in led.node)


def test_ledger_pruned_not_applicable(frame, rng):
    tree = scatter(rng.standard_normal(64), frame, K=2, prune_eps=0.2)
    led = energy_ledger(tree)
    assert not led.identity_applicable
    assert led.to_json()["residual"] is None


def test_truncated_ledger_respects_layer_inequality(frame, rng):
    led = energy_ledger(scatter(rng.standard_normal(64), frame, M=2, K=3))
    assert not led.full_width
    assert all(s >= -1e-9 for s in led.layer_parseval_slack())


# ---- decay


def test_decay_random_full_width(frame, rng):
    led = energy_ledger(scatter(rng.standard_normal(64), frame, K=3, keep_coefficients=False))
    est = estimate_decay(led, frame)
    assert all(0 <= r <= 1 for r in est.ratios)
    assert 0 < est.rate < 1
    assert not est.violation and not est.degenerate
    assert est.proof_bound >= est.rate


def test_decay_pure_tone(frame):
    x = np.arange(64)
    f = np.cos(2 * np.pi * 12 * x / 64)
    est = estimate_decay(energy_ledger(scatter(f, frame, K=3)))
    assert est.ratios[1] < 1e-25
    assert est.rate == 0.0


def test_decay_constant_is_degenerate(frame):
    est = estimate_decay(energy_ledger(scatter(np.ones(64), frame, K=2)))
    assert est.degenerate and est.rate == 0.0


def test_proof_bound_values():
    b1 = proof_decay_bound(build_frame(LatticeSpec(1, 64, 4)))
    b2 = proof_decay_bound(build_frame(LatticeSpec(2, 64, 8)))
    assert b1[0] == pytest.approx(1 - 4 / 27, abs=1e-6)
    assert 0 < b2[0] < 1 and b2[0] > b1[0]


# ---- concentration


def test_concentration_constant_examples():
    assert concentration_constant(4, 2) == pytest.approx((7 / 8) ** 4)
    assert concentration_constant(4, 1) == pytest.approx(0.765625)
    vals = [concentration_constant(M, 2) for M in range(1, 50)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 0.95


@pytest.mark.parametrize("d,N,a,M", [(1, 64, 4, 4), (2, 64, 4, 2), (1, 128, 8, 3)])
def test_brute_force_concentration(d, N, a, M):
    best, excess = brute_force_concentration_constant(build_frame(LatticeSpec(d, N, a)), M)
    assert abs(best - concentration_constant(M, d)) <= 1e-12
    assert excess <= 1e-12


def test_path_concentration_first_layer(frame, rng):
    f = rng.standard_normal(64)
    rep = path_concentration(f, frame, 4, [(p,) for p in range(-7, 9) if p])
    assert rep["passed"]
    assert rep["min_ratio"] >= rep["C_M"] - 1e-9


def test_path_concentration_zero_node(frame):
    rep = path_concentration(np.ones(64), frame, 2, [(1,)])
    assert rep["rows"][0]["zero_energy"] and rep["rows"][0]["ratio"] == 1.0


def test_path_concentration_empty_path(frame):
    with pytest.raises(PreconditionError):
        path_concentration(np.ones(64), frame, 2, [()])


# ---- band limits and lower bound


def test_band_limit_spec(rng):
    f = band_limit(rng.standard_normal(64), 10)
    assert BandLimitSpec(0.0, 10).satisfied_by(f)
    assert not BandLimitSpec(0.0, 5).satisfied_by(f)
    with pytest.raises(ConfigurationError):
        BandLimitSpec(1.0, 3)


def test_lower_bound_band_limited(rng):
    frame = build_frame(LatticeSpec(1, 128, 4))
    f = band_limit(rng.standard_normal(128), 32)
    rep = lower_bound_check(f, frame, 8, 2, BandLimitSpec(0.0, 32))
    assert not rep["skipped"]
    assert rep["C_M"] == pytest.approx((15 / 16) ** 2)
    assert rep["passed"] and rep["measured"] >= 0.9


def test_lower_bound_skips_nonpositive_floor(rng):
    frame = build_frame(LatticeSpec(1, 128, 4))
    f = rng.standard_normal(128)
    rep = lower_bound_check(f, frame, 1, 1, BandLimitSpec(0.999, 4))
    assert rep["skipped"] and rep["passed"]


def test_lower_bound_constant():
    frame = build_frame(LatticeSpec(1, 64, 4))
    rep = lower_bound_check(np.ones(64), frame, 2, 2, BandLimitSpec(0.0, 0.5))
    assert rep["measured"] == pytest.approx(1.0)


def test_lower_bound_precondition(rng):
    frame = build_frame(LatticeSpec(1, 64, 4))
    with pytest.raises(PreconditionError):
        lower_bound_check(rng.standard_normal(64), frame, 2, 2, BandLimitSpec(0.0, 4))
    f = band_limit(rng.standard_normal(64), 20)
    with pytest.raises(PreconditionError):
        lower_bound_check(f, frame, 2, 2, BandLimitSpec(0.0, 20))


# ---- translation and warps


def test_translation_trivial_shifts(frame, rng):
    f = rng.standard_normal(64)
    assert translation_distance(f, 0, frame, ScatterConfig(M=3, K=2))["distance"] == 0.0
    assert translation_distance(f, 64, frame, ScatterConfig(M=3, K=2))["distance"] == 0.0


def test_translation_bound(frame, rng):
    f = rng.standard_normal(64)
    for y in (1, 2, 4):
        rep = translation_distance(f, y, frame, ScatterConfig(K=2))
        assert rep["passed"] and 0 < rep["distance"] <= rep["bound"]


def test_warp_constant_is_roll(rng):
    f = rng.standard_normal((16, 16))
    out = warp(f, WarpField.constant(f.shape, (2, -3)))
    np.testing.assert_allclose(out, np.roll(f, (2, -3), axis=(0, 1)), atol=1e-14)


def test_warp_zero_is_identity(rng):
    f = rng.standard_normal(32)
    np.testing.assert_array_equal(warp(f, WarpField.constant(f.shape, 0)), f)


def test_warp_half_sample_is_average():
    f = np.arange(8.0)
    out = warp(f, WarpField.constant((8,), 0.5))
    np.testing.assert_allclose(out[1:], 0.5 * (f[1:] + f[:-1]))


def test_diffeo_constant_field_matches_translation(frame, rng):
    f = rng.standard_normal(64)
    cfg = ScatterConfig(M=3, K=2)
    rep = diffeo_distance(f, WarpField.constant((64,), 2), frame, cfg, scales=(1.0,))
    ref = translation_distance(f, 2, frame, cfg)
    assert abs(rep["distances"][0] - ref["distance"]) <= 1e-6


def test_diffeo_zero_field(frame, rng):
    f = rng.standard_normal(64)
    rep = diffeo_distance(f, WarpField.constant((64,), 0), frame, ScatterConfig(M=2, K=1))
    assert rep["distances"] == [0.0] * 4


def test_diffeo_gradient_cap(frame, rng):
    field = WarpField.sinusoidal((64,), 8.0, 1)
    assert field.grad_sup_norm > 0.5
    with pytest.raises(PreconditionError):
        diffeo_distance(rng.standard_normal(64), field, frame)


def test_diffeo_linear_scaling(rng):
    frame = build_frame(LatticeSpec(1, 128, 4))
    f = band_limit(rng.standard_normal(128), 8)
    amp = 0.9 * 0.5 / (2 * np.pi / 128)
    rep = diffeo_distance(f, WarpField.sinusoidal((128,), amp), frame, ScatterConfig(K=2))
    assert rep["relative_residual"] <= 0.1


def test_warp_field_norms():
    field = WarpField.sinusoidal((64, 64), 2.0, 1)
    assert field.sup_norm == pytest.approx(2.0 * math.sqrt(2), rel=1e-12)
    assert field.grad_sup_norm == pytest.approx(2.0 * math.sin(2 * math.pi / 64), rel=1e-12)


# ---- census


def test_census_constant(frame):
    c = threshold_census(scatter(np.ones(64), frame, M=3, K=2), 0.005)
    assert str(c) == "1,0,0"
    assert c.totals == [1, 6, 36]


def test_census_smooth_signal(rng):
    frame = build_frame(LatticeSpec(2, 64, 4))
    x = np.arange(64)
    img = np.add.outer(np.sin(2 * np.pi * 3 * x / 64), np.cos(2 * np.pi * 5 * x / 64)) + 2
    img += 0.05 * band_limit(rng.standard_normal((64, 64)), 12)
    c = threshold_census(scatter(img, frame, M=3, K=2, keep_coefficients=False), 0.005)
    assert c.counts[0] == 1
    assert c.counts[2] < c.counts[1]


def test_census_csv_and_bad_theta(frame):
    tree = scatter(np.ones(64), frame, M=1, K=1)
    assert threshold_census(tree).to_csv() == "layer,survivors,total\n0,1,1\n1,0,2\n"
    with pytest.raises(ConfigurationError):
        threshold_census(tree, 0.0)


# ---- properties


@settings(max_examples=30, deadline=None)
@given(M=st.integers(1, 40), d=st.sampled_from([1, 2]))
def test_concentration_constant_monotone(M, d):
    assert concentration_constant(M + 1, d) >= concentration_constant(M, d)
    assert 0 < concentration_constant(M, d) < 1


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.integers(-7, 8).filter(bool))
def test_path_concentration_property(seed, p):
    frame = build_frame(LatticeSpec(1, 64, 4))
    f = np.random.default_rng(seed).standard_normal(64)
    assert path_concentration(f, frame, 4, [(p,), (p, 1)])["passed"]
