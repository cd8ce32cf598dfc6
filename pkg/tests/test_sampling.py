import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sdviab import sampling as smp
from sdviab.geometry import Polytope

SQUARE = Polytope.inf_ball(2, 0.5)
INNER = np.array([[0.4, 0.4], [-0.4, 0.4], [-0.4, -0.4], [0.4, -0.4]])


def test_uniform_one_dimensional_signs():
    rng = np.random.default_rng(0)
    draws = np.array([smp.sample_uniform_sphere(1, rng)[0] for _ in range(4000)])
    assert set(np.unique(draws)) == {-1.0, 1.0}
    assert abs(draws.mean()) < 0.05


def test_uniform_mean_near_zero():
    rng = np.random.default_rng(1)
    X = np.array([smp.sample_uniform_sphere(3, rng) for _ in range(100_000)])
    assert np.linalg.norm(X.mean(axis=0)) < 0.02


def test_uniform_seeded_stream_repeats():
    a = smp.direction_stream(4, 10, seed=9)
    b = smp.direction_stream(4, 10, seed=9)
    np.testing.assert_array_equal(a, b)


def test_uniform_pairwise_angles_chi_square():
    # for n = 3 the cosine of the angle between independent draws is uniform
    rng = np.random.default_rng(2)
    X = np.array([smp.sample_uniform_sphere(3, rng) for _ in range(20_000)])
    cos = np.einsum("ij,ij->i", X[::2], X[1::2])
    counts, _ = np.histogram(cos, bins=20, range=(-1, 1))
    assert stats.chisquare(counts).pvalue > 0.01


def test_vmf_zero_concentration_is_uniform_stream():
    r1, r2 = np.random.default_rng(4), np.random.default_rng(4)
    for _ in range(10):
        np.testing.assert_array_equal(
            smp.sample_vmf(np.array([1.0, 0, 0]), 0.0, 3, r1), smp.sample_uniform_sphere(3, r2)
        )


def test_vmf_zero_concentration_two_sample():
    rng = np.random.default_rng(5)
    mu = np.array([0.0, 0.0, 1.0])
    a = [smp.sample_vmf(mu, 0.0, 3, rng) @ mu for _ in range(3000)]
    b = [smp.sample_uniform_sphere(3, rng) @ mu for _ in range(3000)]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_vmf_mean_resultant():
    rng = np.random.default_rng(6)
    mu = np.array([1.0, 0.0, 0.0])
    w = np.array([smp.sample_vmf(mu, 100.0, 3, rng) @ mu for _ in range(20_000)])
    expected = 1.0 / math.tanh(100.0) - 1.0 / 100.0
    assert w.mean() == pytest.approx(expected, abs=0.005)


def test_vmf_concentration_orders_spread():
    rng = np.random.default_rng(7)
    mu = np.array([0.0, 1.0, 0.0, 0.0])
    var = [np.var([smp.sample_vmf(mu, k, 4, rng) @ mu for _ in range(4000)]) for k in (50, 10, 2)]
    assert var[0] < var[1] < var[2]


def test_vmf_rejects_negative_kappa():
    with pytest.raises(ValueError):
        smp.sample_vmf(np.array([1.0, 0.0]), -1.0, 2, np.random.default_rng(0))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.floats(0, 200), st.integers(0, 2**32 - 1))
def test_vmf_unit_norm(n, kappa, seed):
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=n)
    x = smp.sample_vmf(mu / np.linalg.norm(mu), kappa, n, rng)
    assert abs(np.linalg.norm(x) - 1.0) < 1e-12


def test_grad_update_no_improvement():
    r1, r0 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    mu, kappa = smp.grad_err_update(0.5, 0.5, r1, r0, 0.1, 1.0, 0.5)
    assert kappa == 0.1
    np.testing.assert_array_equal(mu, -r1)


def test_grad_update_large_improvement():
    r1, r0 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    mu, kappa = smp.grad_err_update(1e-6, 1.0, r1, r0, 0.1, 1.0, 100.0)
    assert kappa == pytest.approx(1.0)
    np.testing.assert_array_equal(mu, r1)


def test_grad_update_pathological_repeat():
    r = np.array([0.6, 0.8])
    mu, kappa = smp.grad_err_update(0.3, 0.3, r, r.copy(), 1.0, 1.0, 0.5)
    assert kappa == 1.0  # gradient 0, so omega = 0 and kappa = nu0
    mu, kappa = smp.grad_err_update(0.0, 0.0, r, r, 0.0, 1.0, 0.5)
    assert kappa == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.integers(0, 2**32 - 1),
       st.floats(0, 2), st.floats(0, 2), st.floats(0, 2))
def test_grad_update_kappa_nonnegative(d1, d0, seed, nu0, nu1, nu2):
    rng = np.random.default_rng(seed)
    r1, r0 = rng.normal(size=3), rng.normal(size=3)
    mu, kappa = smp.grad_err_update(d1, d0, r1 / np.linalg.norm(r1), r0 / np.linalg.norm(r0),
                                    nu0, nu1, nu2)
    assert kappa >= 0 and np.isfinite(kappa)
    assert abs(np.linalg.norm(mu) - 1.0) < 1e-12


def test_avg_opposite_examples():
    mu, kappa = smp.avg_opposite_direction([[1.0, 0.0]], 1, 0.05)
    np.testing.assert_array_equal(mu, [-1.0, 0.0])
    assert kappa == 0.05
    _, kappa = smp.avg_opposite_direction([[1.0, 0.0], [-1.0, 0.0]], 2, 0.05)
    assert kappa == 0.0
    _, kappa = smp.avg_opposite_direction([[1.0, 0.0]], 5000, 0.05)
    assert kappa == smp.KAPPA_CAP


def test_point_to_plane_tie_rule():
    mu, kappa = smp.point_to_plane_direction(INNER, SQUARE, np.zeros(2), 0.5)
    # vertex 0 = (0.4, 0.4); its first nearest facet is x <= 0.5
    np.testing.assert_allclose(mu, np.array([0.5, 0.4]) / np.linalg.norm([0.5, 0.4]))
    assert kappa == pytest.approx(0.05)


def test_point_to_plane_touching_is_uniform():
    V = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]])
    _, kappa = smp.point_to_plane_direction(V, SQUARE, np.zeros(2), 0.5)
    assert kappa == 0.0


def test_point_to_plane_single_gap():
    V = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.2, -0.3]])
    over = Polytope(A=[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [1.0, -1.0]],
                    b=[0.5, 0.5, 0.5, 0.5, 0.9])
    v0 = np.array([0.0, 0.1])
    mu, kappa = smp.point_to_plane_direction(V, over, v0, 1.0)
    # nearest facet of (0.2, -0.3) is y >= -0.5 at distance 0.2, foot (0.2, -0.5)
    foot = np.array([0.2, -0.5])
    np.testing.assert_allclose(mu, (foot - v0) / np.linalg.norm(foot - v0), atol=1e-9)
    assert kappa == pytest.approx(0.2)


def test_defaults_per_mode():
    assert smp.default_params("gradient_volume", 4) == (0.1, 1.0, 0.25)
    assert smp.default_params("gradient_hausdorff", 4) == (1.0, 1.0, 0.25)
    assert smp.default_params("avg_opposite", 4)[1] == pytest.approx(0.025)
    assert smp.default_params("point_to_plane", 4)[1] == pytest.approx(0.25)
    with pytest.raises(ValueError):
        smp.SamplerState("bogus", 2)


def test_uniform_mode_matches_sphere_stream():
    state = smp.SamplerState("uniform", 3, seed=12)
    ref = np.random.default_rng(12)
    for _ in range(8):
        np.testing.assert_array_equal(smp.next_direction(state), smp.sample_uniform_sphere(3, ref))


def test_history_bookkeeping():
    state = smp.SamplerState("avg_opposite", 3, seed=1)
    for k in range(6):
        smp.next_direction(state)
        assert len(state.history) == k + 1
    assert state.kappa > 0


def test_modes_needing_over_raise():
    for mode in ("gradient_hausdorff", "gradient_volume", "point_to_plane"):
        with pytest.raises(ValueError):
            smp.next_direction(smp.SamplerState(mode, 2))


@pytest.mark.parametrize("mode", smp.MODES)
def test_determinism_all_modes(mode):
    def drive(seed):
        s = smp.SamplerState(mode, 2, seed=seed)
        out = []
        for i in range(12):
            r = smp.next_direction(s, under=INNER, over=SQUARE, v0=np.zeros(2))
            s.record_error(1.0 / (i + 1))
            out.append(r)
            assert abs(np.linalg.norm(r) - 1) < 1e-12 and s.kappa >= 0
        return np.array(out)

    np.testing.assert_array_equal(drive(3), drive(3))
