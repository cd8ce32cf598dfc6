import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from sdviab import discretization as disc
from sdviab import oracle
from sdviab.errors import BoundBlowup, ConfigError, OrderTooLow
from sdviab.geometry import Polytope


def test_truncated_exponential_zero_matrix():
    np.testing.assert_array_equal(disc.truncated_exponential(np.zeros((1, 1)), 0.1, 4), [[1.0]])


def test_truncated_exponential_scalar():
    assert disc.truncated_exponential([[1.0]], 0.1, 2)[0, 0] == pytest.approx(1.105, abs=1e-15)


def test_truncated_exponential_nilpotent():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    np.testing.assert_allclose(disc.truncated_exponential(A, 0.05, 3), [[1, 0.05], [0, 1]])


def test_truncated_exponential_rejects_nonsquare():
    with pytest.raises(ValueError):
        disc.truncated_exponential(np.zeros((2, 3)), 0.1, 2)


def test_input_matrix_examples():
    B = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_allclose(disc.input_matrix(np.zeros((3, 3)), B, 0.2, 4), 0.2 * B)
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    d = 0.05
    np.testing.assert_allclose(disc.input_matrix(A, [0.0, 1.0], d, 1), [[d**2 / 2], [d]])
    val = disc.input_matrix([[1.0]], [[1.0]], 0.1, 2)[0, 0]
    assert val == pytest.approx(0.1 + 0.005 + 0.1**3 / 6, abs=1e-15)
    assert val == pytest.approx(0.105166667, abs=1e-9)


def test_input_matrix_dimension_mismatch():
    with pytest.raises(ValueError):
        disc.input_matrix(np.eye(2), np.ones((3, 1)), 0.1, 2)


def test_psi_examples():
    assert disc.psi_delta(np.zeros((2, 2)), 0.1, 4) == 0.0
    psi = disc.psi_delta([[1.0]], 0.1, 2)
    assert psi == pytest.approx(1.70940e-4, rel=1e-5)
    gap = abs(math.exp(0.1) - 1.105)
    assert gap == pytest.approx(1.70918e-4, rel=1e-5)
    assert gap <= psi
    with pytest.raises(OrderTooLow):
        disc.psi_delta(100.0 * np.eye(2), 0.1, 4)


def test_integral_error_bound_examples():
    assert disc.integral_error_bound(np.zeros((2, 2)), 0.1, 2) == 0.0
    bound = disc.integral_error_bound([[1.0]], 0.1, 2)
    assert bound == pytest.approx(4.2735e-6, rel=1e-4)
    # quadrature of the true integrated tail
    tail, _ = quad(lambda l: math.exp(l) - (1 + l + l * l / 2), 0.0, 0.1, epsabs=1e-16)
    assert tail <= bound
    assert disc.integral_error_bound([[1.0]], 0.1, 5) < bound


def test_sup_bu_norm_examples():
    U = Polytope.box([-0.15], [0.15])
    assert disc.sup_bu_norm([[0.0], [1.0]], U) == pytest.approx(0.15)
    assert disc.sup_bu_norm(np.zeros((2, 1)), U) == 0.0
    assert disc.sup_bu_norm(np.eye(2), Polytope.inf_ball(2, 1.0)) == pytest.approx(1.0)


def test_sup_bu_norm_matches_vertex_enumeration():
    rng = np.random.default_rng(3)
    B = rng.normal(size=(3, 2))
    U = Polytope.box([-1.0, -0.5], [2.0, 0.3])
    corners = np.array([[a, b] for a in (-1.0, 2.0) for b in (-0.5, 0.3)])
    assert disc.sup_bu_norm(B, U) == pytest.approx(np.abs(corners @ B.T).max())


def test_gamma_zero_matrix():
    alpha, beta = disc.gamma_coefficients(
        np.zeros((2, 2)), np.ones((2, 1)), Polytope.box([-1], [1]), 0.1, 4, 5
    )
    assert np.all(alpha == 0) and np.all(beta == 0)


def test_gamma_first_step_scalar():
    alpha, beta = disc.gamma_coefficients([[1.0]], [[1.0]], Polytope.box([-1], [1]), 0.1, 2, 3)
    assert alpha[1] == pytest.approx(1.70940e-4, rel=1e-5)
    assert beta[1] == pytest.approx(4.2735e-6, rel=1e-4)


def test_gamma_tightens_with_order():
    U = Polytope.box([-1], [1])
    A = np.array([[0.3, 1.0], [-2.0, -0.4]])
    B = np.array([[0.0], [1.0]])
    last = None
    for zeta in (2, 4, 8, 16):
        alpha, beta = disc.gamma_coefficients(A, B, U, 0.05, zeta, 20)
        g = alpha + beta
        if last is not None:
            assert np.all(g[1:] < last[1:])
        last = g
    assert last[-1] < 1e-15


def test_gamma_cap_raises():
    with pytest.raises(BoundBlowup):
        disc.gamma_coefficients(5.0 * np.eye(2), np.eye(2), Polytope.inf_ball(2, 1.0),
                                0.2, 2, 50, cap=1e-3)


def test_prediction_matrices_one_step():
    Azd = np.array([[1.0, 0.1], [0.0, 1.0]])
    Bzd = np.array([[0.005], [0.1]])
    G, H = disc.prediction_matrices(Azd, Bzd, 1)
    np.testing.assert_array_equal(G, np.vstack([np.eye(2), Azd]))
    np.testing.assert_array_equal(H, np.vstack([np.zeros((2, 1)), Bzd]))


def test_prediction_matrices_identity_accumulates():
    b = np.array([[1.0], [2.0]])
    G, H = disc.prediction_matrices(np.eye(2), b, 4)
    assert G.shape == (10, 2) and H.shape == (10, 4)
    u = np.array([0.5, -1.0, 2.0, 0.25])
    x0 = np.array([1.0, -1.0])
    X = (G @ x0 + H @ u).reshape(5, 2)
    for k in range(5):
        np.testing.assert_allclose(X[k], x0 + b[:, 0] * u[:k].sum())


def test_prediction_matrices_match_simulation():
    rng = np.random.default_rng(0)
    n, m, N = 12, 4, 20
    Azd = np.eye(n) + 0.05 * rng.normal(size=(n, n))
    Bzd = 0.05 * rng.normal(size=(n, m))
    G, H = disc.prediction_matrices(Azd, Bzd, N)
    x0 = rng.normal(size=n)
    u = rng.normal(size=(N, m))
    X = (G @ x0 + H @ u.reshape(-1)).reshape(N + 1, n)
    x = x0
    for k in range(N + 1):
        np.testing.assert_allclose(X[k], x, rtol=1e-10, atol=1e-12)
        if k < N:
            x = Azd @ x + Bzd @ u[k]
    # structure
    assert np.all(H[:n] == 0)
    np.testing.assert_array_equal(G[:n], np.eye(n))


def test_problem_validation():
    sysm = disc.LtiSystem(np.zeros((2, 2)), np.ones((2, 1)))
    K = Polytope.inf_ball(2, 1.0)
    U = Polytope.box([-1], [1])
    with pytest.raises(ConfigError):
        disc.SampledDataProblem(sysm, K, U, delta=0.0, tau=1.0)
    with pytest.raises(ConfigError):
        disc.SampledDataProblem(sysm, K, U, delta=0.1, tau=-1.0)
    with pytest.raises(ConfigError):
        disc.SampledDataProblem(sysm, K, U, delta=0.1, tau=1.0, zeta=0)
    with pytest.raises(ConfigError):
        disc.SampledDataProblem(sysm, Polytope.inf_ball(3, 1.0), U, delta=0.1, tau=1.0)
    p = disc.SampledDataProblem(sysm, K, U, delta=0.05, tau=1.0)
    assert p.n_steps == 20
    assert disc.SampledDataProblem(sysm, K, U, delta=0.3, tau=1.0).n_steps == 4


def test_lti_system_validation():
    with pytest.raises(ValueError):
        disc.LtiSystem(np.zeros((2, 3)), np.ones((2, 1)))
    with pytest.raises(ValueError):
        disc.LtiSystem(np.zeros((2, 2)), np.ones((3, 1)))
    with pytest.raises(ValueError):
        disc.LtiSystem(np.array([[np.nan, 0], [0, 0]]), np.ones((2, 1)))


matrices = st.integers(1, 5).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.integers(0, 2**32 - 1),
        st.floats(0.01, 0.3),
        st.sampled_from([2, 3, 4, 6]),
    )
)


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_psi_bounds_true_truncation(case):
    n, seed, delta, zeta = case
    rng = np.random.default_rng(seed)
    A = rng.normal(scale=3.0, size=(n, n))
    if disc.inf_norm(A) * delta / (zeta + 2) >= 1:
        return
    err = disc.inf_norm(oracle.expm_oracle(A, delta) - disc.truncated_exponential(A, delta, zeta))
    assert err <= disc.psi_delta(A, delta, zeta) * (1 + 1e-9) + 1e-14


@settings(max_examples=40, deadline=None)
@given(matrices)
def test_gamma_nondecreasing_and_nonincreasing_in_order(case):
    n, seed, delta, zeta = case
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, 1))
    U = Polytope.box([-1], [1])
    a1, b1 = disc.gamma_coefficients(A, B, U, delta, zeta, 10)
    a2, b2 = disc.gamma_coefficients(A, B, U, delta, zeta + 2, 10)
    assert np.all(np.diff(a1) >= 0) and np.all(np.diff(b1) >= 0)
    assert np.all(a1 >= 0) and np.all(b1 >= 0)
    assert np.all(a2 <= a1 * (1 + 1e-12)) and np.all(b2 <= b1 * (1 + 1e-12))


def test_gamma_bounds_exact_mismatch_monte_carlo():
    rng = np.random.default_rng(11)
    U = Polytope.box([-1, -1], [1, 1])
    for trial in range(20):
        n = int(rng.integers(1, 5))
        A = rng.normal(scale=2.0, size=(n, n))
        B = rng.normal(size=(n, 2))
        delta, zeta, N = 0.1, 3, 15
        alpha, beta = disc.gamma_coefficients(A, B, U, delta, zeta, N)
        Phi, Gam = oracle.exact_discretization(A, B, delta)
        Azd = disc.truncated_exponential(A, delta, zeta)
        Bzd = disc.input_matrix(A, B, delta, zeta)
        for _ in range(20):
            x = rng.uniform(-1, 1, size=n)
            xn = np.max(np.abs(x))
            xh = x.copy()
            for k in range(1, N + 1):
                u = rng.uniform(-1, 1, size=2)
                x = Phi @ x + Gam @ u
                xh = Azd @ xh + Bzd @ u
                assert np.max(np.abs(x - xh)) <= alpha[k] * xn + beta[k] + 1e-13


def test_bundle_shapes_and_erosion(di_solver):
    b = di_solver.bundle
    assert b.G.shape == (42, 2) and b.H.shape == (42, 20)
    assert len(b.gamma_coeffs) == 20
    norm1 = np.abs(b.K.A).sum(axis=1)
    np.testing.assert_allclose(b.K_down.b, b.K.b - 0.15 * 0.05 * norm1, atol=1e-12)
    sets = b.eroded_sets
    assert len(sets) == 21
    assert np.all(sets[5].b <= sets[0].b + 1e-15)
