import numpy as np
import pytest

from sdviab import feasibility as fz
from sdviab import geometry, oracle
from sdviab.errors import DegenerateInput, InfeasibleAnchor


def disc_oracle(radius):
    return lambda x: bool(np.linalg.norm(x) <= radius)


def test_origin_feasible(di_solver):
    cert = di_solver.feasible_original([0.0, 0.0])
    assert cert.feasible and cert.lp_status == "optimal"
    assert cert.u_star.shape == (20,)
    assert np.all(np.abs(cert.u_star) <= 0.15 + 1e-9)


def test_corner_infeasible(di_solver):
    assert not di_solver.feasible_original([0.45, 0.45])


def test_outside_eroded_set(di_solver):
    cert = di_solver.feasible_original([0.499, 0.0])
    assert not cert and cert.lp_status == "outside_k0"


def test_empty_erosion_reported_with_step(di_solver):
    b = di_solver.bundle
    huge = 10.0 * b.lp_blocks()["inradius"] / b.alpha[-1]
    cert = fz.feasible(np.array([huge, 0.0]), b)
    assert cert.lp_status == "empty_erosion" and cert.empty_k is not None


def test_certificate_recheck(di_solver):
    b = di_solver.bundle
    x0 = np.zeros(2)
    cert = fz.feasible(x0, b)
    assert fz.check_certificate(b, x0, cert.u_star)
    bad = cert.u_star.copy()
    bad[0] = 1.0  # leaves U
    assert not fz.check_certificate(b, x0, bad)


def test_bisection_disc():
    c = fz.bisection_feasibility(np.zeros(2), np.array([0.5, 0.0]), 0.01, disc_oracle(0.3))
    assert np.linalg.norm(c) <= 0.3
    assert abs(c[0] - 0.3) < 0.01


def test_bisection_feasible_far_end():
    c = fz.bisection_feasibility(np.zeros(2), np.array([0.5, 0.0]), 0.01, disc_oracle(1.0))
    assert np.linalg.norm(c - [0.5, 0.0]) < 0.01


def test_bisection_degenerate_and_anchor():
    a = np.array([0.1, 0.1])
    np.testing.assert_array_equal(fz.bisection_feasibility(a, a, 0.01, disc_oracle(1.0)), a)
    with pytest.raises(InfeasibleAnchor):
        fz.bisection_feasibility(np.array([2.0, 0]), np.array([3.0, 0]), 0.01, disc_oracle(1.0))


def test_bisection_call_budget():
    calls = []

    def counted(x):
        calls.append(1)
        return np.linalg.norm(x) <= 0.37

    L, eps = 0.5, 1e-3
    fz.bisection_feasibility(np.zeros(2), np.array([L, 0.0]), eps, counted, check_anchor=False)
    assert len(calls) <= fz.bisection_iterations(L, eps) + 1


def test_support_feasible_examples(di_solver, di_run):
    b = di_solver.bundle
    v = di_run.under.records[3]
    r = v.direction
    assert fz.support_feasible(r, r @ v.point, b).feasible
    rho = geometry.support_function(b.K, r)[0]
    assert not fz.support_feasible(r, rho + 0.1, b).feasible


def test_support_feasible_offset_sweep_e1(di_solver, di_run):
    b = di_solver.bundle
    e1 = np.array([1.0, 0.0])
    lo = max(di_run.under.vertices_scaled @ e1)
    rho = geometry.support_function(b.K, e1)[0]
    sweep = np.linspace(lo, rho, 30)
    flags = [fz.support_feasible(e1, s, b).feasible for s in sweep]
    assert flags[0]
    # feasible levels form a prefix
    assert flags == sorted(flags, reverse=True)


def test_overapprox_facet_contract(di_solver, di_run):
    b = di_solver.bundle
    V = di_run.under.vertices_scaled
    for vtx in di_run.under.records[1:8]:
        if vtx.kind != "sampled":
            continue
        f = fz.overapprox_facet(vtx.direction, vtx.point, vtx.anchor, 0.01, b, vtx.u_star)
        assert np.all(V @ f.direction <= f.offset + 1e-9)
        assert f.offset <= geometry.support_function(b.K, f.direction)[0] + 1e-12
        assert f.touches_k or f.offset - f.feasible_offset < 0.01
        assert f.x0_star @ f.direction == pytest.approx(f.feasible_offset, abs=1e-7)


def test_overapprox_facet_rejects_degenerate(di_solver):
    with pytest.raises(DegenerateInput):
        fz.overapprox_facet([1.0, 0.0], np.zeros(2), np.zeros(2), 0.01, di_solver.bundle)


def test_no_flips_along_rays(di_solver):
    rng = np.random.default_rng(5)
    b = di_solver.bundle
    K = di_solver.transform.K
    for _ in range(100):
        r = rng.normal(size=2)
        end = geometry.find_intersection_on_boundary(K, geometry.Ray(np.zeros(2), r))
        s = np.arange(0.0, 1.0 + 1e-12, 1e-3)
        # coarse pass locates the transition; dense pass checks around it
        coarse = [fz.feasible(t * end, b).feasible for t in s[::50]]
        assert coarse == sorted(coarse, reverse=True)
        k = coarse.count(True)
        window = s[max(0, (k - 1) * 50):min(len(s), (k + 1) * 50)]
        dense = [fz.feasible(t * end, b).feasible for t in window[::5]]
        assert dense == sorted(dense, reverse=True)


def test_sandwich_against_exact_support(di_problem, di_run):
    model = oracle.exact_model(di_problem)
    tr = di_run.under.transform
    for f in di_run.over.facets:
        val, _ = oracle.exact_support(di_problem, tr.normal_to_original(f.direction), model)
        under = max(di_run.under.vertices_scaled @ f.direction)
        assert under <= val + 1e-9
        assert val <= f.offset + 1e-6
