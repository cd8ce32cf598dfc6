"""LP feasibility oracles and the two bisection searches.

``feasible`` decides whether a fixed initial state can be kept inside the
eroded constraint sets; a positive answer certifies membership in the
sampled-data viability kernel. ``support_feasible`` frees the initial state
onto a hyperplane and drops the erosion; it drives the over-approximation.

Every certificate reported as feasible is re-validated by multiplying out the
prediction equation, independently of the solver.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _lp, geometry
from .errors import (
    DegenerateInput,
    FacetAborted,
    InfeasibleAnchor,
    LpNumericalFailure,
)

logger = logging.getLogger(__name__)

RECHECK_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class FeasibilityCertificate:
    """Outcome of one feasibility query.

    ``u_star`` is the stacked input sequence, ``x0_star`` the initial state
    chosen by the solver (hyperplane program only). ``empty_k`` is set when an
    eroded set was empty at step ``k`` for this initial state.
    """

    feasible: bool
    u_star: np.ndarray | None = None
    x0_star: np.ndarray | None = None
    lp_status: str = "optimal"
    empty_k: int | None = None

    def __bool__(self):
        return self.feasible


def _infeasible(status, **kw):
    return FeasibilityCertificate(False, lp_status=status, **kw)


def _states(bundle, x0, u):
    return (bundle.G @ x0 + bundle.H @ u).reshape(bundle.n_steps + 1, bundle.n)


def check_certificate(bundle, x0, u, eroded=True, tol=RECHECK_TOL):
    """Independent re-check of an input sequence for initial state ``x0``.

    Multiplies out the prediction equation and tests every input against
    ``U`` and every state against the per-step set (eroded or plain ``K``).
    """
    u = np.asarray(u, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    F, f = bundle.U.A, bundle.U.b
    if np.any(u.reshape(bundle.n_steps, bundle.m) @ F.T > f + tol):
        return False
    X = _states(bundle, x0, u)
    if eroded:
        P = bundle.K_down
        norm1 = np.abs(P.A).sum(axis=1)
        g = bundle.gamma(np.max(np.abs(x0)))
        limits = P.b[None, :] - g[:, None] * norm1[None, :]
    else:
        P = bundle.K
        limits = np.broadcast_to(P.b, (bundle.n_steps + 1, P.b.size))
    return bool(np.all(X @ P.A.T <= limits + tol))


def feasible(x0, bundle):
    """Can ``x0`` be kept in the eroded sets over the horizon?

    A feasible certificate proves ``x0`` lies in the sampled-data viability
    kernel. Solver trouble and failed re-checks answer "infeasible".
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    blk = bundle.lp_blocks()
    rows = blk["rows"]
    x_norm = float(np.max(np.abs(x0)))
    g = bundle.gamma(x_norm)

    over = g > blk["inradius"]
    if np.any(over):
        return _infeasible("empty_erosion", empty_k=int(np.argmax(over)))
    if not bundle.K_down.contains(x0, tol=0.0):
        return _infeasible("outside_k0")

    limit = blk["b_down"] - np.repeat(g, rows) * blk["norm1"] - blk["AG"] @ x0
    A_ub = np.vstack([blk["AH"][rows:], blk["AU"]])
    b_ub = np.concatenate([limit[rows:], blk["bU"]])
    res = _lp.solve(np.zeros(bundle.n_steps * bundle.m), A_ub=A_ub, b_ub=b_ub)
    if res.status == _lp.INFEASIBLE:
        return _infeasible("infeasible")
    if not res.ok:
        logger.warning("feasibility LP failed (%s); treating as infeasible", res.message)
        return _infeasible("numerical")
    if not check_certificate(bundle, x0, res.x):
        logger.warning("LP solution failed the independent re-check")
        return _infeasible("recheck_failed")
    return FeasibilityCertificate(True, u_star=res.x, x0_star=x0)


def support_feasible(direction, offset, bundle, on_failure="raise"):
    """Is there a state on ``direction @ x0 = offset`` that stays in ``K``?

    Both ``x0`` and the inputs are decision variables and the constraint
    sets are not eroded. With ``on_failure="raise"`` solver trouble raises
    :class:`LpNumericalFailure`; otherwise it is reported as infeasible.
    """
    r = np.asarray(direction, dtype=float).reshape(-1)
    blk = bundle.lp_blocks()
    n, nu = bundle.n, bundle.n_steps * bundle.m
    A_ub = np.vstack([
        np.hstack([blk["AG"], blk["AH"]]),
        np.hstack([np.zeros((blk["AU"].shape[0], n)), blk["AU"]]),
    ])
    b_ub = np.concatenate([blk["bK"], blk["bU"]])
    A_eq = np.concatenate([r, np.zeros(nu)])[None, :]
    res = _lp.solve(np.zeros(n + nu), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[offset])

    def fail(msg, status):
        if on_failure == "raise":
            raise LpNumericalFailure(msg, status)
        logger.warning("%s; treating as infeasible", msg)
        return _infeasible("numerical")

    if res.status == _lp.INFEASIBLE:
        return _infeasible("infeasible")
    if not res.ok:
        return fail(f"hyperplane LP failed: {res.message}", res.status)
    x0, u = res.x[:n], res.x[n:]
    if abs(r @ x0 - offset) > RECHECK_TOL or not check_certificate(
        bundle, x0, u, eroded=False
    ):
        return fail("hyperplane LP solution failed the independent re-check", res.status)
    return FeasibilityCertificate(True, u_star=u, x0_star=x0)


def bisection_feasibility(a, b, eps, oracle, check_anchor=True, max_iter=None):
    """Last feasible point on ``[a, b]`` within ``eps`` of an infeasible one.

    ``oracle(x)`` must be truthy for ``a``. The search keeps ``a`` feasible and
    ``b`` as the running infeasible (or untested) end, halving the segment
    until the feasible midpoint lies closer than ``eps`` to ``b``. Distances
    are Euclidean. ``max_iter`` caps the number of oracle calls.
    """
    a = np.asarray(a, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    if check_anchor and not oracle(a):
        raise InfeasibleAnchor("bisection anchor is not feasible")
    if np.linalg.norm(b - a) < eps:
        return a
    calls = 0
    while max_iter is None or calls < max_iter:
        c = a + (b - a) / 2.0
        calls += 1
        if oracle(c):
            if np.linalg.norm(b - c) < eps:
                return c
            a = c
        else:
            b = c
            if np.linalg.norm(b - a) < eps:
                return a
    return a


def bisection_iterations(length, eps):
    """Upper bound on oracle calls made by :func:`bisection_feasibility`."""
    if length < eps:
        return 0
    return math.floor(math.log2(length / eps)) + 1


class Facet(NamedTuple):
    """One over-approximating halfspace ``direction @ x <= offset``.

    ``offset`` is the last infeasible level (or the support value of ``K``
    when the kernel reaches it); ``feasible_offset`` the last feasible level,
    certified by ``(x0_star, u_star)``.
    """

    direction: np.ndarray
    offset: float
    feasible_offset: float
    x0_star: np.ndarray
    u_star: np.ndarray
    touches_k: bool


def overapprox_facet(direction, v_i, v0, eps_o, bundle, v_cert=None):
    """Push the supporting hyperplane of ``K`` inward until it meets the kernel.

    ``v_i`` is a feasible vertex found along ``direction`` from ``v0``; its
    input sequence ``v_cert`` (if given) seeds the feasible end of the search.
    LP failures raise :class:`FacetAborted`, since a wrong "infeasible" here
    would cut off part of the kernel.
    """
    r = np.asarray(direction, dtype=float).reshape(-1)
    r = r / np.linalg.norm(r)
    v_i = np.asarray(v_i, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    w = v_i - v0
    if np.linalg.norm(w) < 1e-12 or r @ w <= 1e-12:
        raise DegenerateInput("vertex does not advance from the anchor along the direction")
    rho_K = geometry.support_function(bundle.K, r)[0]

    try:
        top = support_feasible(r, rho_K, bundle)
        if top.feasible:
            return Facet(r, rho_K, rho_K, top.x0_star, top.u_star, True)
        lo, hi = float(r @ v_i), rho_K
        if v_cert is not None and check_certificate(bundle, v_i, v_cert, eroded=False):
            best = FeasibilityCertificate(True, u_star=np.asarray(v_cert), x0_star=v_i)
        else:
            best = support_feasible(r, lo, bundle)
            if not best.feasible:
                raise FacetAborted("feasible end of the facet search is not feasible")
        while hi - lo >= eps_o:
            mid = 0.5 * (lo + hi)
            cert = support_feasible(r, mid, bundle)
            if cert.feasible:
                lo, best = mid, cert
            else:
                hi = mid
    except LpNumericalFailure as exc:
        raise FacetAborted(str(exc)) from exc
    return Facet(r, hi, lo, best.x0_star, best.u_star, False)
