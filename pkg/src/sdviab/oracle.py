"""Independent reference computations for testing.

Nothing here is used by the approximation algorithms. The matrix exponential
is computed by scaling and squaring a high-order Taylor sum with a certified
truncation error, so results can be compared against the low-order model
used in production.
"""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _lp, discretization, geometry
from .errors import LpNumericalFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleConfig:
    """Knobs for the reference computations.

    ``zeta_star`` is the Taylor order used after argument scaling. ``h`` is
    the grid spacing of :func:`grid_bracket_2d`; ``input_grid`` counts the
    input levels per axis in :func:`simulate_input_grid`.
    """

    zeta_star: int = 30
    h: float = 0.02
    input_grid: int = 11
    truncation_target: float = 1e-12

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        if _scaled_truncation(0.5, self.zeta_star) >= self.truncation_target:
            raise ValueError("zeta_star too low for the truncation target")


def _scaled_truncation(norm, zeta):
    """Truncation bound for a Taylor sum of order ``zeta`` at argument norm ``norm``."""
    if norm == 0:
        return 0.0
    ratio = norm / (zeta + 2)
    log_t = (zeta + 1) * math.log(norm) - math.lgamma(zeta + 2)
    return math.exp(log_t) / (1.0 - ratio)


def expm_certified(A, delta=1.0, config=OracleConfig()):
    """``exp(A delta)`` and a bound on its infinity-norm error.

    The argument is halved until its norm is at most 1/2, summed to order
    ``zeta_star`` and squared back. The bound propagates the truncation error
    through the squarings; floating-point round-off is not included.
    """
    X = np.asarray(A, dtype=float) * float(delta)
    norm = discretization.inf_norm(X)
    s = 0 if norm <= 0.5 else math.ceil(math.log2(norm / 0.5))
    Y = X / 2.0**s
    ny = norm / 2.0**s
    err = _scaled_truncation(ny, config.zeta_star)
    # bound on ||exp(Y)||
    size = math.exp(ny)
    E = discretization.truncated_exponential(Y, 1.0, config.zeta_star)
    for _ in range(s):
        E = E @ E
        err = 2.0 * size * err + err * err
        size = size * size
    return E, err


def expm_oracle(A, delta=1.0, config=OracleConfig()):
    """Near-exact ``exp(A delta)`` (see :func:`expm_certified`)."""
    return expm_certified(A, delta, config)[0]


def exact_discretization(A, B, delta, config=OracleConfig()):
    """Zero-order-hold pair ``(Phi, Gamma)`` from one augmented exponential."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n, m = B.shape
    Z = np.zeros((n + m, n + m))
    Z[:n, :n] = A
    Z[:n, n:] = B
    E = expm_oracle(Z, delta, config)
    return E[:n, :n], E[:n, n:]


class ExactModel(NamedTuple):
    Phi: np.ndarray
    Gamma: np.ndarray
    G: np.ndarray
    H: np.ndarray


def exact_model(problem, config=OracleConfig()):
    Phi, Gamma = exact_discretization(problem.system.A, problem.system.B, problem.delta, config)
    G, H = discretization.prediction_matrices(Phi, Gamma, problem.n_steps)
    return ExactModel(Phi, Gamma, G, H)


def simulate_exact(problem, x0, u, model=None):
    """States at the sampling instants under the zero-order hold, ``(N+1, n)``."""
    model = model or exact_model(problem)
    x = model.G @ np.asarray(x0, dtype=float) + model.H @ np.asarray(u, dtype=float).reshape(-1)
    return x.reshape(problem.n_steps + 1, problem.n)


def _exact_blocks(problem, model):
    K, U = problem.K, problem.U
    N = problem.n_steps
    AG = np.kron(np.eye(N + 1), K.A) @ model.G
    AH = np.kron(np.eye(N + 1), K.A) @ model.H
    bK = np.tile(K.b, N + 1)
    AU = np.kron(np.eye(N), U.A)
    bU = np.tile(U.b, N)
    return AG, AH, bK, AU, bU


def exact_feasible_uneroded(x0, problem, model=None, blocks=None):
    """Can ``x0`` be held in ``K`` at every sampling instant (exact dynamics)?

    A necessary condition for kernel membership: ``False`` proves ``x0`` is
    outside the kernel. Works in original coordinates. Solver trouble raises
    :class:`LpNumericalFailure` rather than answering either way.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not problem.K.contains(x0, tol=0.0):
        return False
    model = model or exact_model(problem)
    AG, AH, bK, AU, bU = blocks or _exact_blocks(problem, model)
    res = _lp.solve(
        np.zeros(AH.shape[1]),
        A_ub=np.vstack([AH, AU]),
        b_ub=np.concatenate([bK - AG @ x0, bU]),
    )
    if res.status == _lp.INFEASIBLE:
        return False
    if not res.ok:
        raise LpNumericalFailure(f"exact feasibility LP failed: {res.message}", res.status)
    return True


def exact_support(problem, direction, model=None):
    """Largest ``direction @ x0`` over initial states passing :func:`exact_feasible_uneroded`."""
    model = model or exact_model(problem)
    AG, AH, bK, AU, bU = _exact_blocks(problem, model)
    r = np.asarray(direction, dtype=float)
    n, nu = problem.n, AH.shape[1]
    res = _lp.solve(
        np.concatenate([-r, np.zeros(nu)]),
        A_ub=np.vstack([np.hstack([AG, AH]), np.hstack([np.zeros((AU.shape[0], n)), AU])]),
        b_ub=np.concatenate([bK, bU]),
    )
    if not res.ok:
        raise LpNumericalFailure(f"exact support LP failed: {res.message}", res.status)
    return -res.fun, res.x[:n]


def simulate_input_grid(problem, x0, config=OracleConfig(), model=None):
    """Brute-force check with inputs held at grid levels of a box ``U``.

    Tries every constant input level and reports whether any keeps ``x0`` in
    ``K`` at all sampling instants. Only a cross-check: ``True`` is
    conclusive, ``False`` is not.
    """
    model = model or exact_model(problem)
    lo, hi = geometry.bounding_box(problem.U)
    axes = [np.linspace(a, b, config.input_grid) for a, b in zip(lo, hi)]
    for level in np.array(np.meshgrid(*axes)).reshape(len(axes), -1).T:
        X = simulate_exact(problem, x0, np.tile(level, problem.n_steps), model)
        if np.all(X @ problem.K.A.T <= problem.K.b + 1e-12):
            return True
    return False


@dataclass(frozen=True, eq=False)
class GridBracket:
    """Cell centers of a planar grid with two classifications.

    ``outer`` marks cells whose center passes the exact un-eroded program;
    ``inner`` marks cells whose center is certified by the eroded program.
    """

    centers: np.ndarray
    outer: np.ndarray
    inner: np.ndarray
    h: float

    @property
    def outer_area(self):
        return float(self.outer.sum()) * self.h**2

    @property
    def inner_area(self):
        return float(self.inner.sum()) * self.h**2

    def rows(self):
        """``(x, y, class)`` with class 2 = inner, 1 = outer only, 0 = outside."""
        cls = self.outer.astype(int) + self.inner.astype(int)
        return [(float(c[0]), float(c[1]), int(k)) for c, k in zip(self.centers, cls)]


def grid_bracket_2d(problem, h=0.02, solver=None, config=OracleConfig()):
    """Classify grid cell centers over the bounding box of ``K`` (``n = 2``).

    ``solver`` is a :class:`~sdviab.kernel.ViabilitySolver` used for the
    inner (eroded) classification; one is built if omitted.
    """
    from . import kernel

    if problem.n != 2:
        raise ValueError("grid bracket only for planar problems")
    solver = solver or kernel.ViabilitySolver(problem)
    reach = solver.transform.M * problem.delta * float(solver.transform.rho.max())
    if h * math.sqrt(2.0) > reach:
        logger.warning("grid cell diameter %.3g exceeds the inter-sample reach %.3g",
                       h * math.sqrt(2.0), reach)
    lo, hi = geometry.bounding_box(problem.K)
    xs = np.arange(lo[0] + h / 2, hi[0], h)
    ys = np.arange(lo[1] + h / 2, hi[1], h)
    centers = np.array([(x, y) for x in xs for y in ys])
    model = exact_model(problem, config)
    blocks = _exact_blocks(problem, model)
    outer = np.zeros(len(centers), dtype=bool)
    inner = np.zeros(len(centers), dtype=bool)
    for i, c in enumerate(centers):
        outer[i] = exact_feasible_uneroded(c, problem, model, blocks)
        if outer[i]:
            inner[i] = bool(solver.feasible_original(c))
    return GridBracket(centers, outer, inner, h)
