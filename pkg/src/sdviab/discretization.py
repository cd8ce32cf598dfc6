"""Finite-difference model of a sampled-data LTI system with error bounds.

The continuous plant ``dx/dt = A x + B u`` under zero-order hold is replaced by
a truncated Taylor model ``x_{k+1} = A_zd x_k + B_zd u_k``. Everything lost in
the truncation is bounded in the infinity norm, so the nominal trajectory can
be tightened by a priori computable amounts and still certify the true one.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _lp, geometry
from .errors import BoundBlowup, ConfigError, OrderTooLow
from .geometry import Polytope

DEFAULT_BOUND_CAP = 1e12


def inf_norm(M):
    """Induced infinity norm (maximum absolute row sum)."""
    M = np.atleast_2d(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(M).sum(axis=1)))


def _check_square(A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    return A


@dataclass(frozen=True, eq=False)
class LtiSystem:
    """``dx/dt = A x + B u``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _check_square(self.A)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if B.shape[0] != A.shape[0]:
            raise ConfigError("B must have as many rows as A")
        if A.shape[0] < 1 or B.shape[1] < 1:
            raise ConfigError("need n >= 1 and m >= 1")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ConfigError("system matrices must be finite")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class SampledDataProblem:
    """One viability-kernel computation: dynamics, constraints, resolution.

    ``K`` and ``U`` are H-rep polytopes. ``epsilon`` and ``epsilon_o`` are
    the bisection accuracies of the under- and over-approximation.
    """

    system: LtiSystem
    K: Polytope
    U: Polytope
    delta: float
    tau: float
    zeta: int = 4
    epsilon: float = 0.01
    epsilon_o: float = 0.01

    def __post_init__(self):
        if not self.delta > 0:
            raise ConfigError("sampling interval delta must be positive")
        if not self.tau > 0:
            raise ConfigError("horizon tau must be positive")
        if int(self.zeta) != self.zeta or self.zeta < 1:
            raise ConfigError("discretization order zeta must be an integer >= 1")
        if not (self.epsilon > 0 and self.epsilon_o > 0):
            raise ConfigError("bisection accuracies must be positive")
        if not (self.K.has_hrep and self.U.has_hrep):
            raise ConfigError("K and U must be given by facets")
        if self.K.dim != self.system.n:
            raise ConfigError("K dimension does not match the state dimension")
        if self.U.dim != self.system.m:
            raise ConfigError("U dimension does not match the input dimension")
        object.__setattr__(self, "zeta", int(self.zeta))

    @property
    def n_steps(self):
        # guard against tau/delta landing a hair above an integer
        return max(1, math.ceil(self.tau / self.delta - 1e-9))

    @property
    def n(self):
        return self.system.n

    @property
    def m(self):
        return self.system.m


# ---------------------------------------------------------------------------
# Truncated series


def truncated_exponential(A, s, zeta):
    """``sum_{i=0}^{zeta} (A s)^i / i!`` by Horner accumulation."""
    A = _check_square(A)
    if zeta < 0 or s < 0:
        raise ValueError("need zeta >= 0 and s >= 0")
    eye = np.eye(A.shape[0])
    As = A * s
    R = eye.copy()
    for i in range(int(zeta), 0, -1):
        R = eye + (As / i) @ R
    return R


def integrated_exponential(A, delta, zeta):
    """``int_0^delta A_{zeta, l} dl = sum_i A^i delta^{i+1} / (i+1)!``."""
    A = _check_square(A)
    eye = np.eye(A.shape[0])
    Ad = A * delta
    R = eye.copy()
    for i in range(int(zeta), 0, -1):
        R = eye + (Ad / (i + 1)) @ R
    return delta * R


def input_matrix(A, B, delta, zeta):
    A = _check_square(A)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if B.shape[0] != A.shape[0]:
        raise ValueError("A and B dimensions do not match")
    return integrated_exponential(A, delta, zeta) @ B


def _truncation_ratio(A, delta, zeta):
    ratio = inf_norm(A) * delta / (zeta + 2)
    if ratio >= 1.0:
        raise OrderTooLow(
            f"||A||*delta/(zeta+2) = {ratio:.4g} >= 1; increase zeta or reduce delta"
        )
    return ratio


def psi_delta(A, delta, zeta):
    """Bound on ``||e^{A delta} - A_{zeta,delta}||_inf``."""
    A = _check_square(A)
    ratio = _truncation_ratio(A, delta, zeta)
    x = inf_norm(A) * delta
    if x == 0.0:
        return 0.0
    log_head = (zeta + 1) * math.log(x) - math.lgamma(zeta + 2)
    return math.exp(log_head) / (1.0 - ratio)


def integral_error_bound(A, delta, zeta):
    """Bound on ``||int_0^delta (e^{A l} - A_{zeta,l}) dl||_inf``."""
    return psi_delta(A, delta, zeta) * delta / (zeta + 2)


def sup_bu_norm(B, U):
    """``max_{u in U} ||B u||_inf``, one pair of support LPs per row of B."""
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    best = 0.0
    for row in B:
        if not np.any(row):
            continue
        hi = geometry.support_function(U, row)[0]
        lo = geometry.support_function(U, -row)[0]
        best = max(best, hi, lo)
    return best


def _log_binomials(k):
    """``log C(k, l)`` for ``l = 0..k`` via the multiplicative recurrence."""
    out = np.zeros(k + 1)
    for l in range(k):
        out[l + 1] = out[l] + math.log((k - l) / (l + 1))
    return out


def gamma_coefficients(A, B, U, delta, zeta, n_steps, cap=DEFAULT_BOUND_CAP,
                       A_zd=None, sup_bu=None):
    """Coefficients of the discretization-error bound ``alpha_k |x0| + beta_k``.

    Returns two arrays of length ``n_steps + 1``; entry ``k`` bounds the
    infinity-norm mismatch between the exact sampled state and the nominal
    model state after ``k`` steps (entry 0 is zero). The bound is made
    nondecreasing in ``k`` by a running maximum.
    """
    A = _check_square(A)
    psi = psi_delta(A, delta, zeta)
    int_err = psi * delta / (zeta + 2)
    if A_zd is None:
        A_zd = truncated_exponential(A, delta, zeta)
    if sup_bu is None:
        sup_bu = sup_bu_norm(B, U)
    int_norm = inf_norm(integrated_exponential(A, delta, zeta))

    n = A.shape[0]
    pow_norms = np.empty(n_steps + 1)
    P = np.eye(n)
    for l in range(n_steps + 1):
        pow_norms[l] = inf_norm(P)
        P = P @ A_zd

    # binom[k] bounds ||(A_zd + E)^k - A_zd^k||
    binom = np.zeros(n_steps + 1)
    if psi > 0.0:
        log_psi = math.log(psi)
        with np.errstate(divide="ignore"):
            log_pow = np.log(pow_norms)
        for k in range(1, n_steps + 1):
            l = np.arange(k)
            logs = _log_binomials(k)[:k] + log_pow[:k] + (k - l) * log_psi
            binom[k] = float(np.sum(np.exp(logs)))

    # ||(A_zd + E)^i|| two ways; both are valid, keep the smaller
    power_sum = np.minimum(
        (pow_norms[1] + psi) ** np.arange(n_steps + 1),
        pow_norms + binom,
    )
    per_input = binom * int_norm + power_sum * int_err

    alpha = np.zeros(n_steps + 1)
    beta = np.zeros(n_steps + 1)
    alpha[1:] = binom[1:]
    beta[1:] = sup_bu * np.cumsum(per_input[:-1])
    alpha = np.maximum.accumulate(alpha)
    beta = np.maximum.accumulate(beta)
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))) or max(
        alpha[-1], beta[-1]
    ) > cap:
        raise BoundBlowup(
            "discretization error bound exceeds the cap; increase zeta or reduce delta"
        )
    return alpha, beta


def prediction_matrices(A_zd, B_zd, n_steps):
    """Stacked maps ``[x_0; ...; x_N] = G x0 + H u`` of the nominal model."""
    A_zd = _check_square(A_zd)
    B_zd = np.asarray(B_zd, dtype=float)
    if B_zd.ndim == 1:
        B_zd = B_zd.reshape(-1, 1)
    if B_zd.shape[0] != A_zd.shape[0]:
        raise ValueError("A_zd and B_zd dimensions do not match")
    if n_steps < 1:
        raise ValueError("need at least one step")
    n, m = B_zd.shape
    powers = [np.eye(n)]
    for _ in range(n_steps):
        powers.append(A_zd @ powers[-1])
    G = np.vstack(powers)
    H = np.zeros(((n_steps + 1) * n, n_steps * m))
    blocks = [P @ B_zd for P in powers[:-1]]
    for i in range(1, n_steps + 1):
        for j in range(i):
            H[i * n:(i + 1) * n, j * m:(j + 1) * m] = blocks[i - 1 - j]
    return G, H


# ---------------------------------------------------------------------------
# Bundle


@dataclass(frozen=True, eq=False)
class DiscretizationBundle:
    """Everything the feasibility programs need, precomputed once.

    All quantities live in the (possibly scaled) coordinates the bundle was
    built in. ``K`` is the un-eroded state set, ``K_down`` the set eroded by
    ``M * delta``; per-step sets are instantiated with :meth:`eroded_set`.
    """

    A_zd: np.ndarray
    B_zd: np.ndarray
    psi: float
    alpha: np.ndarray
    beta: np.ndarray
    sup_bu: float
    G: np.ndarray
    H: np.ndarray
    K: Polytope
    K_down: Polytope
    U: Polytope
    M: float
    delta: float
    zeta: int
    n_steps: int
    _lp: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.A_zd.shape[0]

    @property
    def m(self):
        return self.B_zd.shape[1]

    @property
    def gamma_coeffs(self):
        """``(alpha_k, beta_k)`` pairs for ``k = 1..N``."""
        return list(zip(self.alpha[1:], self.beta[1:]))

    @property
    def eroded_sets(self):
        """Per-step sets with the state-independent part of the bound applied."""
        return [self.eroded_set(k, 0.0) for k in range(self.n_steps + 1)]

    def gamma(self, x0_norm):
        """Error bounds ``gamma_k`` for ``k = 0..N`` at ``||x0||_inf``."""
        return self.alpha * x0_norm + self.beta

    def eroded_set(self, k, x0_norm):
        g = self.gamma(x0_norm)[k]
        norm1 = np.abs(self.K_down.A).sum(axis=1)
        return Polytope(A=self.K_down.A, b=self.K_down.b - g * norm1)

    def lp_blocks(self):
        """Stacked constraint blocks shared by every feasibility query."""
        if not self._lp:
            AK, bK = self.K.A, self.K.b
            steps = self.n_steps + 1
            stack_K = np.kron(np.eye(steps), AK)
            F, f = self.U.A, self.U.b
            self._lp.update(
                AG=stack_K @ self.G,
                AH=stack_K @ self.H,
                bK=np.tile(bK, steps),
                b_down=np.tile(self.K_down.b, steps),
                norm1=np.tile(np.abs(self.K_down.A).sum(axis=1), steps),
                rows=AK.shape[0],
                AU=np.kron(np.eye(self.n_steps), F),
                bU=np.tile(f, self.n_steps),
                inradius=_inf_inradius(self.K_down),
            )
        return self._lp


def _inf_inradius(C):
    """Largest ``r`` with ``C - B_inf(0, r)`` nonempty."""
    n = C.dim
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([C.A, np.abs(C.A).sum(axis=1)[:, None]])
    res = _lp.solve(c, A_ub=A_ub, b_ub=C.b, bounds=[(None, None)] * n + [(0, None)])
    return float(res.x[-1]) if res.ok else 0.0


def build_bundle(A, B, K, U, delta, zeta, n_steps, M, cap=DEFAULT_BOUND_CAP):
    """Discretize ``(A, B)`` and erode ``K`` by ``M * delta``.

    Raises :class:`OrderTooLow`, :class:`BoundBlowup` or
    :class:`~sdviab.errors.EmptyErosion`.
    """
    A = _check_square(A)
    A_zd = truncated_exponential(A, delta, zeta)
    B_zd = input_matrix(A, B, delta, zeta)
    psi = psi_delta(A, delta, zeta)
    sup_bu = sup_bu_norm(B, U)
    alpha, beta = gamma_coefficients(
        A, B, U, delta, zeta, n_steps, cap=cap, A_zd=A_zd, sup_bu=sup_bu
    )
    G, H = prediction_matrices(A_zd, B_zd, n_steps)
    K_down = geometry.erode_by_inf_ball(K, M * delta)
    bundle = DiscretizationBundle(
        A_zd=A_zd, B_zd=B_zd, psi=psi, alpha=alpha, beta=beta, sup_bu=sup_bu,
        G=G, H=H, K=K, K_down=K_down, U=U, M=float(M), delta=float(delta),
        zeta=int(zeta), n_steps=int(n_steps),
    )
    bundle.lp_blocks()
    return bundle
