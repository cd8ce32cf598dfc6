"""Ray directions: uniform and von Mises-Fisher sampling plus guidance rules.

The guided modes bias the next direction using what the under- and
over-approximations have revealed so far. Every mode stays random; the
concentration only tilts the distribution.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry

logger = logging.getLogger(__name__)

MODES = ("uniform", "gradient_hausdorff", "gradient_volume", "avg_opposite", "point_to_plane")
KAPPA_CAP = 100.0


def default_params(mode, n):
    """Calibrated ``(nu0, nu1, nu2)`` for a mode in dimension ``n``."""
    if mode == "gradient_volume":
        return 0.1, 1.0, 1.0 / n
    if mode == "gradient_hausdorff":
        return 1.0, 1.0, 1.0 / n
    if mode == "avg_opposite":
        return 0.0, 0.1 / n, 0.0
    if mode == "point_to_plane":
        return 0.0, 1.0 / n, 0.0
    if mode == "uniform":
        return 0.0, 0.0, 0.0
    raise ValueError(f"unknown sampler mode {mode!r}")


def sample_uniform_sphere(n, rng):
    """Uniform direction on the unit sphere in ``R^n``."""
    while True:
        g = rng.standard_normal(n)
        norm = np.linalg.norm(g)
        if norm > 1e-300:
            return g / norm


def _vmf_cosine(kappa, n, rng):
    """Draw ``w = mu @ x`` for the vMF on ``S^{n-1}`` (Wood's rejection)."""
    d = n - 1
    b = d / (math.sqrt(4.0 * kappa**2 + d**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + d * math.log(1.0 - x0**2)
    while True:
        z = rng.beta(d / 2.0, d / 2.0)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform()
        if kappa * w + d * math.log(1.0 - x0 * w) - c >= math.log(u):
            return w


def sample_vmf(mu, kappa, n, rng):
    """Draw one direction from the von Mises-Fisher distribution.

    ``kappa = 0`` falls through to :func:`sample_uniform_sphere` and consumes
    the generator identically.
    """
    if kappa < 0:
        raise ValueError("concentration must be nonnegative")
    if kappa == 0:
        return sample_uniform_sphere(n, rng)
    mu = np.asarray(mu, dtype=float).reshape(-1)
    mu = mu / np.linalg.norm(mu)
    if n == 1:
        p_plus = 1.0 / (1.0 + math.exp(-2.0 * kappa))
        return mu.copy() if rng.uniform() < p_plus else -mu
    w = _vmf_cosine(kappa, n, rng)
    while True:
        v = rng.standard_normal(n)
        v -= (v @ mu) * mu
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            break
    x = w * mu + math.sqrt(max(0.0, 1.0 - w * w)) * (v / norm)
    return x / np.linalg.norm(x)


def _sgn(x):
    return 1.0 if x >= 0 else -1.0


def grad_err_update(d_i, d_prev, r_i, r_prev, nu0, nu1, nu2):
    """Next ``(mu, kappa)`` from the error change between two iterations.

    The improvement ratio ``1 - d_i / d_prev`` is divided by the normalized
    angle between the two directions; ``0 / 0`` counts as zero.
    """
    r_i = np.asarray(r_i, dtype=float)
    cosang = float(np.clip(np.dot(r_i, r_prev), -1.0, 1.0))
    angle = math.acos(cosang) / math.pi
    if d_prev == 0:
        num = 0.0 if d_i == 0 else -math.inf
    else:
        num = 1.0 - d_i / d_prev
    if num == 0.0:
        grad = 0.0
    elif angle == 0.0:
        grad = math.copysign(math.inf, num)
    else:
        grad = num / angle
    omega = nu1 * math.tanh(nu2 * grad)
    kappa = max(nu0, omega)
    mu = _sgn(omega - nu0) * r_i
    return mu, kappa


def avg_opposite_direction(history, i, nu1):
    """Mean opposite to the resultant of past directions, growing concentration."""
    H = np.atleast_2d(np.asarray(history, dtype=float))
    resultant = -H.sum(axis=0)
    norm = np.linalg.norm(resultant)
    if norm < 1e-12:
        return np.zeros(H.shape[1]), 0.0
    return resultant / norm, min(nu1 * i, KAPPA_CAP)


def point_to_plane_direction(under, over, v0, nu1):
    """Aim at the widest vertex-to-facet gap between the two approximations."""
    V = under.V if isinstance(under, geometry.Polytope) else np.atleast_2d(under)
    gap = geometry.min_vertex_to_facet(V, over)
    v0 = np.asarray(v0, dtype=float)
    ray = gap.foot - v0
    norm = np.linalg.norm(ray)
    if gap.distance <= 0 or norm < 1e-12:
        return np.zeros(V.shape[1]), 0.0
    return ray / norm, nu1 * gap.distance


@dataclass
class SamplerState:
    """Mutable state of a direction sampler.

    ``history`` holds every emitted direction, ``err_history`` the error
    values recorded by the caller after each iteration.
    """

    mode: str
    n: int
    seed: int = 0
    nu0: float | None = None
    nu1: float | None = None
    nu2: float | None = None
    mu: np.ndarray | None = None
    kappa: float = 0.0
    history: list = field(default_factory=list)
    err_history: list = field(default_factory=list)
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        d0, d1, d2 = default_params(self.mode, self.n)
        self.nu0 = d0 if self.nu0 is None else self.nu0
        self.nu1 = d1 if self.nu1 is None else self.nu1
        self.nu2 = d2 if self.nu2 is None else self.nu2
        self.rng = np.random.default_rng(self.seed)

    @property
    def needs_over(self):
        return self.mode in ("gradient_hausdorff", "gradient_volume", "point_to_plane")

    def record_error(self, err):
        self.err_history.append(float(err))


def next_direction(state, under=None, over=None, v0=None):
    """Draw the next direction for ``state`` and append it to the history.

    ``under`` is the current vertex array, ``over`` the current outer
    H-polytope and ``v0`` the current ray origin; uniform and averaged
    opposite modes ignore them.
    """
    mu, kappa = None, 0.0
    mode = state.mode
    if mode == "avg_opposite" and state.history:
        mu, kappa = avg_opposite_direction(state.history, len(state.history), state.nu1)
    elif mode == "point_to_plane":
        if over is None:
            raise ValueError("point_to_plane mode needs the over-approximation")
        if under is not None and v0 is not None:
            mu, kappa = point_to_plane_direction(under, over, v0, state.nu1)
    elif mode in ("gradient_hausdorff", "gradient_volume"):
        if over is None:
            raise ValueError(f"{mode} mode needs the over-approximation")
        errs = state.err_history
        if len(errs) >= 2 and len(state.history) >= 2:
            mu, kappa = grad_err_update(
                errs[-1], errs[-2], state.history[-1], state.history[-2],
                state.nu0, state.nu1, state.nu2,
            )
    state.mu, state.kappa = mu, kappa
    if kappa > 0:
        r = sample_vmf(mu, kappa, state.n, state.rng)
    else:
        r = sample_uniform_sphere(state.n, state.rng)
    state.history.append(r)
    return r


def direction_stream(n, count, seed):
    """Pre-generate ``count`` uniform directions (for parallel workers)."""
    rng = np.random.default_rng(seed)
    return np.array([sample_uniform_sphere(n, rng) for _ in range(count)])
