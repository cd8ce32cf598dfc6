"""Convex polytope primitives.

Polytopes are stored either by facets (``A x <= b``, H-rep) or by vertices
(V-rep). Nothing in this module converts between the two; under-approximations
stay in V-rep and over-approximations stay in H-rep. The only exceptions are
the planar helpers at the bottom, which exist for evaluation in 2D.
"""

import io
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _lp
from .errors import (
    DegenerateInput,
    EmptyErosion,
    LpNumericalFailure,
    OriginOutside,
    Unbounded,
)

logger = logging.getLogger(__name__)

ABS_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Polytope:
    """Convex polytope in H-rep (``A``, ``b``), V-rep (``V``) or both.

    Arrays are copied and made read-only on construction.
    """

    A: np.ndarray | None = None
    b: np.ndarray | None = None
    V: np.ndarray | None = None

    def __post_init__(self):
        if self.A is None and self.V is None:
            raise ValueError("a polytope needs an H-rep or a V-rep")
        if self.A is not None:
            A = np.atleast_2d(np.asarray(self.A, dtype=float))
            b = np.asarray(self.b, dtype=float).reshape(-1)
            if A.shape[0] != b.shape[0]:
                raise ValueError("A and b have different row counts")
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
                raise ValueError("H-rep entries must be finite")
            if A.shape[0] and np.any(np.linalg.norm(A, axis=1) == 0.0):
                raise ValueError("H-rep rows must have nonzero normals")
            object.__setattr__(self, "A", _frozen(A))
            object.__setattr__(self, "b", _frozen(b))
        if self.V is not None:
            V = np.atleast_2d(np.asarray(self.V, dtype=float))
            if V.shape[0] == 0:
                raise ValueError("V-rep must contain at least one vertex")
            if self.A is not None and V.shape[1] != self.A.shape[1]:
                raise ValueError("H-rep and V-rep dimensions differ")
            object.__setattr__(self, "V", _frozen(V))

    @classmethod
    def from_hrep(cls, A, b):
        return cls(A=A, b=b)

    @classmethod
    def from_vertices(cls, V):
        return cls(V=V)

    @classmethod
    def box(cls, lo, hi):
        """Axis-aligned box ``lo <= x <= hi`` in H-rep."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box bounds must satisfy lo <= hi")
        n = lo.size
        eye = np.eye(n)
        return cls(A=np.vstack([eye, -eye]), b=np.concatenate([hi, -lo]))

    @classmethod
    def inf_ball(cls, n, radius, center=None):
        c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        return cls.box(c - radius, c + radius)

    @property
    def dim(self):
        return (self.A if self.A is not None else self.V).shape[1]

    @property
    def has_hrep(self):
        return self.A is not None

    @property
    def has_vrep(self):
        return self.V is not None

    def halfspaces(self):
        return [Halfspace(a, bi) for a, bi in zip(self.A, self.b)]

    def contains(self, x, tol=ABS_TOL):
        """Membership test against the H-rep."""
        if self.A is None:
            raise ValueError("membership needs an H-rep")
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.A @ x <= self.b + tol))

    def with_facets(self, A_extra, b_extra):
        """H-rep intersection with extra halfspaces."""
        A_extra = np.asarray(A_extra, dtype=float).reshape(-1, self.dim)
        b_extra = np.asarray(b_extra, dtype=float).reshape(-1)
        return Polytope(
            A=np.vstack([self.A, A_extra]), b=np.concatenate([self.b, b_extra])
        )

    def linear_map_inverse(self, T):
        """Return ``{y : T y in self}`` for invertible ``T`` (H-rep)."""
        return Polytope(A=self.A @ T, b=self.b)


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float).reshape(-1)
        norm = np.linalg.norm(d)
        if norm == 0.0:
            raise ValueError("ray direction must be nonzero")
        if abs(norm - 1.0) > 1e-12:
            d = d / norm
        object.__setattr__(self, "origin", _frozen(np.reshape(self.origin, -1)))
        object.__setattr__(self, "direction", _frozen(d))

    def at(self, s):
        return self.origin + s * self.direction


@dataclass(frozen=True, eq=False)
class Halfspace:
    """``normal @ x <= offset``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        a = _frozen(np.reshape(self.normal, -1))
        if not np.any(a):
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "offset", float(self.offset))


# ---------------------------------------------------------------------------
# LP-backed queries


def is_empty(C):
    """True if the H-rep ``C`` has no points."""
    res = _lp.solve(np.zeros(C.dim), A_ub=C.A, b_ub=C.b)
    if res.status == _lp.INFEASIBLE:
        return True
    if res.ok:
        return False
    raise LpNumericalFailure(f"emptiness check failed: {res.message}", res.status)


def erode_by_inf_ball(C, radius):
    """Pontryagin difference ``C - B_inf(0, radius)``, exact for H-polytopes.

    Each facet ``a x <= b`` moves inward by ``radius * ||a||_1``.
    """
    if radius < 0:
        raise ValueError("erosion radius must be nonnegative")
    if radius == 0:
        return Polytope(A=C.A, b=C.b)
    eroded = Polytope(A=C.A, b=C.b - radius * np.abs(C.A).sum(axis=1))
    if is_empty(eroded):
        raise EmptyErosion(f"eroding by {radius:g} empties the set")
    return eroded


def find_intersection_on_boundary(C, ray, tol=ABS_TOL):
    """Exit point of ``ray`` through the boundary of the bounded H-rep ``C``."""
    slack = C.b - C.A @ ray.origin
    if np.any(slack < -tol):
        raise OriginOutside("ray origin lies outside the polytope")
    rate = C.A @ ray.direction
    hit = rate > 0
    if not np.any(hit):
        raise Unbounded("ray never leaves the set")
    s = np.min(np.maximum(slack[hit], 0.0) / rate[hit])
    return ray.at(s)


def support_function(C, direction):
    """Support value ``max direction @ x`` over ``C`` and a maximizer.

    V-rep sets are evaluated exactly over their vertices; H-rep sets by LP.
    """
    ell = np.asarray(direction, dtype=float).reshape(-1)
    if C.V is not None:
        vals = C.V @ ell
        j = int(np.argmax(vals))
        return float(vals[j]), C.V[j].copy()
    res = _lp.solve(-ell, A_ub=C.A, b_ub=C.b)
    if res.status == _lp.UNBOUNDED:
        raise Unbounded("support function is unbounded")
    if res.status == _lp.INFEASIBLE:
        raise DegenerateInput("support function of an empty set")
    if not res.ok:
        raise LpNumericalFailure(f"support LP failed: {res.message}", res.status)
    return float(ell @ res.x), res.x


def bounding_box(C):
    """Tight axis-aligned bounds ``(lo, hi)`` of an H-rep set (2n LPs)."""
    n = C.dim
    lo, hi = np.empty(n), np.empty(n)
    for d in range(n):
        e = np.zeros(n)
        e[d] = 1.0
        hi[d] = support_function(C, e)[0]
        lo[d] = -support_function(C, -e)[0]
    return lo, hi


def centroid(V):
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[0] == 0:
        raise DegenerateInput("centroid of an empty vertex list")
    return V.mean(axis=0)


def chebyshev_center(C):
    """Center and radius of the largest Euclidean ball inside ``C``."""
    n = C.dim
    norms = np.linalg.norm(C.A, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([C.A, norms[:, None]])
    res = _lp.solve(c, A_ub=A_ub, b_ub=C.b, bounds=[(None, None)] * n + [(0, None)])
    if res.status == _lp.INFEASIBLE:
        raise DegenerateInput("Chebyshev center of an empty set")
    if res.status == _lp.UNBOUNDED:
        raise Unbounded("set contains arbitrarily large balls")
    if not res.ok:
        raise LpNumericalFailure(f"Chebyshev LP failed: {res.message}", res.status)
    return res.x[:n], float(res.x[-1])


def hausdorff_estimate(V, W, directions):
    """Lower estimate of the Hausdorff distance from finitely many directions.

    ``max_l |rho_W(l) - rho_V(l)|`` over the rows of ``directions``; never
    exceeds the true distance.
    """
    L = np.atleast_2d(np.asarray(directions, dtype=float))
    if L.shape[0] == 0:
        raise ValueError("need at least one direction")
    worst = 0.0
    for ell in L:
        gap = support_function(W, ell)[0] - support_function(V, ell)[0]
        worst = max(worst, abs(gap))
    return worst


class VertexGap(NamedTuple):
    index: int
    foot: np.ndarray
    distance: float
    inside: bool


def min_vertex_to_facet(V, W):
    """Vertex of ``V`` farthest from its nearest facet hyperplane of ``W``.

    Returns the vertex index, the foot point on that nearest hyperplane and
    the distance. Ties go to the lowest index. A negative distance means the
    vertex lies outside ``W`` and ``inside`` is False.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    norms = np.linalg.norm(W.A, axis=1)
    dist = (W.b[None, :] - V @ W.A.T) / norms[None, :]
    nearest = np.argmin(dist, axis=1)
    per_vertex = dist[np.arange(V.shape[0]), nearest]
    j = int(np.argmax(per_vertex))
    i = nearest[j]
    d = float(per_vertex[j])
    foot = V[j] + d * W.A[i] / norms[i]
    inside = bool(np.all(per_vertex >= -ABS_TOL))
    if not inside:
        logger.warning("vertex outside the outer polytope (distance %.3g)", per_vertex.min())
    return VertexGap(j, foot, d, inside)


# ---------------------------------------------------------------------------
# Ellipsoids


def mvce_khachiyan(V, tol=1e-4, max_iter=100_000):
    """Approximate minimum-volume ellipsoid enclosing the points ``V``.

    Khachiyan's barycentric coordinate ascent. Returns ``(center, P)`` with
    the ellipsoid ``{x : (x - center) @ P @ (x - center) <= 1}``, rescaled
    so it contains every point; the volume is close to optimal for small
    ``tol``.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    m, n = V.shape
    if m < n + 1 or np.linalg.matrix_rank(V - V.mean(axis=0)) < n:
        raise DegenerateInput("points do not span the space")
    Q = np.vstack([V.T, np.ones(m)])
    u = np.full(m, 1.0 / m)
    for _ in range(max_iter):
        X = Q @ (u[:, None] * Q.T)
        M = np.einsum("ij,ji->i", Q.T, np.linalg.solve(X, Q))
        j = int(np.argmax(M))
        step = (M[j] - n - 1.0) / ((n + 1.0) * (M[j] - 1.0))
        if step <= tol / (n + 1.0):
            break
        u *= 1.0 - step
        u[j] += step
    center = V.T @ u
    cov = V.T @ (u[:, None] * V) - np.outer(center, center)
    P = np.linalg.inv(cov) / n
    # shrink to the farthest point so the ellipsoid encloses every input
    D = V - center
    P /= max(1.0, float(np.max(np.einsum("ij,jk,ik->i", D, P, D))))
    return center, P


def ellipsoid_volume(P, scale=1.0):
    """Volume of ``{x : x @ P @ x <= 1}`` with every semi-axis times ``scale``."""
    n = P.shape[0]
    unit_ball = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return unit_ball * scale**n / math.sqrt(np.linalg.det(P))


def mvie(C):
    """Maximum-volume ellipsoid inscribed in an H-rep polytope.

    Returns ``(center, E)`` for the ellipsoid ``{E s + center : ||s|| <= 1}``.
    Requires cvxpy; returns None when it is not installed or fails.
    """
    try:
        import cvxpy as cp
    except ImportError:
        return None
    n = C.dim
    E = cp.Variable((n, n), PSD=True)
    d = cp.Variable(n)
    cons = [cp.norm(E @ a, 2) + a @ d <= bi for a, bi in zip(C.A, C.b)]
    prob = cp.Problem(cp.Maximize(cp.log_det(E)), cons)
    try:
        prob.solve()
    except cp.error.SolverError:
        return None
    if prob.status not in ("optimal", "optimal_inaccurate"):
        return None
    return d.value, E.value


# ---------------------------------------------------------------------------
# Low-dimensional helpers (evaluation only)


def hull_2d(points):
    """Counter-clockwise convex hull of planar points (monotone chain)."""
    P = np.unique(np.atleast_2d(np.asarray(points, dtype=float)), axis=0)
    if len(P) <= 2:
        return P

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in P:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in P[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def polygon_area(poly):
    """Shoelace area of an ordered polygon."""
    poly = np.atleast_2d(poly)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def hull_volume_lowdim(V):
    """Exact convex-hull volume for ``n`` in {2, 3}.

    Returns ``(volume, degenerate)``; rank-deficient point sets give
    ``(0.0, True)``.
    """
    V = np.atleast_2d(np.asarray(V, dtype=float))
    n = V.shape[1]
    if n not in (2, 3):
        raise ValueError("exact hull volume only for n = 2 or 3")
    if V.shape[0] < n + 1 or np.linalg.matrix_rank(V - V[0], tol=1e-12) < n:
        return 0.0, True
    if n == 2:
        return polygon_area(hull_2d(V)), False
    from scipy.spatial import ConvexHull, QhullError

    try:
        return float(ConvexHull(V).volume), False
    except QhullError:
        return 0.0, True


def clip_polygon(poly, a, b):
    """Clip an ordered convex polygon to the halfplane ``a @ x <= b``."""
    out = []
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        fp, fq = a @ p - b, a @ q - b
        if fp <= 0:
            out.append(p)
        if fp * fq < 0:
            t = fp / (fp - fq)
            out.append(p + t * (q - p))
    return np.array(out).reshape(-1, 2)


def hrep_area_2d(C):
    """Area of a bounded planar H-polytope by successive clipping."""
    if C.dim != 2:
        raise ValueError("planar sets only")
    lo, hi = bounding_box(C)
    poly = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
    for a, bi in zip(C.A, C.b):
        poly = clip_polygon(poly, a, bi)
        if len(poly) < 3:
            return 0.0
    return polygon_area(poly)


# ---------------------------------------------------------------------------
# Text serialization


def dumps(P, kind=None):
    """Rows ``a_1 ... a_n b`` (H-rep) or ``v_1 ... v_n`` (V-rep)."""
    kind = kind or ("H" if P.has_hrep else "V")
    rows = np.hstack([P.A, P.b[:, None]]) if kind == "H" else P.V
    buf = io.StringIO()
    buf.write(f"# {kind}\n")
    np.savetxt(buf, rows, fmt="%.17g")
    return buf.getvalue()


def loads(text, kind=None):
    """Parse the output of :func:`dumps`.

    ``kind`` defaults to the ``# H`` / ``# V`` header; headerless text is
    read as V-rep.
    """
    if kind is None:
        first = text.lstrip().splitlines()[0] if text.strip() else ""
        kind = "H" if first.replace(" ", "").upper() == "#H" else "V"
    rows = np.loadtxt(io.StringIO(text), ndmin=2)
    if kind == "H":
        return Polytope(A=rows[:, :-1], b=rows[:, -1])
    return Polytope(V=rows)


def save(path, P, kind=None):
    with open(path, "w") as fh:
        fh.write(dumps(P, kind))


def load(path, kind=None):
    with open(path) as fh:
        return loads(fh.read(), kind)
