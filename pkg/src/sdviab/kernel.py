"""Under- and over-approximation of the sampled-data viability kernel.

All geometry runs in a scaled state space in which every coordinate moves at a
comparable rate; results are mapped back to the original coordinates. The
scaled frame is also where the bisection accuracies are measured.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import discretization, feasibility, geometry, sampling
from .errors import (
    DegenerateInput,
    FacetAborted,
    InfeasibleAnchor,
    ViabilityError,
)
from .geometry import Polytope, Ray

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Scaling


@dataclass(frozen=True, eq=False)
class ScalingTransform:
    """Diagonal change of coordinates ``x = diag(rho) @ x_scaled``.

    ``A`` and ``B`` form the scaled system and ``K`` is the scaled state
    set; ``U`` is unchanged. ``M`` bounds the scaled vector field in the infinity norm.
    """

    rho: np.ndarray
    A: np.ndarray
    B: np.ndarray
    K: Polytope
    U: Polytope
    M: float

    def to_scaled(self, x):
        return np.asarray(x, dtype=float) / self.rho

    def to_original(self, x):
        return np.asarray(x, dtype=float) * self.rho

    def normal_to_original(self, r):
        """Normal of ``{r @ x_scaled <= c}`` written in original coordinates."""
        return np.asarray(r, dtype=float) / self.rho


def _field_extremes(A, B, K, U):
    """Per-row ``max`` and ``min`` of ``A x + B u`` over ``K x U``."""
    n = A.shape[0]
    hi, lo = np.zeros(n), np.zeros(n)
    for d in range(n):
        for sign, out in ((1.0, hi), (-1.0, lo)):
            val = 0.0
            if np.any(A[d]):
                val += geometry.support_function(K, sign * A[d])[0]
            if np.any(B[d]):
                val += geometry.support_function(U, sign * B[d])[0]
            out[d] = sign * val
    return hi, lo


def scale_and_bound(problem, scale=True):
    """Equalize per-coordinate rates of change and bound the vector field.

    Each coordinate's range of velocities over ``K x U`` is divided by the
    smallest nonzero range; coordinates with zero range are left unscaled.
    With ``scale=False`` the transform is the identity and only ``M`` is
    computed.
    """
    A, B = problem.system.A, problem.system.B
    K, U = problem.K, problem.U
    hi, lo = _field_extremes(A, B, K, U)
    ranges = hi - lo
    rho = np.ones(problem.n)
    positive = ranges > 1e-12
    if scale and np.any(positive):
        rho[positive] = ranges[positive] / ranges[positive].min()
    if scale and not np.all(positive):
        logger.warning("coordinates %s have zero rate range; left unscaled",
                       np.flatnonzero(~positive).tolist())
    D = np.diag(rho)
    A_s = (A * rho[None, :]) / rho[:, None]
    B_s = B / rho[:, None]
    K_s = K.linear_map_inverse(D)
    hi_s, lo_s = _field_extremes(A_s, B_s, K_s, U)
    M = float(max(np.max(np.abs(hi_s)), np.max(np.abs(lo_s))))
    return ScalingTransform(rho=rho, A=A_s, B=B_s, K=K_s, U=U, M=M)


def build_bundle(problem, transform):
    """Discretize the scaled problem and erode the scaled ``K`` by ``M delta``."""
    return discretization.build_bundle(
        transform.A, transform.B, transform.K, transform.U,
        problem.delta, problem.zeta, problem.n_steps, transform.M,
    )


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True, eq=False)
class Vertex:
    """A certified point; coordinates are in the scaled frame."""

    point: np.ndarray
    direction: np.ndarray | None
    anchor: np.ndarray | None
    u_star: np.ndarray | None
    kind: str = "sampled"
    restricted: bool = False


@dataclass(eq=False)
class UnderApproximation:
    """Convex hull of certified vertices.

    ``records`` keep the scaled-frame data (direction, ray origin, input
    certificate) behind every vertex; ``vertices`` are in original
    coordinates.
    """

    records: list
    transform: ScalingTransform
    anchor: np.ndarray

    @property
    def vertices_scaled(self):
        return np.array([v.point for v in self.records])

    @property
    def vertices(self):
        return self.transform.to_original(self.vertices_scaled)

    @property
    def directions(self):
        return [v.direction for v in self.records]

    @property
    def certificates(self):
        return [v.u_star for v in self.records]

    @property
    def v0(self):
        return self.transform.to_original(self.anchor)

    def polytope(self):
        return Polytope(V=self.vertices)

    def __len__(self):
        return len(self.records)


@dataclass(eq=False)
class OverApproximation:
    """Intersection of ``K`` with halfspaces that the kernel cannot cross.

    ``facets`` hold scaled-frame :class:`~sdviab.feasibility.Facet` records.
    """

    facets: list
    transform: ScalingTransform
    aborted: int = 0

    @property
    def flagged_empty(self):
        return not self.facets

    def hrep_scaled(self, with_K=True):
        A = [f.direction for f in self.facets]
        b = [f.offset for f in self.facets]
        if with_K:
            base = self.transform.K
            if not A:
                return Polytope(A=base.A, b=base.b)
            return base.with_facets(A, b)
        if not A:
            raise DegenerateInput("no facets; the over-approximation is the ambient space")
        return Polytope(A=np.array(A), b=np.array(b))

    def normals_offsets(self):
        """Facet normals (unit length) and offsets in original coordinates."""
        normals, offsets = [], []
        for f in self.facets:
            a = self.transform.normal_to_original(f.direction)
            s = np.linalg.norm(a)
            normals.append(a / s)
            offsets.append(f.offset / s)
        return np.array(normals).reshape(-1, self.transform.rho.size), np.array(offsets)

    def polytope(self, with_K=False):
        """H-rep in original coordinates, optionally intersected with ``K``."""
        P = self.hrep_scaled(with_K=with_K)
        norms = np.linalg.norm(P.A / self.transform.rho[None, :], axis=1)
        return Polytope(A=(P.A / self.transform.rho[None, :]) / norms[:, None],
                        b=P.b / norms)

    @property
    def support_vectors(self):
        return np.array([self.transform.to_original(f.x0_star) for f in self.facets])

    def __len__(self):
        return len(self.facets)


@dataclass
class RunStats:
    vertex_times: list = field(default_factory=list)
    facet_times: list = field(default_factory=list)
    accepted: int = 0
    skipped: int = 0
    facets_aborted: int = 0
    err_trace: list = field(default_factory=list)
    anchor_trace: list = field(default_factory=list)
    total_time: float = 0.0


# ---------------------------------------------------------------------------
# Solver


def axis_directions(n):
    """``+e_1, -e_1, ..., +e_n, -e_n``."""
    out = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        out.extend([e, -e])
    return out


def plane_fan(n, i, j, count, offset=0.5):
    """``count`` evenly spaced unit vectors in the ``(x_i, x_j)`` plane.

    ``offset`` shifts the angles by that fraction of a step so the fan does
    not repeat the coordinate axes.
    """
    out = []
    for k in range(count):
        t = 2.0 * np.pi * (k + offset) / count
        v = np.zeros(n)
        v[i], v[j] = np.cos(t), np.sin(t)
        out.append(v)
    return out


class ViabilitySolver:
    """Scaling and discretization shared by every query on one problem.

    Methods take and return scaled-frame points unless the name says
    otherwise.
    """

    def __init__(self, problem, scale=True, transform=None, bundle=None):
        self.problem = problem
        self.transform = transform or scale_and_bound(problem, scale=scale)
        self.bundle = bundle or build_bundle(problem, self.transform)
        self.stats = RunStats()

    @property
    def n(self):
        return self.problem.n

    # -- oracles ----------------------------------------------------------

    def certify(self, x_scaled):
        return feasibility.feasible(x_scaled, self.bundle)

    def feasible_original(self, x):
        """Certificate for a point given in original coordinates."""
        return self.certify(self.transform.to_scaled(x))

    def find_anchor(self, v0=None, seed=0, tries=2000):
        """A certified starting point (scaled frame).

        Tries ``v0`` if given, else the origin, the center of the bounding
        box of the scaled ``K``, its Chebyshev center and random points of
        ``K``.
        """
        K = self.transform.K
        if v0 is not None:
            x = self.transform.to_scaled(v0)
            cert = self.certify(x)
            if not cert:
                raise InfeasibleAnchor("the given anchor is not certified feasible")
            return x, cert
        lo, hi = geometry.bounding_box(K)
        candidates = [np.zeros(self.n), 0.5 * (lo + hi)]
        try:
            candidates.append(geometry.chebyshev_center(K)[0])
        except ViabilityError:
            pass
        for x in candidates:
            if K.contains(x):
                cert = self.certify(x)
                if cert:
                    return x, cert
        rng = np.random.default_rng(seed)
        for _ in range(tries):
            x = rng.uniform(lo, hi)
            if K.contains(x):
                cert = self.certify(x)
                if cert:
                    return x, cert
        raise InfeasibleAnchor("no certified starting point found in K")

    # -- vertices ---------------------------------------------------------

    def _bisect(self, a, b, max_depth=None):
        """Bisection with certificate bookkeeping; returns ``(point, u_star)``."""
        found = {}

        def oracle(x):
            cert = self.certify(x)
            if cert:
                found[x.tobytes()] = cert.u_star
            return cert.feasible

        point = feasibility.bisection_feasibility(
            a, b, self.problem.epsilon, oracle, check_anchor=False, max_iter=max_depth
        )
        return point, found.get(point.tobytes())

    def vertex_along(self, direction, v0, v0_cert=None, max_depth=None):
        """One sampling step: ray from ``v0``, exit point of ``K``, bisection."""
        t0 = time.perf_counter()
        r = np.asarray(direction, dtype=float)
        r = r / np.linalg.norm(r)
        b = geometry.find_intersection_on_boundary(self.transform.K, Ray(v0, r))
        point, u = self._bisect(v0, b, max_depth)
        if u is None:
            u = v0_cert.u_star if v0_cert is not None else self.certify(point).u_star
        self.stats.vertex_times.append(time.perf_counter() - t0)
        return Vertex(point, r, np.array(v0), u)

    def guided_vertex(self, x0_star, v0, v0_cert=None):
        """Extra vertex toward a facet's support point, searched near that point."""
        t0 = time.perf_counter()
        eps_o = self.problem.epsilon_o
        w = np.asarray(x0_star) - v0
        dist = np.linalg.norm(w)
        if dist < 1e-12:
            raise DegenerateInput("support point coincides with the anchor")
        w_hat = w / dist
        boundary = geometry.find_intersection_on_boundary(self.transform.K, Ray(v0, w_hat))
        reach = np.linalg.norm(boundary - v0)
        a = v0 + max(dist - eps_o, 0.0) * w_hat
        b = v0 + min(dist + eps_o, reach) * w_hat
        restricted = bool(self.certify(a)) if dist > eps_o else False
        if restricted:
            point, u = self._bisect(a, b)
        else:
            point, u = self._bisect(v0, boundary)
        if u is None:
            cert = self.certify(point)
            u = cert.u_star if cert else (v0_cert.u_star if v0_cert is not None else None)
        self.stats.vertex_times.append(time.perf_counter() - t0)
        return Vertex(point, w_hat, np.array(v0), u, kind="guided", restricted=restricted)

    def facet_for(self, vertex):
        t0 = time.perf_counter()
        try:
            facet = feasibility.overapprox_facet(
                vertex.direction, vertex.point, vertex.anchor,
                self.problem.epsilon_o, self.bundle, v_cert=vertex.u_star,
            )
        except (FacetAborted, DegenerateInput) as exc:
            logger.warning("facet aborted: %s", exc)
            self.stats.facets_aborted += 1
            return None
        finally:
            self.stats.facet_times.append(time.perf_counter() - t0)
        return facet

    # -- error measures ---------------------------------------------------

    def hausdorff_error(self, under_pts, over, directions):
        V = Polytope(V=under_pts)
        return geometry.hausdorff_estimate(V, over, np.array(directions))

    def volume_error(self, under_pts, over):
        """Ellipsoid-based upper bound on the volume gap, or None if unavailable."""
        n = self.n
        inner = geometry.mvie(over)
        if inner is None:
            return None
        outer_vol = geometry.ellipsoid_volume(
            np.linalg.inv(inner[1] @ inner[1].T), scale=n
        )
        try:
            _, P = geometry.mvce_khachiyan(under_pts, tol=1e-3)
            under_vol = geometry.ellipsoid_volume(P, scale=1.0 / n)
        except DegenerateInput:
            under_vol = 0.0
        return outer_vol - under_vol

    # -- algorithms -------------------------------------------------------

    def under_approx(self, N, sampler=None, v0=None, warm_start=(), workers=1,
                     recenter=False, max_depth=None):
        """Polytopic under-approximation with ``N`` accepted vertices plus ``v0``.

        ``warm_start`` directions (scaled frame) are used before sampled
        ones. With a fixed anchor, ``workers > 1`` processes directions in
        parallel threads and yields the same vertex set.
        """
        t_start = time.perf_counter()
        sampler = sampler or sampling.SamplerState("uniform", self.n)
        if sampler.needs_over:
            raise ValueError(f"{sampler.mode} sampling needs combined_guided")
        anchor, anchor_cert = self.find_anchor(v0, seed=sampler.seed)
        records = [Vertex(anchor, None, None, anchor_cert.u_star, kind="anchor")]
        warm = [np.asarray(d, dtype=float) for d in warm_start]
        parallel = workers > 1 and not recenter

        def draw(count):
            out = []
            while warm and len(out) < count:
                d = warm.pop(0)
                sampler.history.append(d / np.linalg.norm(d))
                out.append(sampler.history[-1])
            while len(out) < count:
                out.append(sampling.next_direction(sampler))
            return out

        def attempt(d, origin, cert):
            try:
                return self.vertex_along(d, origin, cert, max_depth)
            except ViabilityError as exc:
                logger.warning("ray skipped: %s", exc)
                return None

        accepted = 0
        while accepted < N:
            if parallel:
                batch = draw(N - accepted)
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(lambda d: attempt(d, anchor, anchor_cert), batch))
            else:
                results = [attempt(draw(1)[0], anchor, anchor_cert)]
            for vtx in results:
                if vtx is None:
                    self.stats.skipped += 1
                    continue
                records.append(vtx)
                accepted += 1
                if recenter:
                    anchor, anchor_cert = self._recenter(records, anchor, anchor_cert)
        self.stats.accepted += accepted
        self.stats.total_time += time.perf_counter() - t_start
        return UnderApproximation(records, self.transform, anchor)

    def _recenter(self, records, anchor, anchor_cert):
        c = geometry.centroid([v.point for v in records])
        cert = self.certify(c)
        self.stats.anchor_trace.append((c, cert.feasible))
        if cert:
            return c, cert
        logger.warning("centroid failed certification; keeping the previous anchor")
        return anchor, anchor_cert

    def over_approx(self, under, facet_ratio=0.5):
        """Facets along a fraction of the under-approximation's ray directions."""
        t_start = time.perf_counter()
        sampled = [v for v in under.records if v.kind in ("sampled",) and v.direction is not None]
        count = int(round(len(sampled) * facet_ratio))
        picks = [sampled[int(j / facet_ratio)] for j in range(count)] if count else []
        facets = []
        for vtx in picks:
            facet = self.facet_for(vtx)
            if facet is not None:
                facets.append(facet)
        self.stats.total_time += time.perf_counter() - t_start
        return OverApproximation(facets, self.transform, aborted=len(picks) - len(facets))

    def combined_guided(self, N, sampler=None, v0=None, facet_ratio=0.5,
                        recenter=True, guided=True, warm_start=(), trace=True):
        """Interleaved under/over approximation with guided extra vertices.

        Each round adds a sampled vertex and a facet along its direction.
        A second vertex is then searched near the facet's support point and
        the ray origin moves to the vertex centroid. Returns ``(under, over, err_trace)``.
        """
        t_start = time.perf_counter()
        sampler = sampler or sampling.SamplerState("avg_opposite", self.n)
        anchor, anchor_cert = self.find_anchor(v0, seed=sampler.seed)
        records = [Vertex(anchor, None, None, anchor_cert.u_star, kind="anchor")]
        facets = []
        target = int(round(N * facet_ratio))
        warm = [np.asarray(d, dtype=float) for d in warm_start]
        use_volume = sampler.mode == "gradient_volume"
        accepted = 0
        while accepted < N:
            over = OverApproximation(facets, self.transform).hrep_scaled()
            pts = np.array([v.point for v in records])
            if warm:
                d = warm.pop(0)
                r = d / np.linalg.norm(d)
                sampler.history.append(r)
            else:
                r = sampling.next_direction(sampler, under=pts, over=over, v0=anchor)
            try:
                vtx = self.vertex_along(r, anchor, anchor_cert)
            except ViabilityError as exc:
                logger.warning("ray skipped: %s", exc)
                self.stats.skipped += 1
                continue
            records.append(vtx)
            accepted += 1
            if accepted < N and len(facets) < target:
                facet = self.facet_for(vtx)
                if facet is not None:
                    facets.append(facet)
                    if guided:
                        try:
                            records.append(self.guided_vertex(facet.x0_star, anchor, anchor_cert))
                            accepted += 1
                        except ViabilityError as exc:
                            logger.warning("guided vertex skipped: %s", exc)
            if recenter:
                anchor, anchor_cert = self._recenter(records, anchor, anchor_cert)
            if trace or sampler.needs_over:
                over = OverApproximation(facets, self.transform).hrep_scaled()
                pts = np.array([v.point for v in records])
                err = None
                if use_volume:
                    err = self.volume_error(pts, over)
                    if err is None:
                        logger.warning("ellipsoid solver unavailable; using the Hausdorff error")
                        use_volume = False
                if err is None:
                    err = self.hausdorff_error(pts, over, sampler.history)
                sampler.record_error(err)
                self.stats.err_trace.append(err)
        self.stats.accepted += accepted
        self.stats.total_time += time.perf_counter() - t_start
        under = UnderApproximation(records, self.transform, anchor)
        return under, OverApproximation(facets, self.transform), list(self.stats.err_trace)


# ---------------------------------------------------------------------------
# Functional entry points


def polytopic_approx(problem, v0=None, N=20, sampler=None, **kwargs):
    """Under-approximate the kernel of ``problem`` with ``N`` sampled rays."""
    return ViabilitySolver(problem).under_approx(N, sampler=sampler, v0=v0, **kwargs)


def over_approx(problem, under, epsilon_o=None, facet_ratio=0.5, solver=None):
    """Over-approximation facets along the directions recorded in ``under``."""
    if solver is None:
        if epsilon_o is not None and epsilon_o != problem.epsilon_o:
            from dataclasses import replace

            problem = replace(problem, epsilon_o=epsilon_o)
        solver = ViabilitySolver(problem, transform=under.transform)
    return solver.over_approx(under, facet_ratio=facet_ratio)


def combined_guided(problem, N=20, mode="avg_opposite", seed=0, **kwargs):
    """Guided under/over approximation; returns ``(under, over, err_trace)``."""
    sampler = sampling.SamplerState(mode, problem.n, seed=seed)
    return ViabilitySolver(problem).combined_guided(N, sampler=sampler, **kwargs)
