"""Command-line entry point with problem files and presets.

Problem files are TOML::

    [system]
    A = [[0.0, 1.0], [0.0, 0.0]]
    B = [[0.0], [1.0]]        # or A_file / B_file with whitespace-separated rows

    [K]                       # a box (lo, hi) or facets (A, b)
    lo = [-0.5, -0.5]
    hi = [0.5, 0.5]

    [U]
    lo = [-0.15]
    hi = [0.15]

    [discretization]
    delta = 0.05
    tau = 1.0
    zeta = 4

    [search]
    N = 20
    epsilon = 0.01
    epsilon_o = 0.01
    facet_ratio = 0.5
    pipeline = "combined"     # or "under"
    recenter = true
    guided = true
    # max_depth = 3

    [sampler]
    mode = "uniform"
    seed = 0
    # nu0, nu1, nu2 override the calibrated defaults

    [warm_start]
    axes = false
    fans = [[0, 3, 12]]       # (i, j, count) per plane, zero-based

    [output]
    dir = "out"
"""

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from importlib import metadata
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import geometry, kernel, oracle, sampling
from .discretization import LtiSystem, SampledDataProblem
from .errors import (
    BoundBlowup,
    ConfigError,
    EmptyErosion,
    FacetAborted,
    InfeasibleAnchor,
    LpNumericalFailure,
    OrderTooLow,
    ViabilityError,
)
from .geometry import Polytope

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EMPTY_EROSION = 3
EXIT_INFEASIBLE_ANCHOR = 4
EXIT_SOLVER = 5

GRAVITY = 9.81
PIPELINES = ("combined", "under")


def library_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# Configuration


@dataclass(eq=False)
class ProblemConfig:
    """A validated problem plus everything needed to reproduce a run."""

    problem: SampledDataProblem
    N: int = 20
    mode: str = "uniform"
    seed: int = 0
    nu: tuple = (None, None, None)
    facet_ratio: float = 0.5
    pipeline: str = "combined"
    recenter: bool = True
    guided: bool = True
    max_depth: int | None = None
    warm_axes: bool = False
    warm_fans: list = field(default_factory=list)
    out_dir: str = "out"
    name: str = "custom"

    def __post_init__(self):
        if self.N < 0 or int(self.N) != self.N:
            raise ConfigError("N must be a nonnegative integer")
        if self.mode not in sampling.MODES:
            raise ConfigError(f"unknown sampler mode {self.mode!r}")
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"pipeline must be one of {PIPELINES}")
        if not 0 < self.facet_ratio <= 1:
            raise ConfigError("facet_ratio must lie in (0, 1]")
        if self.pipeline == "under" and self.mode not in ("uniform", "avg_opposite"):
            raise ConfigError(f"{self.mode} sampling needs the combined pipeline")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be positive")
        n = self.problem.n
        for fan in self.warm_fans:
            i, j, count = fan
            if not (0 <= i < n and 0 <= j < n and i != j and count > 0):
                raise ConfigError(f"bad warm-start fan {fan}")

    def sampler(self):
        nu0, nu1, nu2 = self.nu
        return sampling.SamplerState(self.mode, self.problem.n, seed=self.seed,
                                     nu0=nu0, nu1=nu1, nu2=nu2)

    def warm_start(self):
        n = self.problem.n
        dirs = kernel.axis_directions(n) if self.warm_axes else []
        for i, j, count in self.warm_fans:
            dirs.extend(kernel.plane_fan(n, i, j, count))
        return dirs

    def to_dict(self):
        p = self.problem
        return {
            "name": self.name,
            "A": p.system.A.tolist(), "B": p.system.B.tolist(),
            "K": [p.K.A.tolist(), p.K.b.tolist()], "U": [p.U.A.tolist(), p.U.b.tolist()],
            "delta": p.delta, "tau": p.tau, "zeta": p.zeta,
            "epsilon": p.epsilon, "epsilon_o": p.epsilon_o,
            "N": self.N, "mode": self.mode, "seed": self.seed, "nu": list(self.nu),
            "facet_ratio": self.facet_ratio, "pipeline": self.pipeline,
            "recenter": self.recenter, "guided": self.guided, "max_depth": self.max_depth,
            "warm_axes": self.warm_axes, "warm_fans": [list(f) for f in self.warm_fans],
        }

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _matrix(section, key, base):
    if key in section:
        M = np.array(section[key], dtype=float)
    elif f"{key}_file" in section:
        M = np.loadtxt(base / section[f"{key}_file"], ndmin=2)
    else:
        raise ConfigError(f"missing {key} (inline or {key}_file)")
    return np.atleast_2d(M)


def _set(section, name):
    if "lo" in section and "hi" in section:
        return Polytope.box(section["lo"], section["hi"])
    if "A" in section and "b" in section:
        return Polytope.from_hrep(section["A"], section["b"])
    raise ConfigError(f"[{name}] needs lo/hi or A/b")


def config_from_dict(data, base=Path(".")):
    """Build a :class:`ProblemConfig` from parsed TOML; raises ConfigError."""
    try:
        sys_s = data["system"]
        A = _matrix(sys_s, "A", base)
        B = _matrix(sys_s, "B", base)
        disc = data.get("discretization", {})
        search = data.get("search", {})
        samp = data.get("sampler", {})
        warm = data.get("warm_start", {})
        problem = SampledDataProblem(
            LtiSystem(A, B), _set(data["K"], "K"), _set(data["U"], "U"),
            delta=float(disc["delta"]), tau=float(disc["tau"]),
            zeta=disc.get("zeta", 4),
            epsilon=float(search.get("epsilon", 0.01)),
            epsilon_o=float(search.get("epsilon_o", 0.01)),
        )
        return ProblemConfig(
            problem,
            N=int(search.get("N", 20)),
            mode=samp.get("mode", "uniform"),
            seed=int(samp.get("seed", 0)),
            nu=tuple(samp.get(k) for k in ("nu0", "nu1", "nu2")),
            facet_ratio=float(search.get("facet_ratio", 0.5)),
            pipeline=search.get("pipeline", "combined"),
            recenter=bool(search.get("recenter", True)),
            guided=bool(search.get("guided", True)),
            max_depth=search.get("max_depth"),
            warm_axes=bool(warm.get("axes", False)),
            warm_fans=[tuple(int(v) for v in f) for f in warm.get("fans", [])],
            out_dir=data.get("output", {}).get("dir", "out"),
            name=data.get("name", "custom"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"invalid problem configuration: {exc}") from exc


def load_config(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return config_from_dict(data, base=path.parent)


# ---------------------------------------------------------------------------
# Presets


def preset_double_integrator(seed=0, N=20):
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    problem = SampledDataProblem(
        LtiSystem(A, B), Polytope.inf_ball(2, 0.5), Polytope.box([-0.15], [0.15]),
        delta=0.05, tau=1.0, zeta=4, epsilon=0.01, epsilon_o=0.01,
    )
    return ProblemConfig(problem, N=N, mode="uniform", seed=seed, pipeline="combined",
                         name="double-integrator")


def preset_integrator_chain(n, seed=0):
    """``n``-th order integrator with ``N = 2n`` and three bisection steps per ray."""
    A = np.diag(np.ones(n - 1), k=1)
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    problem = SampledDataProblem(
        LtiSystem(A, B), Polytope.inf_ball(n, 0.5), Polytope.box([-0.15], [0.15]),
        delta=0.05, tau=1.0, zeta=4, epsilon=0.01, epsilon_o=0.01,
    )
    return ProblemConfig(problem, N=2 * n, mode="uniform", seed=seed, pipeline="under",
                         recenter=False, max_depth=3, name=f"integrator-chain-{n}")


def quadrotor_system(g=GRAVITY):
    """Hover linearization; state (x, y, z, vx, vy, vz, phi, theta, psi, p, q, r).

    Inputs are the thrust deviation and the three angular accelerations.
    """
    A = np.zeros((12, 12))
    for i in range(3):
        A[i, i + 3] = 1.0
        A[i + 6, i + 9] = 1.0
    A[3, 7] = g
    A[4, 6] = -g
    B = np.zeros((12, 4))
    B[5, 0] = 1.0
    B[9, 1] = B[10, 2] = B[11, 3] = 1.0
    return A, B


def speed_prism_facets(speed=5.0, sides=16, inner=True):
    """Facets bounding ``||(vx, vy, vz)||_2 <= speed`` by polygons in each velocity pair.

    ``inner=True`` keeps the polytope inside the ball: each pairwise polygon
    is inscribed in a circle of radius ``speed / sqrt(1.5)``, so the three
    pairwise constraints together imply the speed bound. ``inner=False``
    circumscribes the circle of radius ``speed`` in every pair instead.
    """
    if inner:
        apothem = speed * math.cos(math.pi / sides) / math.sqrt(1.5)
    else:
        apothem = speed
    rows, offs = [], []
    for i, j in ((3, 4), (3, 5), (4, 5)):
        for k in range(sides):
            t = 2.0 * math.pi * k / sides
            a = np.zeros(12)
            a[i], a[j] = math.cos(t), math.sin(t)
            rows.append(a)
            offs.append(apothem)
    return np.array(rows), np.array(offs)


def preset_quadrotor(seed=0, N=96, speed_inner=True):
    A, B = quadrotor_system()
    quarter = math.pi / 4
    lo = [-6, -6, 1, -5, -5, -5, -quarter, -quarter, -math.pi, -3, -3, -3]
    hi = [6, 6, 7, 5, 5, 5, quarter, quarter, math.pi, 3, 3, 3]
    box = Polytope.box(lo, hi)
    K = box.with_facets(*speed_prism_facets(inner=speed_inner))
    U = Polytope.box([-GRAVITY, -0.5, -0.5, -0.5], [2.38, 0.5, 0.5, 0.5])
    problem = SampledDataProblem(LtiSystem(A, B), K, U, delta=0.1, tau=2.0,
                                 zeta=4, epsilon=0.01, epsilon_o=0.01)
    fans = [(i, i + 3, 12) for i in range(3)] + [(i + 6, i + 9, 12) for i in range(3)]
    return ProblemConfig(problem, N=N, mode="avg_opposite", seed=seed, pipeline="under",
                         recenter=False, warm_axes=True, warm_fans=fans, name="quadrotor")


PRESETS = {
    "double-integrator": lambda args: preset_double_integrator(),
    "integrator-chain": lambda args: preset_integrator_chain(args.order),
    "quadrotor": lambda args: preset_quadrotor(),
}

# planes shown for the quadrotor: (x, vx), (y, vy), (z, vz), (phi, p), (theta, q), (psi, r)
QUADROTOR_PLANES = [(0, 3), (1, 4), (2, 5), (6, 9), (7, 10), (8, 11)]


# ---------------------------------------------------------------------------
# Running


@dataclass(eq=False)
class RunResult:
    config: ProblemConfig
    under: kernel.UnderApproximation
    over: kernel.OverApproximation | None
    err_trace: list
    stats: kernel.RunStats
    elapsed: float


def run(config, workers=1):
    """Run the configured pipeline and return the approximations with timings."""
    t0 = time.perf_counter()
    solver = kernel.ViabilitySolver(config.problem)
    sampler = config.sampler()
    if workers > 1 and (config.pipeline != "under" or config.mode != "uniform" or config.recenter):
        logger.warning("sequential run: parallel workers need uniform sampling without re-centering")
        workers = 1
    if config.pipeline == "combined":
        under, over, trace = solver.combined_guided(
            config.N, sampler=sampler, facet_ratio=config.facet_ratio,
            recenter=config.recenter, guided=config.guided, warm_start=config.warm_start(),
        )
    else:
        under = solver.under_approx(
            config.N, sampler=sampler, warm_start=config.warm_start(), workers=workers,
            recenter=config.recenter, max_depth=config.max_depth,
        )
        over, trace = None, []
    return RunResult(config, under, over, trace, solver.stats, time.perf_counter() - t0)


def _fmt_list(values):
    return ",".join(f"{v:.6g}" for v in values)


def manifest(result):
    """``key = value`` lines describing a run."""
    cfg, st = result.config, result.stats
    sampler = cfg.sampler()
    vt = st.vertex_times or [0.0]
    lines = {
        "name": cfg.name,
        "version": library_version(),
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "mode": cfg.mode,
        "nu0": sampler.nu0, "nu1": sampler.nu1, "nu2": sampler.nu2,
        "pipeline": cfg.pipeline,
        "vertices": len(result.under),
        "facets": 0 if result.over is None else len(result.over),
        "facets_empty": result.over is None or result.over.flagged_empty,
        "accepted": st.accepted,
        "skipped": st.skipped,
        "facets_aborted": st.facets_aborted,
        "time_total": f"{result.elapsed:.6g}",
        "time_vertex_mean": f"{np.mean(vt):.6g}",
        "time_vertex_max": f"{np.max(vt):.6g}",
        "time_per_vertex": _fmt_list(st.vertex_times),
        "time_per_facet": _fmt_list(st.facet_times),
        "err_trace": _fmt_list(result.err_trace),
    }
    return "".join(f"{k} = {v}\n" for k, v in lines.items())


def read_manifest(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def write_outputs(result, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    geometry.save(out / "vertices.txt", result.under.polytope(), kind="V")
    if result.over is not None and not result.over.flagged_empty:
        geometry.save(out / "facets.txt", result.over.polytope(), kind="H")
    else:
        (out / "facets.txt").write_text("# H\n")
    (out / "manifest.txt").write_text(manifest(result))
    return out


def project(V, dims):
    """Hull of the 2D shadow of a vertex set and a degeneracy flag."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    i, j = dims
    n = V.shape[1]
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ConfigError(f"projection dims {dims} invalid for dimension {n}")
    poly = geometry.hull_2d(V[:, [i, j]])
    return poly, len(poly) < 3 or geometry.polygon_area(poly) <= 1e-12


# ---------------------------------------------------------------------------
# Commands


def _config_from_args(args):
    if args.preset:
        cfg = PRESETS[args.preset](args)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigError("give a config file or --preset")
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "N", None) is not None:
        updates["N"] = args.N
    if getattr(args, "mode", None) is not None:
        updates["mode"] = args.mode
    if getattr(args, "out", None) is not None:
        updates["out_dir"] = args.out
    return replace(cfg, **updates) if updates else cfg


def cmd_approx(args):
    cfg = _config_from_args(args)
    result = run(cfg, workers=args.workers)
    out = write_outputs(result, cfg.out_dir)
    print(f"{len(result.under)} vertices, "
          f"{0 if result.over is None else len(result.over)} facets, "
          f"{result.elapsed:.2f} s -> {out}")
    return EXIT_OK


def cmd_project(args):
    V = geometry.load(args.vertices, kind="V").V
    poly, degenerate = project(V, tuple(args.dims))
    if degenerate:
        print(f"warning: projection onto {tuple(args.dims)} is degenerate", file=sys.stderr)
    text = "".join(f"{p[0]:.17g} {p[1]:.17g}\n" for p in poly)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle(args):
    cfg = _config_from_args(args)
    bracket = oracle.grid_bracket_2d(cfg.problem, h=args.h)
    text = "".join(f"{x:.10g} {y:.10g} {c}\n" for x, y, c in bracket.rows())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"outer area {bracket.outer_area:.6g}, inner area {bracket.inner_area:.6g}",
          file=sys.stderr)
    return EXIT_OK


def cmd_bench(args):
    """Per-vertex timing of the integrator chain for several orders."""
    print("n vertices time_total time_per_vertex")
    for n in args.orders:
        result = run(preset_integrator_chain(n, seed=args.seed))
        per = result.elapsed / max(len(result.under) - 1, 1)
        print(f"{n} {len(result.under)} {result.elapsed:.4g} {per:.4g}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="sdviab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def problem_args(sp):
        sp.add_argument("config", nargs="?", help="TOML problem file")
        sp.add_argument("--preset", choices=sorted(PRESETS))
        sp.add_argument("--order", type=int, default=4, help="integrator-chain order")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("approx", help="compute under/over approximations")
    problem_args(sp)
    sp.add_argument("--N", type=int)
    sp.add_argument("--mode", choices=sampling.MODES)
    sp.add_argument("--out")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_approx)

    sp = sub.add_parser("project", help="2D shadow polygon of a vertex file")
    sp.add_argument("vertices")
    sp.add_argument("--dims", type=int, nargs=2, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_project)

    sp = sub.add_parser("oracle", help="grid classification of a planar problem")
    problem_args(sp)
    sp.add_argument("--h", type=float, default=0.02)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("bench", help="integrator-chain timing curve")
    sp.add_argument("--orders", type=int, nargs="+", default=[2, 4, 6, 8, 10])
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OrderTooLow) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyErosion as exc:
        print(f"empty erosion: {exc}; try a smaller sampling interval", file=sys.stderr)
        return EXIT_EMPTY_EROSION
    except InfeasibleAnchor as exc:
        print(f"no feasible anchor: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE_ANCHOR
    except (LpNumericalFailure, FacetAborted, BoundBlowup, ViabilityError) as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
