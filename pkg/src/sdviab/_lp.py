"""Thin wrapper over the HiGHS LP solver shipped with scipy."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

# scipy.optimize.linprog status codes
OPTIMAL = 0
ITERATION_LIMIT = 1
INFEASIBLE = 2
UNBOUNDED = 3
NUMERICAL = 4

_OPTIONS = {
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
}


@dataclass(frozen=True)
class LpResult:
    status: int
    x: np.ndarray | None
    fun: float | None
    message: str = ""

    @property
    def ok(self):
        return self.status == OPTIMAL


def solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(None, None)):
    """Minimize ``c @ x`` subject to the given constraints.

    Variables are free unless ``bounds`` says otherwise. Never raises on
    solver trouble; callers decide what a non-optimal status means.
    """
    c = np.asarray(c, dtype=float)
    try:
        res = linprog(
            c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=A_eq,
            b_eq=b_eq,
            bounds=bounds,
            method="highs",
            options=_OPTIONS,
        )
    except ValueError as exc:  # malformed input that slipped past callers
        return LpResult(NUMERICAL, None, None, str(exc))
    x = res.x if res.status == OPTIMAL else None
    fun = float(res.fun) if res.status == OPTIMAL else None
    return LpResult(int(res.status), x, fun, res.message)
