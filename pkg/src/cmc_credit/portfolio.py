"""Mean-CVaR selection of tranche portfolios over equally weighted scenarios.

The Rockafellar-Uryasev linearisation with variables ``x = (w, a, z)``::

    min   a + 1/((1-alpha) n) * sum_s z_s
    s.t.  -mean_return . w        <= -mu          (1 row)
          loss_s . w - a - z_s    <= 0            (n rows)
          sum(w)                   = 1            (1 row)
          lo <= w <= hi,  a free,  z >= 0

Losses are negated discounted returns.  Small programs are solved with the
package's own dense simplex; large ones go to HiGHS through scipy.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import CMCError, Infeasible, InfeasibleBounds, Unbounded
from .pricing import conditional_value_at_risk, value_at_risk, risk_stats, write_histogram_csv
from .simplex import simplex

DENSE_CELL_LIMIT = 250_000  # ~200 scenarios; beyond that Bland pivoting gets slow


@dataclass(frozen=True, eq=False)
class CvarProblem:
    returns: np.ndarray  # (n_scenarios, d)
    target_mean: float
    alpha: float = 0.9
    lower: object = -0.5
    upper: object = 0.5
    names: Optional[tuple] = None

    def __post_init__(self):
        r = np.array(self.returns, dtype=float, copy=True)
        if r.ndim != 2 or r.shape[0] < 1 or r.shape[1] < 1:
            raise ValueError("returns must be an (n_scenarios, d) matrix")
        d = r.shape[1]
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (d,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (d,)).copy()
        if np.any(lo > hi):
            raise InfeasibleBounds("lower bound exceeds upper bound")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        for a in (r, lo, hi):
            a.setflags(write=False)
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"asset{i}" for i in range(d)))

    @property
    def n_scenarios(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    @property
    def losses(self) -> np.ndarray:
        return -self.returns

    def with_target(self, mu: float) -> "CvarProblem":
        from dataclasses import replace
        return replace(self, target_mean=float(mu))

    def with_alpha(self, alpha: float) -> "CvarProblem":
        from dataclasses import replace
        return replace(self, alpha=float(alpha))


@dataclass(eq=False)
class LinearProgram:
    c: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.a_ub.shape[0] + self.a_eq.shape[0]

    @property
    def n_vars(self) -> int:
        return len(self.c)


@dataclass
class LpSolution:
    x: np.ndarray
    objective: float
    status: str
    method: str
    iterations: int = 0


@dataclass
class CvarSolution:
    weights: Optional[np.ndarray]
    alpha: float
    target_mean: float
    status: str
    mean: float = float("nan")
    cvar: float = float("nan")
    var: float = float("nan")
    objective: float = float("nan")
    gap: float = float("nan")
    method: str = ""
    names: tuple = ()
    detail: str = ""
    portfolio_returns: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "status": self.status,
            "alpha": self.alpha,
            "target_mean": self.target_mean,
            "solver": self.method,
        }
        if self.weights is not None:
            d.update({
                "weights": dict(zip(self.names, map(float, self.weights))),
                "mean_return": self.mean,
                "CVaR": self.cvar,
                "VaR": self.var,
                "lp_objective": self.objective,
                "gap": self.gap,
            })
        if self.detail:
            d["detail"] = self.detail
        return d


def check_bounds(problem: CvarProblem) -> None:
    if problem.lower.sum() > 1.0 + 1e-12 or problem.upper.sum() < 1.0 - 1e-12:
        raise InfeasibleBounds(
            f"weights cannot sum to 1 within bounds (sum lo={problem.lower.sum():.6g}, sum hi={problem.upper.sum():.6g})"
        )


def attainable_mean_range(problem: CvarProblem):
    """(min, max) of the portfolio mean over the box-and-budget set."""
    check_bounds(problem)
    mu = problem.returns.mean(axis=0)

    def greedy(order):
        w = problem.lower.copy()
        room = 1.0 - w.sum()
        for i in order:
            step = min(problem.upper[i] - w[i], room)
            w[i] += step
            room -= step
        return float(mu @ w)

    return greedy(np.argsort(mu)), greedy(np.argsort(-mu))


def build_lp(problem: CvarProblem) -> LinearProgram:
    check_bounds(problem)
    n, d = problem.returns.shape
    loss = problem.losses
    nv = d + 1 + n
    c = np.zeros(nv)
    c[d] = 1.0
    c[d + 1:] = 1.0 / ((1.0 - problem.alpha) * n)
    mean_row = sp.csr_matrix(np.concatenate([-problem.returns.mean(axis=0), np.zeros(1 + n)])[None, :])
    scen = sp.hstack([sp.csr_matrix(loss), sp.csr_matrix(-np.ones((n, 1))), -sp.identity(n, format="csr")])
    a_ub = sp.vstack([mean_row, scen]).tocsr()
    b_ub = np.concatenate([[-problem.target_mean], np.zeros(n)])
    a_eq = sp.csr_matrix(np.concatenate([np.ones(d), np.zeros(1 + n)])[None, :])
    b_eq = np.ones(1)
    lb = np.concatenate([problem.lower, [-np.inf], np.zeros(n)])
    ub = np.concatenate([problem.upper, [np.inf], np.full(n, np.inf)])
    return LinearProgram(c, a_ub, b_ub, a_eq, b_eq, lb, ub)


def _pick_method(lp: LinearProgram) -> str:
    free = int(np.sum(~np.isfinite(lp.lb) & ~np.isfinite(lp.ub)))
    boxed = int(np.sum(np.isfinite(lp.lb) & np.isfinite(lp.ub)))
    rows = lp.n_rows + boxed
    cols = lp.n_vars + free + rows
    return "simplex" if rows * cols <= DENSE_CELL_LIMIT else "highs"


def solve_lp(lp: LinearProgram, method: str = "auto") -> LpSolution:
    """Solve an LP; raises Infeasible or Unbounded."""
    if method == "auto":
        method = _pick_method(lp)
    if method == "simplex":
        res = simplex(lp.c, lp.a_ub, lp.b_ub, lp.a_eq, lp.b_eq, lp.lb, lp.ub)
        return LpSolution(res.x, res.objective, "optimal", "simplex", res.iterations)
    if method == "highs":
        res = linprog(
            lp.c,
            A_ub=lp.a_ub,
            b_ub=lp.b_ub,
            A_eq=lp.a_eq,
            b_eq=lp.b_eq,
            bounds=np.column_stack([lp.lb, lp.ub]),
            method="highs-ds",
            options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
        )
        if res.status == 2:
            raise Infeasible(res.message)
        if res.status == 3:
            raise Unbounded(res.message)
        if res.status != 0:
            raise CMCError(f"LP solver failed: {res.message}")
        return LpSolution(res.x, float(res.fun), "optimal", "highs", int(res.nit))
    raise ValueError(f"unknown LP method {method!r}")


def portfolio_cvar(problem: CvarProblem, weights) -> float:
    return conditional_value_at_risk(-(problem.returns @ np.asarray(weights)), problem.alpha)


def optimize_portfolio(problem: CvarProblem, method: str = "auto") -> CvarSolution:
    lp = build_lp(problem)
    sol = solve_lp(lp, method)
    d = problem.n_assets
    w = sol.x[:d].copy()
    port = problem.returns @ w
    stats = risk_stats(port, problem.alpha)
    return CvarSolution(
        weights=w,
        alpha=problem.alpha,
        target_mean=problem.target_mean,
        status=sol.status,
        mean=float(port.mean()),
        cvar=stats.cvar,
        var=stats.var,
        objective=sol.objective,
        gap=abs(sol.objective - stats.cvar),
        method=sol.method,
        names=problem.names,
        portfolio_returns=port,
    )


def efficient_frontier(problem: CvarProblem, mu_grid, method: str = "auto") -> list:
    """Re-solve for every target mean; infeasible points are kept with their status."""
    out = []
    for mu in mu_grid:
        try:
            out.append(optimize_portfolio(problem.with_target(mu), method))
        except (Infeasible, Unbounded) as exc:
            status = "unbounded" if isinstance(exc, Unbounded) else "infeasible"
            out.append(CvarSolution(None, problem.alpha, float(mu), status, names=problem.names, detail=str(exc)))
    return out


def write_solution(solution: CvarSolution, json_path, weights_csv=None, hist_csv=None, extra=None, comment=None) -> None:
    d = solution.to_dict()
    if extra:
        d.update(extra)
    with open(json_path, "w") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if weights_csv is not None and solution.weights is not None:
        with open(weights_csv, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(["asset", "weight"])
            for name, wt in zip(solution.names, solution.weights):
                w.writerow([name, repr(float(wt))])
    if hist_csv is not None and solution.portfolio_returns is not None:
        write_histogram_csv(risk_stats(solution.portfolio_returns, solution.alpha), hist_csv, comment)
