"""
Choosing a tranche portfolio by CVaR
====================================

Uses the scenario returns of the 15 tranches to find the weights with the
smallest CVaR for a required mean return, at two confidence levels, and
traces the efficient frontier.
"""

import numpy as np

from cmc_credit.portfolio import CvarProblem, attainable_mean_range, efficient_frontier, optimize_portfolio
from cmc_credit.presets import itraxx_portfolio, itraxx_tranche_specs, sp6_model_params
from cmc_credit.pricing import CdxTranche, RateCurve, risk_stats, scenario_returns
from cmc_credit.simulation import simulate

scen = simulate(sp6_model_params(), itraxx_portfolio(), 10, 10_000, seed=2008)
curve = RateCurve.flat(0.046, 10, discount_rate=0.05)
tranches = [CdxTranche.from_dict(d) for d in itraxx_tranche_specs()]
returns = np.column_stack([scenario_returns(t, scen, curve).values for t in tranches])
names = tuple(t.name for t in tranches)

problem = CvarProblem(returns, target_mean=0.3133, alpha=0.9, lower=-0.5, upper=0.5, names=names)
mezz = names.index("10Y/mezzanine")
for alpha in (0.9, 0.99):
    sol = optimize_portfolio(problem.with_alpha(alpha))
    ref = risk_stats(returns[:, mezz], alpha)
    print(f"alpha={alpha}: CVaR {sol.cvar:.4f} (10Y mezzanine alone {ref.cvar:.4f}), "
          f"mean {sol.mean:.4f}, solver {sol.method}")
    for name, w in zip(names, sol.weights):
        if abs(w) > 1e-6:
            print(f"    {name:18s} {w:+.3f}")

lo, hi = attainable_mean_range(problem)
grid = np.linspace(lo, hi, 9)[1:-1]
print("frontier (alpha=0.9):")
for pt in efficient_frontier(problem, grid):
    print(f"  mu={pt.target_mean:+.3f}  CVaR={pt.cvar:+.4f}  {pt.status}")
