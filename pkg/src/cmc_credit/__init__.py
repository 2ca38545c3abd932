"""Coupled Markov chain model of joint credit-rating migrations.

Submodules: ``model`` (parameters, exact laws, one-step sampling),
``estimation`` (likelihood and differential-evolution fit), ``simulation``
(scenario generation and files), ``pricing`` (tranche cashflows, fair
spreads, VaR/CVaR), ``portfolio`` (mean-CVaR linear programs), ``data``
(ingest and run configuration) and ``cli``.
"""

from .errors import CMCError, ConfigError, DataError
from .model import (
    CouplingMatrix,
    FirmState,
    ModelParams,
    RatingScale,
    TendencyDistribution,
    TransitionMatrix,
    joint_step_probability,
    load_params,
    mixture_default_probability,
    save_params,
    step_joint,
    validate,
)
from .estimation import (
    EstimationResult,
    OptimizerConfig,
    RatingPanel,
    count_transitions,
    estimate_parameters,
    log_likelihood,
)
from .simulation import ScenarioSet, default_counts, simulate
from .pricing import CdxTranche, RateCurve, fair_spread, risk_stats, scenario_returns
from .portfolio import CvarProblem, efficient_frontier, optimize_portfolio
from .data import ingest, export_panel, load_config

__version__ = "0.1.0"
