"""Maximum likelihood estimation of the coupling matrix and tendency law.

The transition matrix ``P`` is taken as given (it can be obtained by simple
counting, see :func:`estimate_transition_matrix`).  Conditional on the
tendency vector of a period, firms move independently, so the likelihood of
a period only depends on the group counts ``I[t, s, m1, m2]``.  Dropping the
constant ``prod p[m1, m2] ** I`` gives the modified log-likelihood::

    L' = sum_t log sum_chi P_chi(chi) prod_{s, m1, m2} f'(I[t, s, m1, m2])

with one of three group factors depending on whether the move is
non-deteriorating and on ``chi_m1``.  It is maximised by differential
evolution over ``Q`` and raw tendency weights; every candidate's weights are
projected onto the marginal constraints by :func:`repair_tendency`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, DegenerateTendency, EmptyRow, Infeasible
from .model import (
    CouplingMatrix,
    ModelParams,
    TendencyDistribution,
    TransitionMatrix,
    tendency_bits,
    tendency_probabilities,
)
from .rng import substream

NEG_INF = -math.inf


@dataclass(frozen=True, eq=False)
class RatingPanel:
    """N x T panel of rating classes.

    ``missing[n, t]`` marks unobserved firm-years; the rating stored there is
    meaningless.  ``m`` is the number of non-default classes.
    """

    ratings: np.ndarray
    sectors: np.ndarray
    m: int
    missing: Optional[np.ndarray] = None
    firm_ids: Optional[tuple] = None
    periods: Optional[tuple] = None

    def __post_init__(self):
        r = np.array(self.ratings, dtype=np.int64, copy=True)
        if r.ndim != 2:
            raise DataError(f"ratings must be 2-D, got shape {r.shape}")
        miss = np.zeros(r.shape, bool) if self.missing is None else np.array(self.missing, bool, copy=True)
        sec = np.array(self.sectors, dtype=np.int64, copy=True)
        for a in (r, miss, sec):
            a.setflags(write=False)
        object.__setattr__(self, "ratings", r)
        object.__setattr__(self, "missing", miss)
        object.__setattr__(self, "sectors", sec)
        check_panel(self)

    @property
    def n_firms(self) -> int:
        return self.ratings.shape[0]

    @property
    def n_periods(self) -> int:
        return self.ratings.shape[1]


def check_panel(panel: RatingPanel) -> None:
    r, miss = panel.ratings, panel.missing
    if miss.shape != r.shape:
        raise DataError("missing mask shape differs from ratings")
    if panel.sectors.shape != (r.shape[0],):
        raise DataError("need one sector label per firm")
    if np.any(panel.sectors < 1):
        raise DataError("sector labels start at 1")
    obs = ~miss
    bad = obs & ((r < 1) | (r > panel.m + 1))
    if np.any(bad):
        n, t = map(int, np.argwhere(bad)[0])
        raise DataError(f"firm {n}, period {t}: class {r[n, t]} outside 1..{panel.m + 1}")
    dflt = panel.m + 1
    seen_default = np.maximum.accumulate(obs & (r == dflt), axis=1)
    revived = obs & seen_default & (r != dflt)
    if np.any(revived):
        n, t = map(int, np.argwhere(revived)[0])
        raise DataError(f"firm {n}, period {t}: rated {r[n, t]} after default")


@dataclass(frozen=True, eq=False)
class TransitionCounts:
    """``counts[t, s, m1, m2]`` = firms of sector s+1 moving m1+1 -> m2+1 between columns t-1 and t.

    Slice ``t = 0`` is always zero.
    """

    counts: np.ndarray

    @property
    def m(self) -> int:
        return self.counts.shape[2]

    @property
    def n_sectors(self) -> int:
        return self.counts.shape[1]

    @property
    def aggregate(self) -> np.ndarray:
        return self.counts.sum(axis=(0, 1))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def up_down(self):
        """Non-deteriorating and deteriorating counts, each of shape (T, S, M)."""
        c = self.counts
        m = self.m
        keep = np.tril(np.ones((m, m + 1), dtype=bool))  # m2 <= m1
        up = (c * keep).sum(axis=3)
        down = (c * ~keep).sum(axis=3)
        return up, down


@dataclass(frozen=True)
class OptimizerConfig:
    population: int = 40
    max_iter: int = 1000
    restarts: int = 2
    seed: int = 0
    penalty: float = 1e6
    tol: float = 1e-7
    mutation: tuple = (0.5, 1.0)
    crossover: float = 0.9

    def __post_init__(self):
        if self.population < 5 or self.max_iter < 1 or self.restarts < 1:
            raise ValueError("population >= 5, max_iter >= 1 and restarts >= 1 required")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class EstimationResult:
    params: ModelParams
    loglik: float
    diagnostics: dict = field(default_factory=dict)
    history: list = field(default_factory=list, repr=False)  # best L' per generation, one list per restart

    def to_dict(self) -> dict:
        return {
            "P": self.params.p.p.tolist(),
            "Q": self.params.q.q.tolist(),
            "chi": self.params.chi.mass.tolist(),
            "loglik": self.loglik if math.isfinite(self.loglik) else None,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, path, extra: Optional[dict] = None) -> None:
        d = self.to_dict()
        if extra:
            d.update(extra)
        with open(path, "w") as fh:
            json.dump(d, fh, indent=1, sort_keys=True)
            fh.write("\n")


def free_parameter_count(m: int, n_sectors: int) -> int:
    """Number of free parameters: the coupling matrix plus the tendency law after its constraints."""
    return m * n_sectors + 2 ** m - (m + 1)


def count_transitions(panel: RatingPanel, n_sectors: Optional[int] = None) -> TransitionCounts:
    """Tally ``I[t, s, m1, m2]``; transitions touching a missing cell are skipped."""
    m = panel.m
    s_max = int(panel.sectors.max()) if panel.n_firms else 1
    n_sectors = n_sectors or s_max
    if s_max > n_sectors:
        raise DataError(f"sector label {s_max} exceeds S={n_sectors}")
    t_len = panel.n_periods
    counts = np.zeros((t_len, n_sectors, m, m + 1), dtype=np.int64)
    if t_len < 2:
        return TransitionCounts(counts)
    r, obs = panel.ratings, ~panel.missing
    prev, cur = r[:, :-1], r[:, 1:]
    ok = obs[:, :-1] & obs[:, 1:] & (prev <= m)
    n_idx, t_idx = np.nonzero(ok)
    np.add.at(
        counts,
        (t_idx + 1, panel.sectors[n_idx] - 1, prev[n_idx, t_idx] - 1, cur[n_idx, t_idx] - 1),
        1,
    )
    return TransitionCounts(counts)


def estimate_transition_matrix(counts: TransitionCounts) -> TransitionMatrix:
    """Row-wise relative frequencies of the pooled transitions."""
    agg = counts.aggregate.astype(float)
    totals = agg.sum(axis=1)
    empty = np.nonzero(totals == 0)[0]
    if len(empty):
        raise EmptyRow(f"no observed transitions out of class(es) {[int(i) + 1 for i in empty]}; coarsen the clubbing")
    return TransitionMatrix(agg / totals[:, None])


def group_factor(counts, t, s, m1, m2, chi_bit, q, p) -> float:
    """Log of the modified group factor for one (t, s, m1, m2) cell.

    Indices are 1-based classes and sectors.  ``counts`` may be a
    :class:`TransitionCounts` or the integer group size itself.
    """
    i = int(counts) if np.isscalar(counts) else int(counts.counts[t, s - 1, m1 - 1, m2 - 1])
    if i == 0:
        return 0.0
    qv = float(q.q[m1 - 1, s - 1] if isinstance(q, CouplingMatrix) else q[m1 - 1][s - 1])
    pp = float(tendency_probabilities(p)[m1 - 1])
    if m1 >= m2 and chi_bit == 1:
        if pp <= 0:
            raise DegenerateTendency(f"class {m1}: p_plus = 0")
        val = (qv * (pp - 1.0) + 1.0) / pp
    elif m1 < m2 and chi_bit == 0:
        pm = 1.0 - pp
        if pm <= 0:
            raise DegenerateTendency(f"class {m1}: p_minus = 0")
        val = (qv * (pm - 1.0) + 1.0) / pm
    else:
        val = qv
    if val <= 0:
        return NEG_INF
    return i * math.log(val)


def _xlog(count, logval):
    with np.errstate(invalid="ignore"):
        return np.where(count > 0, count * logval, 0.0)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _check_degenerate(up, down, p_plus):
    for k in range(len(p_plus)):
        if p_plus[k] <= 0 and up[..., k].sum() > 0:
            raise DegenerateTendency(f"class {k + 1}: non-deteriorating moves observed but p_plus = 0")
        if p_plus[k] >= 1 and down[..., k].sum() > 0:
            raise DegenerateTendency(f"class {k + 1}: deteriorating moves observed but p_minus = 0")


def _loglik_batch(up, down, p_plus, q, chi_mass, bits) -> np.ndarray:
    """Vectorised L' for B candidates.

    up, down : (T, S, M) counts;  q : (B, M, S);  chi_mass : (B, 2**M).
    """
    pp = p_plus[None, None, :]
    pm = 1.0 - pp
    qs = np.transpose(q, (0, 2, 1))  # (B, S, M)
    with np.errstate(divide="ignore", invalid="ignore"):
        a_up = _log((qs * (pp - 1.0) + 1.0) / pp)
        a_dn = _log((qs * (pm - 1.0) + 1.0) / pm)
    lq = _log(qs)
    up_ = up[None]
    dn_ = down[None]
    a_up, a_dn, lq = a_up[:, None], a_dn[:, None], lq[:, None]
    tend1 = (_xlog(up_, a_up) + _xlog(dn_, lq)).sum(axis=2)  # (B, T, M)
    tend0 = (_xlog(dn_, a_dn) + _xlog(up_, lq)).sum(axis=2)
    per = np.where(bits[None, None], tend1[:, :, None, :], tend0[:, :, None, :]).sum(axis=-1)  # (B, T, C)
    terms = _log(chi_mass)[:, None, :] + per
    top = terms.max(axis=-1, keepdims=True)
    finite = np.isfinite(top)
    shift = np.where(finite, top, 0.0)
    with np.errstate(divide="ignore"):
        lse = np.log(np.exp(terms - shift).sum(axis=-1)) + shift[..., 0]
    lse = np.where(finite[..., 0], lse, NEG_INF)
    return lse.sum(axis=1)


def log_likelihood(data, params: ModelParams) -> float:
    """Modified log-likelihood L' of a panel (or precomputed counts)."""
    counts = data if isinstance(data, TransitionCounts) else count_transitions(data, params.n_sectors)
    if counts.m != params.m:
        raise DataError(f"data has M={counts.m}, params have M={params.m}")
    up, down = counts.up_down()
    p_plus = tendency_probabilities(params.p)
    _check_degenerate(up, down, p_plus)
    val = _loglik_batch(up, down, p_plus, params.q.q[None], params.chi.mass[None], tendency_bits(params.m))
    return float(val[0])


def _residuals(mass, p_plus, bits):
    return np.maximum(np.abs(mass.sum(axis=-1) - 1.0), np.abs(mass @ bits - p_plus).max(axis=-1))


def _ipf(y, p_plus, bits, max_sweeps, tight):
    """Iterative proportional fitting on a batch (B, 2**M); returns (y, ok)."""
    y = y.copy()
    ok = np.ones(len(y), bool)
    for _ in range(max_sweeps):
        for i in range(len(p_plus)):
            b = bits[:, i]
            s1 = y[:, b].sum(axis=1)
            s0 = y[:, ~b].sum(axis=1)
            ok &= ~((s1 <= 0) & (p_plus[i] > 0)) & ~((s0 <= 0) & (p_plus[i] < 1))
            with np.errstate(divide="ignore", invalid="ignore"):
                f1 = np.where(s1 > 0, p_plus[i] / s1, 0.0)
                f0 = np.where(s0 > 0, (1.0 - p_plus[i]) / s0, 0.0)
            y[:, b] *= f1[:, None]
            y[:, ~b] *= f0[:, None]
        if np.all(_residuals(y[ok], p_plus, bits) <= tight):
            break
    return y, ok


def repair_batch(raw, p_plus, tol=1e-8, max_sweeps=500):
    """Project each row of ``raw`` onto the tendency constraints.

    Rows already within ``tol`` are only clipped.  Returns (mass, residual).
    """
    p_plus = np.asarray(p_plus, dtype=float)
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    if not np.all(np.isfinite(raw)) or not np.all(np.isfinite(p_plus)):
        raise Infeasible("non-finite tendency weights or probabilities")
    if np.any((p_plus < 0) | (p_plus > 1)):
        raise Infeasible("p_plus outside [0,1]")
    m = len(p_plus)
    bits = tendency_bits(m)
    x = np.clip(raw, 0.0, None)
    res = _residuals(x, p_plus, bits)
    todo = res > tol
    if np.any(todo):
        y, ok = _ipf(x[todo], p_plus, bits, max_sweeps, 1e-14)
        r = _residuals(y, p_plus, bits)
        bad = ~ok | ~(r <= tol)
        if np.any(bad):
            # zeros in the support can make the constraints unreachable; blend in a full-support law
            indep = TendencyDistribution.independent(p_plus).mass
            z = y[bad]
            z = z / np.where(z.sum(axis=1, keepdims=True) > 0, z.sum(axis=1, keepdims=True), 1.0)
            z, ok2 = _ipf(0.999 * z + 0.001 * indep, p_plus, bits, max_sweeps, 1e-14)
            r2 = _residuals(z, p_plus, bits)
            z[~(ok2 & (r2 <= tol))] = indep
            y[bad] = z
        x[todo] = y
        res = _residuals(x, p_plus, bits)
    return x, res


def repair_tendency(mass, p_plus, tol: float = 1e-12, max_sweeps: int = 500) -> TendencyDistribution:
    """Nearest (in the IPF sense) tendency law with the required marginals.

    The default tolerance is tighter than the one used inside the optimizer
    so the result passes the model's unit-mass check.
    """
    x, res = repair_batch(mass, p_plus, tol, max_sweeps)
    if not res[0] <= tol:
        raise Infeasible(f"tendency constraints not reachable (residual {res[0]:.3g})")
    return TendencyDistribution(x[0])


def _decode(x, m, s):
    return x[:, : m * s].reshape(-1, m, s), x[:, m * s:]


def estimate_parameters(
    panel,
    p: TransitionMatrix,
    config: OptimizerConfig = OptimizerConfig(),
    n_sectors: Optional[int] = None,
) -> EstimationResult:
    """Fit (Q, P_chi) by differential evolution with P held fixed.

    DE/current-to-best/1/bin with per-generation dithered mutation factor and
    greedy selection.  Tendency weights are repaired and written back into
    the population.  Each restart uses the random substream (seed, restart).
    """
    counts = panel if isinstance(panel, TransitionCounts) else count_transitions(panel, n_sectors)
    m = p.m
    if counts.m != m:
        raise DataError(f"data has M={counts.m}, P has M={m}")
    s = counts.n_sectors
    up, down = counts.up_down()
    p_plus = tendency_probabilities(p)
    _check_degenerate(up, down, p_plus)
    bits = tendency_bits(m)
    dim = m * s + 2 ** m
    npop = config.population

    def evaluate(x):
        q, raw = _decode(x, m, s)
        chi, res = repair_batch(raw, p_plus)
        x[:, m * s:] = chi
        f = _loglik_batch(up, down, p_plus, q, chi, bits)
        return f - config.penalty * np.where(res > 1e-8, res, 0.0)

    best_x, best_f = None, NEG_INF
    histories = []
    iterations = 0
    evaluations = 0
    converged_all = True
    for restart in range(config.restarts):
        rng = substream(config.seed, restart)
        pop = rng.random((npop, dim))
        pop[0, : m * s] = 0.5
        pop[0, m * s:] = TendencyDistribution.independent(p_plus).mass
        pop[1, m * s:] = TendencyDistribution.comonotone(p_plus).mass
        fit = evaluate(pop)
        evaluations += npop
        history = [float(fit.max())]
        converged = False
        for gen in range(config.max_iter):
            iterations += 1
            ib = int(np.argmax(fit))
            f_mut = rng.uniform(*config.mutation)
            r = np.array([rng.choice(npop - 1, 2, replace=False) for _ in range(npop)])
            r = r + (r >= np.arange(npop)[:, None])  # skip self
            mutant = pop + f_mut * (pop[ib] - pop) + f_mut * (pop[r[:, 0]] - pop[r[:, 1]])
            cross = rng.random((npop, dim)) < config.crossover
            cross[np.arange(npop), rng.integers(0, dim, npop)] = True
            trial = np.clip(np.where(cross, mutant, pop), 0.0, 1.0)
            tfit = evaluate(trial)
            evaluations += npop
            better = tfit >= fit
            pop[better] = trial[better]
            fit[better] = tfit[better]
            history.append(float(fit.max()))
            fin = fit[np.isfinite(fit)]
            if len(fin) == npop and fin.max() - fin.min() <= config.tol:
                converged = True
                break
        converged_all &= converged
        histories.append(history)
        ib = int(np.argmax(fit))
        if best_x is None or fit[ib] > best_f:
            best_x, best_f = pop[ib].copy(), float(fit[ib])

    q_best = best_x[: m * s].reshape(m, s)
    chi_best = repair_tendency(best_x[m * s:], p_plus)
    params = ModelParams(p, CouplingMatrix(q_best), chi_best)
    loglik = log_likelihood(counts, params)
    cell = (up + down).sum(axis=0).T  # (M, S)
    unidentified = [[int(i) + 1, int(j) + 1] for i, j in zip(*np.nonzero(cell == 0))]
    bits_res = float(_residuals(chi_best.mass[None], p_plus, bits)[0])
    diagnostics = {
        "iterations": iterations,
        "restarts": config.restarts,
        "evaluations": evaluations,
        "converged": bool(converged_all),
        "budget_exhausted": not bool(converged_all),
        "constraint_residual": bits_res,
        "cell_transitions": cell.astype(int).tolist(),
        "unidentified": unidentified,
        "best_history": [h[-1] for h in histories],
        "free_parameters": free_parameter_count(m, s),
        "seed": config.seed,
    }
    return EstimationResult(params, loglik, diagnostics, histories)
