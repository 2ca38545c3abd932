"""Coupled Markov chain model of joint rating transitions.

Classes are numbered ``1..M+1``; class 1 is the safest and ``M+1`` is the
absorbing default state.  Arrays are stored 0-based, so class ``i`` lives in
row ``i - 1`` of ``P`` and ``Q``.

One period of the joint law, for every firm ``n`` currently in class ``m``
and sector ``s``::

    chi    ~ P_chi                          (one draw shared by all firms)
    delta  ~ Bernoulli(q[m, s])             (per firm)
    xi     ~ P[m, :]                        (per firm, idiosyncratic)
    eta    ~ P[m, :] conditioned on the tendency chi_m
    X_new  = xi if delta else eta

``chi_m = 1`` means the systematic move does not deteriorate the rating
(new class index <= old class index).  Tendency outcomes are indexed by the
integer whose bit ``i - 1`` is ``chi_i``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateTendency, InvalidParams, TooLarge
from .rng import as_generator

MAX_CLASSES = 16
ROW_SUM_TOL = 1e-12
MASS_TOL = 1e-10
MARGINAL_TOL = 1e-8


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def tendency_bits(m: int) -> np.ndarray:
    """Boolean table of shape (2**m, m); row c holds chi_1..chi_m of outcome c."""
    c = np.arange(2 ** m)[:, None]
    return ((c >> np.arange(m)[None, :]) & 1).astype(bool)


@dataclass(frozen=True)
class RatingScale:
    m_nondefault: int
    labels: Optional[tuple] = None

    @property
    def default_class(self) -> int:
        return self.m_nondefault + 1

    @property
    def n_classes(self) -> int:
        return self.m_nondefault + 1


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Yearly transition probabilities from the M non-default classes.

    ``p`` has shape (M, M+1); the default row is implicit.
    """

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p))

    @property
    def m(self) -> int:
        return self.p.shape[0]

    @property
    def p_plus(self) -> np.ndarray:
        return tendency_probabilities(self)

    @property
    def p_minus(self) -> np.ndarray:
        return 1.0 - self.p_plus

    @property
    def default_probabilities(self) -> np.ndarray:
        return self.p[:, -1]


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """``q[m, s]``: probability that a firm in class m+1, sector s+1 moves idiosyncratically."""

    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _frozen(self.q))

    @property
    def shape(self):
        return self.q.shape


@dataclass(frozen=True, eq=False)
class TendencyDistribution:
    """Dense probability mass over the 2**M tendency outcomes."""

    mass: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mass", _frozen(self.mass))

    @property
    def m(self) -> int:
        return int(round(np.log2(len(self.mass))))

    def marginals(self) -> np.ndarray:
        """P(chi_i = 1) for every class i."""
        return self.mass @ tendency_bits(self.m)

    @property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(self.mass)
        return c / c[-1]

    @classmethod
    def independent(cls, p_plus) -> "TendencyDistribution":
        """Product of independent Bernoulli(p_plus[i]) tendencies."""
        p_plus = np.asarray(p_plus, dtype=float)
        bits = tendency_bits(len(p_plus))
        mass = np.prod(np.where(bits, p_plus, 1.0 - p_plus), axis=1)
        return cls(mass)

    @classmethod
    def comonotone(cls, p_plus) -> "TendencyDistribution":
        """Maximally dependent tendencies: all driven by one uniform draw."""
        p_plus = np.asarray(p_plus, dtype=float)
        m = len(p_plus)
        cuts = np.unique(np.concatenate([[0.0, 1.0], p_plus]))
        mass = np.zeros(2 ** m)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (lo + hi)
            idx = int(np.sum((mid < p_plus) << np.arange(m)))
            mass[idx] += hi - lo
        return cls(mass)


@dataclass(frozen=True, eq=False)
class ModelParams:
    p: TransitionMatrix
    q: CouplingMatrix
    chi: TendencyDistribution
    labels: Optional[tuple] = None

    @property
    def m(self) -> int:
        return self.p.m

    @property
    def n_sectors(self) -> int:
        return self.q.q.shape[1]

    @property
    def scale(self) -> RatingScale:
        return RatingScale(self.m, self.labels)

    @property
    def default_class(self) -> int:
        return self.m + 1

    @classmethod
    def from_arrays(cls, p, q, chi, labels=None) -> "ModelParams":
        return cls(TransitionMatrix(p), CouplingMatrix(q), TendencyDistribution(chi), labels)


@dataclass(frozen=True)
class FirmState:
    rating: int
    sector: int


def state_arrays(states):
    """Split a sequence of FirmState (or a (ratings, sectors) pair) into int arrays."""
    if isinstance(states, tuple) and len(states) == 2 and not isinstance(states[0], FirmState):
        ratings, sectors = states
        return np.asarray(ratings, dtype=np.int64), np.asarray(sectors, dtype=np.int64)
    ratings = np.array([s.rating for s in states], dtype=np.int64)
    sectors = np.array([s.sector for s in states], dtype=np.int64)
    return ratings, sectors


def validate(params: ModelParams, marginal_tol: float = MARGINAL_TOL) -> list:
    """Return a list of human-readable invariant violations (empty when valid)."""
    out = []
    p = params.p.p
    q = params.q.q
    mass = params.chi.mass
    if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] != p.shape[0] + 1:
        return [f"P: shape {p.shape} is not M x (M+1) with M >= 1"]
    m = p.shape[0]
    if m > MAX_CLASSES:
        out.append(f"M={m} exceeds the dense tendency cap {MAX_CLASSES}")
    if not np.all(np.isfinite(p)):
        out.append("P: non-finite entries")
    for i, j in zip(*np.nonzero((p < 0) | (p > 1))):
        out.append(f"P[{i + 1},{j + 1}]={p[i, j]!r} outside [0,1]")
    for i, s in enumerate(p.sum(axis=1)):
        if abs(s - 1.0) > ROW_SUM_TOL:
            out.append(f"P row {i + 1}: row sum {s!r} != 1")
    if q.ndim != 2 or q.shape[0] != m or q.shape[1] < 1:
        out.append(f"Q: shape {q.shape} does not match M={m} x S")
    else:
        for i, s in zip(*np.nonzero(~((q >= 0) & (q <= 1)))):
            out.append(f"Q[{i + 1},{s + 1}]={q[i, s]!r} outside [0,1]")
    if mass.shape != (2 ** m,):
        out.append(f"chi: length {mass.shape} != 2^M = {2 ** m}")
        return out
    neg = np.nonzero(~(mass >= 0))[0]
    for c in neg:
        out.append(f"chi[{c}]={mass[c]!r} is negative")
    total = mass.sum()
    if not abs(total - 1.0) <= MASS_TOL:
        out.append(f"chi: total mass {total!r} != 1")
    if len(neg) == 0:
        marg = params.chi.marginals()
        target = tendency_probabilities(params.p)
        for i in range(m):
            if not abs(marg[i] - target[i]) <= marginal_tol:
                out.append(
                    f"chi: marginal P(chi_{i + 1}=1)={marg[i]!r} != p_plus[{i + 1}]={target[i]!r}"
                )
    return out


def require_valid(params: ModelParams, marginal_tol: float = MARGINAL_TOL) -> ModelParams:
    problems = validate(params, marginal_tol)
    if problems:
        raise InvalidParams(problems)
    return params


def tendency_probabilities(p) -> np.ndarray:
    """Non-deteriorating probability p_plus[i] = sum_{j<=i} p[i, j]."""
    p = p.p if isinstance(p, TransitionMatrix) else np.asarray(p, dtype=float)
    m = p.shape[0]
    return np.cumsum(p, axis=1)[np.arange(m), np.arange(m)]


def conditional_magnitude(p, from_class: int, tendency: int) -> np.ndarray:
    """Law of the systematic component given the tendency of its class.

    Returns a vector over classes ``1..M+1`` (index 0 is class 1).
    """
    p = p.p if isinstance(p, TransitionMatrix) else np.asarray(p, dtype=float)
    i = from_class
    row = p[i - 1]
    p_plus = row[:i].sum()
    out = np.zeros_like(row)
    if tendency:
        if p_plus <= 0:
            raise DegenerateTendency(f"class {i}: P(chi=1) = 0")
        out[:i] = row[:i] / p_plus
    else:
        p_minus = row[i:].sum()
        if p_plus >= 1 or p_minus <= 0:
            raise DegenerateTendency(f"class {i}: P(chi=0) = 0")
        out[i:] = row[i:] / p_minus
    return out


def _chi_vector(chi_bar, m):
    if isinstance(chi_bar, (int, np.integer)):
        return [(int(chi_bar) >> k) & 1 for k in range(m)]
    chi_bar = list(chi_bar)
    if len(chi_bar) != m:
        raise ValueError(f"tendency vector has length {len(chi_bar)}, expected {m}")
    return chi_bar


def mixture_default_probability(params: ModelParams, state: FirmState, chi_bar) -> float:
    """P(firm defaults next period | chi) in the Bernoulli-mixture view."""
    m = state.rating
    if m == params.default_class:
        return 1.0
    chi = _chi_vector(chi_bar, params.m)
    pd = params.p.p[m - 1, -1]
    q = params.q.q[m - 1, state.sector - 1]
    if chi[m - 1]:
        return float(pd * q)
    p_minus = params.p.p_minus[m - 1]
    if p_minus <= 0:
        raise DegenerateTendency(f"class {m}: P(chi=0) = 0")
    return float(pd * q + (1.0 - q) * pd / p_minus)


def _sampling_tables(params: ModelParams):
    p = params.p.p
    cum = np.cumsum(p, axis=1)
    cum = cum / cum[:, -1:]
    return cum, params.chi.cdf


def tendency_index(params: ModelParams, u, tables=None) -> np.ndarray:
    """Tendency outcome (bit i-1 holds chi_i) drawn by inverse CDF from uniforms ``u``."""
    chi_cdf = tables[1] if tables is not None else params.chi.cdf
    return np.searchsorted(chi_cdf, u, side="right")


def apply_uniforms(params: ModelParams, ratings, sectors, u, tables=None) -> np.ndarray:
    """Deterministic one-period transition driven by uniforms.

    ``u`` has trailing length ``1 + 3N``: one uniform for the tendency vector,
    then N each for the switch, the idiosyncratic and the systematic draws.
    Leading dimensions of ``u`` and ``ratings`` broadcast (batches of
    independent scenarios).
    """
    m = params.m
    ratings = np.asarray(ratings, dtype=np.int64)
    sectors = np.asarray(sectors, dtype=np.int64)
    n = ratings.shape[-1]
    cum, chi_cdf = tables if tables is not None else _sampling_tables(params)
    u_chi = u[..., 0]
    u_delta = u[..., 1:1 + n]
    u_xi = u[..., 1 + n:1 + 2 * n]
    u_eta = u[..., 1 + 2 * n:1 + 3 * n]

    chi_idx = tendency_index(params, u_chi, (cum, chi_cdf))
    active = ratings <= m
    r0 = np.clip(ratings - 1, 0, m - 1)
    chi = (np.asarray(chi_idx)[..., None] >> r0) & 1

    delta = u_delta < params.q.q[r0, sectors - 1]
    rows = cum[r0]
    xi = np.minimum((rows <= u_xi[..., None]).sum(axis=-1) + 1, m + 1)

    pp = cum[r0, r0]
    up = chi == 1
    target = np.where(up, u_eta * pp, pp + u_eta * (1.0 - pp))
    eta = (rows <= target[..., None]).sum(axis=-1) + 1
    eta = np.where(up, np.minimum(eta, ratings), np.clip(eta, ratings + 1, m + 1))

    needs_eta = active & ~delta
    bad = needs_eta & ((up & (pp <= 0)) | (~up & (pp >= 1)))
    if np.any(bad):
        cls = int(np.broadcast_to(ratings, bad.shape)[bad][0])
        raise DegenerateTendency(f"class {cls}: sampled a tendency of probability zero")
    return np.where(active, np.where(delta, xi, eta), ratings)


def step_joint(params: ModelParams, states, rng, size: Optional[int] = None) -> np.ndarray:
    """Sample next-period classes for all firms jointly.

    With ``size`` given, returns ``size`` independent one-step draws as an
    array of shape (size, N).
    """
    ratings, sectors = state_arrays(states)
    gen = as_generator(rng)
    n = len(ratings)
    shape = (1 + 3 * n,) if size is None else (size, 1 + 3 * n)
    u = gen.random(shape)
    return apply_uniforms(params, ratings, sectors, u)


def joint_step_probability(params: ModelParams, states, outcomes) -> float:
    """Exact probability of a joint one-period outcome by full enumeration.

    Sums over every tendency vector and every switch vector; meant as a
    brute-force reference for small problems (M <= 6, N <= 12).
    """
    ratings, sectors = state_arrays(states)
    outcomes = np.asarray(outcomes, dtype=np.int64)
    m = params.m
    n = len(ratings)
    if m > 6 or n > 12:
        raise TooLarge(f"enumeration guard: M={m} (max 6), N={n} (max 12)")
    dflt = m + 1
    done = ratings == dflt
    if np.any(outcomes[done] != dflt):
        return 0.0
    live = np.nonzero(~done)[0]
    if len(live) == 0:
        return 1.0
    p = params.p.p
    deltas = np.array(list(itertools.product((0, 1), repeat=len(live))), dtype=bool)
    total = 0.0
    for c, w in enumerate(params.chi.mass):
        if w == 0:
            continue
        f1 = np.empty(len(live))
        f0 = np.empty(len(live))
        for k, idx in enumerate(live):
            i, j = ratings[idx], outcomes[idx]
            q = params.q.q[i - 1, sectors[idx] - 1]
            f1[k] = q * p[i - 1, j - 1]
            if q == 1.0:
                f0[k] = 0.0
            else:
                f0[k] = (1.0 - q) * conditional_magnitude(p, i, (c >> (i - 1)) & 1)[j - 1]
        total += w * np.prod(np.where(deltas, f1, f0), axis=1).sum()
    return float(total)


# -- serialization ---------------------------------------------------------

def params_to_dict(params: ModelParams) -> dict:
    d = {
        "M": params.m,
        "S": params.n_sectors,
        "P": params.p.p.tolist(),
        "Q": params.q.q.tolist(),
        "chi": params.chi.mass.tolist(),
    }
    if params.labels is not None:
        d["labels"] = list(params.labels)
    return d


def params_from_dict(d: dict, marginal_tol: float = MARGINAL_TOL) -> ModelParams:
    try:
        m, s = int(d["M"]), int(d["S"])
        params = ModelParams.from_arrays(d["P"], d["Q"], d["chi"], tuple(d["labels"]) if "labels" in d else None)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidParams([f"malformed parameter document: {exc!r}"]) from None
    problems = []
    if params.m != m:
        problems.append(f"M={m} disagrees with P ({params.m} rows)")
    if params.q.q.ndim != 2 or params.q.q.shape[1] != s:
        problems.append(f"S={s} disagrees with Q shape {params.q.q.shape}")
    problems += validate(params, marginal_tol)
    if problems:
        raise InvalidParams(problems)
    return params


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint(params: ModelParams) -> str:
    return hashlib.sha256(canonical_json(params_to_dict(params)).encode()).hexdigest()[:16]


def save_params(params: ModelParams, path, extra: Optional[dict] = None) -> None:
    """Write the parameter document; keys in ``extra`` are stored alongside and ignored on load."""
    d = params_to_dict(params)
    if extra:
        d.update(extra)
    with open(path, "w") as fh:
        json.dump(d, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_params(path, marginal_tol: float = MARGINAL_TOL) -> ModelParams:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            from .errors import MalformedFile
            raise MalformedFile(f"{path}: {exc.msg}", offset=exc.pos, line=exc.lineno) from None
    return params_from_dict(d, marginal_tol)
