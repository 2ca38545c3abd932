import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import zero_default_params
from cmc_credit.errors import CurveTooShort, DataError, NoBracket
from cmc_credit.presets import itraxx_tranche_specs
from cmc_credit.pricing import (
    CdxTranche,
    RateCurve,
    conditional_value_at_risk,
    discounted_return,
    fair_spread,
    loss_fraction,
    risk_stats,
    scenario_returns,
    tranche_notional,
    value_at_risk,
    write_histogram_csv,
    write_stats_json,
)
from cmc_credit.simulation import ScenarioSet, simulate


def test_tranche_notional_piecewise():
    tr = CdxTranche(0.03, 0.06)
    assert tranche_notional(tr, 0.0) == 1.0
    assert tranche_notional(tr, 0.03) == 1.0
    assert tranche_notional(tr, 0.045) == pytest.approx(0.5)
    assert tranche_notional(tr, 0.06) == 0.0
    assert tranche_notional(tr, 0.5) == 0.0


def test_tranche_validation():
    with pytest.raises(ValueError):
        CdxTranche(0.1, 0.05)
    with pytest.raises(ValueError):
        CdxTranche(0.0, 0.1, recovery=1.5)
    assert CdxTranche.from_dict({"attach": 0, "detach": 0.1, "members": "all"}).members is None
    with pytest.raises(ValueError):
        CdxTranche.from_dict({"attach": 0, "detach": 0.1, "colour": 1})


def test_loss_fraction():
    assert loss_fraction(5, 125) == 0.04
    np.testing.assert_allclose(loss_fraction([0, 25], CdxTranche(0, 0.1, members=tuple(range(50)))), [0, 0.5])
    with pytest.raises(ValueError):
        loss_fraction(1, CdxTranche(0, 0.1))


def test_riskless_annuity_prices_to_zero():
    rates = np.array([0.03, 0.035, 0.04, 0.042, 0.05])
    curve = RateCurve.from_rates(rates)
    tr = CdxTranche(0.0, 0.1, spread=0.0, maturity=5, members=tuple(range(10)))
    r = discounted_return(tr, np.zeros(6), curve)
    assert abs(r) <= 1e-12


def test_full_recovery_is_riskless():
    curve = RateCurve.from_rates([0.02, 0.03, 0.04])
    tr = CdxTranche(0.0, 0.05, maturity=3, recovery=1.0)
    paths = np.array([[0, 0, 0, 0], [0, 3, 5, 9], [0, 10, 10, 10]])
    np.testing.assert_allclose(discounted_return(tr, paths, curve, n_members=10), 0.0, atol=1e-12)


def test_hand_computed_path():
    curve = RateCurve(np.array([0.05, 0.05]), np.array([0.95, 0.9]))
    tr = CdxTranche(0.0, 0.5, spread=0.1, maturity=2, recovery=0.4, upfront=0.02)
    # 10 names: loss 0.2 after year 1 -> N = 0.6, loss 0.3 after year 2 -> N = 0.4
    r = discounted_return(tr, np.array([0, 2, 3]), curve, n_members=10)
    expect = (-1 + 0.02
              + 0.95 * (0.6 * 0.15 + 0.4 * 0.4 * 0.05)
              + 0.9 * (0.4 * 0.15 + 0.4 * 0.6 * 0.05)
              + 0.9 * (0.4 + 0.4 * 0.6))
    assert r == pytest.approx(expect, abs=1e-14)


def test_curve_and_path_length_checks():
    tr = CdxTranche(0, 0.1, maturity=5, members=(0,))
    with pytest.raises(CurveTooShort):
        discounted_return(tr, np.zeros(6), RateCurve.flat(0.03, 3))
    with pytest.raises(DataError):
        discounted_return(tr, np.zeros(4), RateCurve.flat(0.03, 5))
    with pytest.raises(ValueError):
        RateCurve([0.01, 0.02], [0.9, 0.95])


def _zero_default_set(n_scen=50):
    params = zero_default_params()
    return simulate(params, (np.array([1, 2, 1, 2]), np.ones(4, int)), 7, n_scen, seed=1)


def test_fair_spread_zero_without_defaults():
    sc = _zero_default_set()
    curve = RateCurve.from_rates(np.full(7, 0.04))
    for a, b in [(0, 0.03), (0.03, 0.06), (0.12, 0.22), (0.5, 1.0)]:
        s = fair_spread(CdxTranche(a, b, maturity=7), sc, curve)
        assert abs(s) <= 1e-8


def test_fair_spread_zeroes_mean(synth):
    sc = simulate(synth, (np.arange(30) % 3 + 1, np.arange(30) % 2 + 1), 5, 400, seed=6)
    curve = RateCurve.flat(0.04, 5, 0.05)
    tr = CdxTranche(0.05, 0.15, maturity=5)
    s = fair_spread(tr, sc, curve, tol=1e-12)
    assert abs(np.mean(scenario_returns(tr.with_spread(s), sc, curve).values)) <= 1e-10


def test_fair_spread_no_bracket():
    paths = np.zeros((3, 3, 2), np.uint8)
    paths[:, 0] = 1
    paths[:, 1:] = 2  # everyone defaults in year one
    sc = ScenarioSet(paths, np.ones(2, int), 1, 0)
    with pytest.raises(NoBracket):
        fair_spread(CdxTranche(0, 0.5, maturity=2), sc, RateCurve.flat(0.03, 2))


def test_itraxx_specs():
    specs = itraxx_tranche_specs()
    assert len(specs) == 15
    assert {s["name"] for s in specs} >= {"10Y/mezzanine", "5Y/equity"}
    assert all(CdxTranche.from_dict(s) for s in specs)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.sampled_from([0.5, 0.8, 0.9, 0.95, 0.99]))
def test_cvar_matches_ru_scan(seed, alpha):
    rng = np.random.default_rng(seed)
    x = rng.standard_t(3, size=int(rng.integers(1, 300)))
    assert conditional_value_at_risk(x, alpha) == pytest.approx(oracles.ru_scan_cvar(x, alpha), abs=1e-10)
    assert conditional_value_at_risk(x, alpha) >= value_at_risk(x, alpha) - 1e-12


def test_value_at_risk_left_closed():
    x = np.arange(1, 11, dtype=float)
    assert value_at_risk(x, 0.9) == 9.0
    assert value_at_risk(x, 0.91) == 10.0
    assert value_at_risk(x, 0.3) == 3.0


def test_cvar_translation_and_homogeneity(rng):
    x = rng.normal(size=500)
    for a in (0.9, 0.99):
        base = conditional_value_at_risk(x, a)
        assert conditional_value_at_risk(x + 2.5, a) == pytest.approx(base + 2.5, abs=1e-8)
        assert conditional_value_at_risk(3.0 * x, a) == pytest.approx(3.0 * base, abs=1e-8)


def test_risk_stats_and_outputs(tmp_path, rng):
    returns = rng.normal(0.01, 0.05, 1000)
    stats = risk_stats(returns, 0.9, bins=20)
    assert stats.counts.sum() == 1000 and len(stats.bin_edges) == 21
    assert stats.mean == pytest.approx(-returns.mean())
    write_histogram_csv(stats, tmp_path / "h.csv", comment="seed=1")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "# seed=1" and lines[1] == "bin_left,bin_right,count"
    assert sum(int(r[2]) for r in csv.reader(lines[2:])) == 1000
    write_stats_json({"0.9": stats.to_dict()}, tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text())["0.9"]["CVaR"] == stats.cvar


def test_reference_fair_spreads_are_ordered_by_seniority():
    from cmc_credit.presets import ITRAXX_REFERENCE_FAIR_SPREADS

    assert ITRAXX_REFERENCE_FAIR_SPREADS[5][1:] == (0.0159, 0.0129, 0.0126, 0.0126)
    for row in ITRAXX_REFERENCE_FAIR_SPREADS.values():
        assert all(a >= b for a, b in zip(row[1:], row[2:]))
