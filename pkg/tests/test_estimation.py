import json
import math

import numpy as np
import pytest

import oracles
from cmc_credit.errors import DataError, DegenerateTendency, EmptyRow
from cmc_credit.estimation import (
    OptimizerConfig,
    RatingPanel,
    count_transitions,
    estimate_parameters,
    estimate_transition_matrix,
    free_parameter_count,
    group_factor,
    log_likelihood,
    repair_batch,
    repair_tendency,
)
from cmc_credit.model import CouplingMatrix, ModelParams, TendencyDistribution, tendency_bits
from cmc_credit.simulation import simulate, to_panel


def test_count_transitions_basic():
    panel = RatingPanel([[1, 1, 2], [2, 3, 3]], [1, 2], m=2)
    c = count_transitions(panel)
    assert c.total == 3  # the defaulted firm contributes nothing after default
    assert c.counts[0].sum() == 0
    assert c.counts[1, 0, 0, 0] == 1 and c.counts[2, 0, 0, 1] == 1
    assert c.counts[1, 1, 1, 2] == 1


def test_count_transitions_skips_gaps():
    miss = np.array([[False, True, False]])
    panel = RatingPanel([[1, 0, 2]], [1], m=2, missing=miss)
    assert count_transitions(panel).total == 0


def test_panel_rejects_revival():
    with pytest.raises(DataError):
        RatingPanel([[3, 1]], [1], m=2)


def test_estimate_transition_matrix_and_empty_row():
    panel = RatingPanel([[1, 1, 2], [1, 2, 3]], [1, 1], m=2)
    p = estimate_transition_matrix(count_transitions(panel))
    np.testing.assert_allclose(p.p[0], [1 / 3, 2 / 3, 0])
    np.testing.assert_allclose(p.p[1], [0, 0, 1])
    with pytest.raises(EmptyRow):
        estimate_transition_matrix(count_transitions(RatingPanel([[1, 1]], [1], m=2)))


def test_group_factor_cases():
    p = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3]])
    q = np.array([[0.4], [0.5]])
    # class 1 -> 1 with chi = 1: ((q (p+ - 1) + 1) / p+)^I
    assert group_factor(3, 1, 1, 1, 1, 1, q, p) == pytest.approx(3 * math.log((0.4 * (0.6 - 1) + 1) / 0.6))
    # class 2 -> 3 with chi = 0 uses p-
    pm = 0.3
    assert group_factor(2, 1, 1, 2, 3, 0, q, p) == pytest.approx(2 * math.log((0.5 * (pm - 1) + 1) / pm))
    # mismatched direction: q^I
    assert group_factor(2, 1, 1, 2, 1, 0, q, p) == pytest.approx(2 * math.log(0.5))
    assert group_factor(0, 1, 1, 2, 1, 0, q, p) == 0.0
    assert group_factor(1, 1, 1, 2, 1, 0, np.zeros((2, 1)), p) == -math.inf


def _small_instance(rng):
    m = int(rng.integers(1, 4))
    s = int(rng.integers(1, 3))
    params = oracles.random_params(rng, m, s)
    n = int(rng.integers(1, 5))
    t = int(rng.integers(2, 4))
    sc = simulate(params, (rng.integers(1, m + 1, n), rng.integers(1, s + 1, n)), t - 1, 1, int(rng.integers(1 << 30)))
    return params, sc


def test_likelihood_equals_path_probability(rng):
    for _ in range(25):
        params, sc = _small_instance(rng)
        panel = to_panel(sc)
        lhs = math.exp(log_likelihood(panel, params)) * oracles.transition_product(params, panel.ratings)
        rhs = oracles.path_probability(params, panel.ratings, sc.sectors)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_likelihood_by_group_factors(synth, rng):
    sc = simulate(synth, (rng.integers(1, 4, 6), rng.integers(1, 3, 6)), 3, 1, 5)
    counts = count_transitions(to_panel(sc))
    bits = tendency_bits(3)
    total = 0.0
    for t in range(1, counts.counts.shape[0]):
        terms = []
        for c, w in enumerate(synth.chi.mass):
            acc = math.log(w)
            for s in (1, 2):
                for m1 in range(1, 4):
                    for m2 in range(1, 5):
                        acc += group_factor(counts, t, s, m1, m2, int(bits[c, m1 - 1]), synth.q, synth.p.p)
            terms.append(acc)
        top = max(terms)
        total += top + math.log(sum(math.exp(x - top) for x in terms))
    assert log_likelihood(counts, synth) == pytest.approx(total, rel=1e-12)


def test_likelihood_degenerate_tendency():
    p = np.array([[1.0, 0.0]])
    params = ModelParams.from_arrays(p, [[0.5]], [0.0, 1.0])
    panel = RatingPanel([[1, 2]], [1], m=1)
    with pytest.raises(DegenerateTendency):
        log_likelihood(panel, params)


def test_repair_hits_marginals(rng):
    pp = np.array([0.9, 0.7, 0.95])
    raw = rng.random((20, 8))
    mass, res = repair_batch(raw, pp)
    assert np.all(res <= 1e-8)
    np.testing.assert_allclose(mass.sum(axis=1), 1.0, atol=1e-8)
    np.testing.assert_allclose(mass @ tendency_bits(3), np.tile(pp, (20, 1)), atol=1e-8)
    assert np.all(mass >= 0)


def test_repair_recovers_from_sparse_support():
    pp = np.array([0.5, 0.5])
    raw = np.array([1.0, 0.0, 0.0, 0.0])  # support cannot carry the marginals
    law = repair_tendency(raw, pp)
    np.testing.assert_allclose(law.marginals(), pp, atol=1e-12)
    assert law.mass.sum() == pytest.approx(1.0, abs=1e-12)


def test_repair_keeps_valid_input():
    pp = np.array([0.8, 0.6])
    law = TendencyDistribution.independent(pp)
    np.testing.assert_allclose(repair_tendency(law.mass, pp).mass, law.mass, atol=1e-14)


def test_free_parameter_count():
    assert free_parameter_count(5, 6) == 30 + 32 - 6
    assert free_parameter_count(3, 2) == 6 + 8 - 4


def test_estimation_small_run_is_reproducible(synth):
    rng = np.random.default_rng(3)
    sc = simulate(synth, (rng.integers(1, 4, 200), np.arange(200) % 2 + 1), 10, 1, 9)
    panel = to_panel(sc)
    cfg = OptimizerConfig(population=20, max_iter=60, restarts=1, seed=4)
    a = estimate_parameters(panel, synth.p, cfg)
    b = estimate_parameters(panel, synth.p, cfg)
    np.testing.assert_array_equal(a.params.q.q, b.params.q.q)
    assert a.loglik == b.loglik
    assert a.diagnostics["constraint_residual"] <= 1e-8
    # history is monotone within a restart
    for h in a.history:
        assert all(y >= x - 1e-12 for x, y in zip(h, h[1:]))


def test_estimation_flags_unidentified_cells(synth, tmp_path):
    # sector 2 has no firms at all
    panel = RatingPanel([[1, 1, 2, 2], [2, 3, 3, 4]], [1, 1], m=3)
    cfg = OptimizerConfig(population=10, max_iter=20, restarts=1, seed=0)
    res = estimate_parameters(panel, synth.p, cfg, n_sectors=2)
    assert [1, 2] in res.diagnostics["unidentified"]
    res.to_json(tmp_path / "e.json", extra={"seed": 0})
    doc = json.loads((tmp_path / "e.json").read_text())
    assert set(doc) >= {"P", "Q", "chi", "loglik", "diagnostics", "seed"}


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(population=2)


def test_coupling_matrix_shape():
    assert CouplingMatrix(np.zeros((3, 2))).shape == (3, 2)
