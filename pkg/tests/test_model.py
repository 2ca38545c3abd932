import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from cmc_credit.errors import DegenerateTendency, InvalidParams, TooLarge
from cmc_credit.model import (
    FirmState,
    ModelParams,
    TendencyDistribution,
    TransitionMatrix,
    apply_uniforms,
    conditional_magnitude,
    fingerprint,
    joint_step_probability,
    load_params,
    mixture_default_probability,
    params_from_dict,
    params_to_dict,
    save_params,
    step_joint,
    tendency_bits,
    tendency_probabilities,
    validate,
)
from cmc_credit.presets import SP6_P, sp6_model_params


def test_tendency_bits_layout():
    bits = tendency_bits(3)
    assert bits.shape == (8, 3)
    # outcome 5 = 0b101: chi_1 = 1, chi_2 = 0, chi_3 = 1
    assert bits[5].tolist() == [True, False, True]


def test_sp6_tendency_probabilities():
    pp = tendency_probabilities(SP6_P)
    assert pp[0] == pytest.approx(0.9191, abs=1e-4)
    assert pp[1] == pytest.approx(0.9293, abs=1e-4)


def test_conditional_magnitude_rows():
    p = np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3]])
    up = conditional_magnitude(p, 2, 1)
    down = conditional_magnitude(p, 2, 0)
    np.testing.assert_allclose(up, [0.1 / 0.7, 0.6 / 0.7, 0.0])
    np.testing.assert_allclose(down, [0.0, 0.0, 1.0])
    # mixing the two conditionals with p_plus / p_minus gives back the row
    np.testing.assert_allclose(0.7 * up + 0.3 * down, p[1])


def test_conditional_magnitude_degenerate():
    p = np.array([[1.0, 0.0]])
    with pytest.raises(DegenerateTendency):
        conditional_magnitude(p, 1, 0)


def test_mixture_default_probability_example():
    # one rating class plus default, p = (0.8, 0.2), q = 0.5, chi_1 = 0
    params = ModelParams.from_arrays([[0.8, 0.2]], [[0.5]], [0.2, 0.8])
    assert mixture_default_probability(params, FirmState(1, 1), [0]) == pytest.approx(0.2 * 0.5 + 0.5 * 0.2 / 0.2)
    assert mixture_default_probability(params, FirmState(1, 1), [0]) == pytest.approx(0.6)
    assert mixture_default_probability(params, FirmState(1, 1), [1]) == pytest.approx(0.1)
    assert mixture_default_probability(params, FirmState(2, 1), [0]) == 1.0


def test_mixture_default_averages_to_pd(synth):
    bits = tendency_bits(synth.m)
    for cls in range(1, synth.m + 1):
        for s in (1, 2):
            avg = sum(
                w * mixture_default_probability(synth, FirmState(cls, s), int(c))
                for c, w in enumerate(synth.chi.mass)
            )
            assert avg == pytest.approx(synth.p.p[cls - 1, -1], abs=1e-12)
    assert bits.shape[0] == len(synth.chi.mass)


def test_sp6_params_validate():
    params = sp6_model_params()
    assert validate(params) == []
    np.testing.assert_allclose(params.chi.marginals(), params.p.p_plus, atol=1e-10)


def test_validate_reports_violations(synth):
    bad = ModelParams.from_arrays(synth.p.p, synth.q.q, np.roll(synth.chi.mass, 1))
    msgs = validate(bad)
    assert msgs and all("marginal" in m for m in msgs)
    bad_q = ModelParams.from_arrays(synth.p.p, synth.q.q + 1.0, synth.chi.mass)
    assert any("outside [0,1]" in m for m in validate(bad_q))


def test_independent_and_comonotone_marginals():
    pp = np.array([0.9, 0.3, 0.6])
    for law in (TendencyDistribution.independent(pp), TendencyDistribution.comonotone(pp)):
        assert law.mass.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(law.marginals(), pp, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 3), s=st.integers(1, 2))
def test_joint_probability_matches_loop_oracle(seed, m, s):
    rng = np.random.default_rng(seed)
    params = oracles.random_params(rng, m, s)
    n = int(rng.integers(1, 4))
    ratings = rng.integers(1, m + 2, n)
    sectors = rng.integers(1, s + 1, n)
    outcomes = np.where(ratings == m + 1, m + 1, rng.integers(1, m + 2, n))
    a = joint_step_probability(params, (ratings, sectors), outcomes)
    b = oracles.step_probability(params, ratings, sectors, outcomes)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


def test_joint_probability_sums_to_one(synth):
    ratings, sectors = np.array([1, 3]), np.array([1, 2])
    total = sum(
        joint_step_probability(synth, (ratings, sectors), [a, b])
        for a in range(1, 5)
        for b in range(1, 5)
    )
    assert total == pytest.approx(1.0, abs=1e-12)


def test_joint_probability_guard(synth):
    with pytest.raises(TooLarge):
        joint_step_probability(synth, (np.ones(13, int), np.ones(13, int)), np.ones(13, int))


def test_defaulted_firms_stay(synth):
    out = step_joint(synth, (np.array([4, 4, 1]), np.array([1, 2, 1])), 3, size=1000)
    assert np.all(out[:, :2] == 4)


def test_apply_uniforms_is_deterministic(synth):
    u = np.random.default_rng(0).random((50, 1 + 3 * 4))
    r = np.array([1, 2, 3, 2])
    s = np.array([1, 2, 1, 2])
    a = apply_uniforms(synth, r, s, u)
    b = np.stack([apply_uniforms(synth, r, s, row) for row in u])
    np.testing.assert_array_equal(a, b)


def test_step_joint_marginal_rows(synth):
    out = step_joint(synth, (np.array([1, 2, 3]), np.array([1, 2, 1])), 7, size=200_000)
    for k in range(3):
        freq = np.bincount(out[:, k], minlength=5)[1:] / len(out)
        np.testing.assert_allclose(freq, synth.p.p[k], atol=0.005)


def test_params_roundtrip(tmp_path, synth):
    path = tmp_path / "p.json"
    save_params(synth, path, extra={"note": "x"})
    back = load_params(path)
    np.testing.assert_array_equal(back.q.q, synth.q.q)
    np.testing.assert_array_equal(back.chi.mass, synth.chi.mass)
    assert fingerprint(back) == fingerprint(synth)


def test_params_from_dict_rejects_invalid(synth):
    d = params_to_dict(synth)
    d["chi"] = [1.0] + [0.0] * (len(d["chi"]) - 1)
    with pytest.raises(InvalidParams) as exc:
        params_from_dict(d)
    assert exc.value.violations
    d = params_to_dict(synth)
    d["S"] = 5
    with pytest.raises(InvalidParams):
        params_from_dict(json.loads(json.dumps(d)))


def test_sp6_tendency_table_needs_only_a_small_repair():
    from cmc_credit.presets import SP6_CHI_TABLE, chi_table_to_mass

    raw = chi_table_to_mass(SP6_CHI_TABLE)
    repaired = sp6_model_params().chi.mass
    assert np.abs(repaired - raw).max() < 5e-4
    np.testing.assert_allclose(raw @ tendency_bits(5), tendency_probabilities(SP6_P), atol=2e-3)
