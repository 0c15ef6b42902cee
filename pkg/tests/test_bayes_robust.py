import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robust_forecast.bayes_robust import (
    all_binary_rules, bayes_classification, bayes_minimax_binary, bayes_mmr_binary, bayes_mmr_log,
    bayes_mmr_quadratic, bounds_sample, draw_posterior, from_bounds, mmr_log_objective,
    mmr_quadratic_objective, report,
)
from robust_forecast.decision_rules import BinaryBounds, LossSpec, MultinomialBounds, robust_forecasts
from robust_forecast.errors import EmptyIdentifiedSet, InputError
from robust_forecast.limit_experiment import SCORES, ex7_bounds
from robust_forecast.panel_dbc import HistoryDistribution

unit = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def bounds(draw):
    a, b = draw(unit), draw(unit)
    return BinaryBounds(min(a, b), max(a, b))


@st.composite
def bounds_list(draw, min_size=2, max_size=6):
    return draw(st.lists(bounds(), min_size=min_size, max_size=max_size))


@given(bounds(), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_single_draw_reduces_to_known_set_rules(b, a01, a10):
    bayes = all_binary_rules(from_bounds([b]), a01, a10)
    for kind in ("binary", "quadratic", "log"):
        known = robust_forecasts(LossSpec(kind, a01, a10), b)
        for crit in ("minimax", "minimax_regret"):
            got, want = bayes[f"{kind}_{crit}"], known[crit][0]
            assert got.value == want.value, (kind, crit)


def test_single_draw_classification_reduces_to_known_set_rule():
    mb = MultinomialBounds((0.2, 0.2, 0.0, 0.0), (0.6, 0.6, 0.8, 0.5))
    bs = from_bounds([mb])
    assert bayes_classification(bs, "mm").tie_set == (0, 1)
    assert bayes_classification(bs, "mmr").discrete == 3


def test_regret_terms_are_clipped_before_averaging():
    # clipped then averaged: regret of 1 is 0.2, regret of 0 is 0.225, so forecast 1;
    # averaging the bounds first would give (0.4, 0.575) and forecast 0
    bs = from_bounds([BinaryBounds(0.1, 0.2), BinaryBounds(0.7, 0.95)])
    assert bayes_mmr_binary(LossSpec(), bs).discrete == 1
    averaged = BinaryBounds(0.4, 0.575)
    assert robust_forecasts(LossSpec(), averaged)["minimax_regret"][0].discrete == 0


def test_minimax_binary_uses_the_average_worst_case():
    bs = from_bounds([BinaryBounds(0.1, 0.3), BinaryBounds(0.5, 0.9)])
    # average of p_L + p_U is 0.9 < 1, so predicting 0 has the smaller risk
    assert bayes_minimax_binary(LossSpec(), bs).discrete == 0


@settings(max_examples=50)
@given(bounds_list())
def test_quadratic_regret_minimizer_beats_a_fine_grid(bl):
    bs = from_bounds(bl)
    pl, pu = bs.binary_arrays()
    d = bayes_mmr_quadratic(bs).continuous
    grid = np.linspace(0, 1, 10001)
    assert mmr_quadratic_objective(d, pl, pu)[0] <= mmr_quadratic_objective(grid, pl, pu).min() + 1e-12


@settings(max_examples=50)
@given(bounds_list())
def test_log_regret_minimizer_beats_a_fine_grid(bl):
    bs = from_bounds(bl)
    pl, pu = bs.binary_arrays()
    d = bayes_mmr_log(bs).continuous
    grid = np.linspace(1e-6, 1 - 1e-6, 4001)
    best = min(mmr_log_objective(x, pl, pu) for x in grid)
    assert mmr_log_objective(d, pl, pu) <= best + 1e-8


@settings(max_examples=50)
@given(bounds_list(), st.floats(0.0, 0.3))
def test_binary_decisions_are_monotone_in_the_bounds(bl, shift):
    # raising every bound can only move the forecast from 0 towards 1
    before = from_bounds(bl)
    after = from_bounds([BinaryBounds(min(b.p_L + shift, 1.0), min(b.p_U + shift, 1.0)) for b in bl])
    for rule in (bayes_minimax_binary, bayes_mmr_binary):
        d0, d1 = rule(LossSpec(), before), rule(LossSpec(), after)
        if not (d0.tie or d1.tie):
            assert d1.discrete >= d0.discrete
    assert bayes_mmr_quadratic(after).continuous >= bayes_mmr_quadratic(before).continuous - 1e-9


def test_limit_experiment_posterior_rules():
    # hhat between the two thresholds: the posterior minimax rule predicts 1, the regret rule 0
    hhat, eps, S = -0.35, 1e-3, 200_000
    h = hhat + np.random.default_rng(5).standard_normal(S)
    bl = [ex7_bounds(0.5 + eps * x) for x in h]
    bs = from_bounds(bl)
    assert SCORES["bayes_mm"](hhat) > 0 > SCORES["bayes_mmr"](hhat)
    assert bayes_minimax_binary(LossSpec(), bs).discrete == 1
    assert bayes_mmr_binary(LossSpec(), bs).discrete == 0


def test_dirichlet_posterior_mean():
    h = HistoryDistribution.from_counts([30, 10, 5, 55])
    draws = draw_posterior(h, 20_000, seed=1)
    expected = (np.array([30, 10, 5, 55]) + 1) / 104
    sd = np.sqrt(expected * (1 - expected) / 105 / 20_000)
    assert np.all(np.abs(draws.draws.mean(axis=0) - expected) < 4 * sd)
    assert np.allclose(draws.draws.sum(axis=1), 1.0, atol=1e-15)


def test_custom_prior_and_validation():
    h = HistoryDistribution.from_counts([3, 1, 0, 6])
    draws = draw_posterior(h, 10, 0, "dirichlet_custom", alpha=[0.5] * 4)
    assert np.array_equal(draws.alpha, [0.5] * 4)
    with pytest.raises(InputError):
        draw_posterior(h, 10, 0, "dirichlet_custom")
    with pytest.raises(InputError):
        draw_posterior(HistoryDistribution([0.25] * 4), 10, 0)
    with pytest.raises(InputError):
        draw_posterior(h, 0, 0)


def test_bootstrap_draws_are_deterministic_frequencies():
    h = HistoryDistribution.from_counts([3, 1, 0, 6])
    a = draw_posterior(h, 50, 9, "bootstrap")
    b = draw_posterior(h, 50, 9, "bootstrap")
    assert np.array_equal(a.draws, b.draws)
    assert np.allclose(a.draws * 10, np.round(a.draws * 10))
    assert np.all(a.draws[:, 2] == 0.0)


def test_empty_draws_are_skipped_and_counted():
    h = HistoryDistribution.from_counts([5, 5, 5, 5])
    draws = draw_posterior(h, 20, 2)

    def bound_fn(P):
        if P[0] > 0.25:
            raise EmptyIdentifiedSet("no")
        return BinaryBounds(P[1], P[1] + P[2])

    with pytest.warns(UserWarning):
        bs = bounds_sample(draws, bound_fn)
    n_bad = int(np.sum(draws.draws[:, 0] > 0.25))
    assert bs.skipped == n_bad and len(bs) == 20 - n_bad
    assert bs.kept == [s for s in range(20) if draws.draws[s, 0] <= 0.25]
    rep = report("binary_minimax", bayes_minimax_binary(LossSpec(), bs), bs, draws)
    assert rep["skipped"] == n_bad and "warning" in rep


def test_all_draws_empty_raises():
    h = HistoryDistribution.from_counts([5, 5, 5, 5])

    def bound_fn(P):
        raise EmptyIdentifiedSet("no")

    with pytest.warns(UserWarning):
        bs = bounds_sample(draw_posterior(h, 5, 0), bound_fn)
    with pytest.raises(EmptyIdentifiedSet):
        bayes_mmr_binary(LossSpec(), bs)


def test_cache_reuses_repeated_draws():
    h = HistoryDistribution.from_counts([1, 0, 0, 1])
    draws = draw_posterior(h, 40, 0, "bootstrap")  # only three distinct frequency vectors
    calls = []

    def bound_fn(P):
        calls.append(1)
        return BinaryBounds(P[0], P[0])

    bounds_sample(draws, bound_fn)
    assert len(calls) == len({d.tobytes() for d in draws.draws}) <= 3


def test_classification_averages_the_statistics():
    bs = from_bounds([MultinomialBounds((0.5, 0.1, 0.0), (0.2, 0.6, 0.9)),
                      MultinomialBounds((0.1, 0.4, 0.2), (0.7, 0.1, 0.6))])
    # averages: lower (0.3, 0.25, 0.1), gaps (0.45, 0.35, 0.75)
    assert bayes_classification(bs, "mm").discrete == 0
    assert bayes_classification(bs, "mmr").discrete == 1
    with pytest.raises(InputError):
        bayes_classification(bs, "other")
