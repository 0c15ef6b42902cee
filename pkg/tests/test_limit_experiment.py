import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import BAYES_MM_ROOT, BAYES_MMR_ROOT, PLUGIN_REGRET_H0_M1, PLUGIN_RISK_H0_1
from robust_forecast.errors import InputError
from robust_forecast.limit_experiment import (
    MC_CHECK_POINTS, SCORES, Ex7Config, RuleCurve, ex7_bounds, ex7_excess_regret_curve, ex7_excess_risk_curve,
    ex7_monte_carlo, ex7_rules, excess_regret, excess_risk, ratio_table, rule_threshold, summary,
    write_curves_csv,
)


def test_bounds_shape():
    assert (ex7_bounds(0.3).p_L, ex7_bounds(0.3).p_U) == (0.3, 0.5)
    assert ex7_bounds(0.6).p_U == pytest.approx(0.7)
    assert ex7_bounds(0.9).p_U == 1.0
    with pytest.raises(InputError):
        ex7_bounds(1.0)


@pytest.mark.parametrize("hhat, expected", [
    (0.0, dict(plugin=1, bayes_mm=1, bayes_mmr=1, posterior_mean_plugin=1)),
    (-0.2, dict(plugin=0, bayes_mm=1, bayes_mmr=1, posterior_mean_plugin=1)),
    (-0.35, dict(plugin=0, bayes_mm=1, bayes_mmr=0, posterior_mean_plugin=1)),
    (-3.0, dict(plugin=0, bayes_mm=0, bayes_mmr=0, posterior_mean_plugin=0)),
])
def test_rules_at_selected_estimates(hhat, expected):
    assert ex7_rules(hhat) == expected


def test_thresholds_match_frozen_roots():
    assert rule_threshold("bayes_mm") == pytest.approx(BAYES_MM_ROOT, abs=1e-11)
    assert rule_threshold("bayes_mmr") == pytest.approx(BAYES_MMR_ROOT, abs=1e-11)
    assert rule_threshold("plugin") == pytest.approx(0.0, abs=1e-11)


def test_posterior_mean_plugin_coincides_with_bayes_minimax():
    # 2 E[h_+] - (-hhat)_+ and hhat (1 + 2 Phi) + 2 phi are the same function
    grid = np.linspace(-10, 10, 200_001)
    assert np.array_equal(SCORES["posterior_mean_plugin"](grid) >= 0, SCORES["bayes_mm"](grid) >= 0)
    assert rule_threshold("posterior_mean_plugin") == pytest.approx(rule_threshold("bayes_mm"), abs=1e-11)


def test_bayes_minimax_is_more_eager_than_plugin():
    grid = np.linspace(-10, 10, 20_001)
    # wherever the plug-in rule predicts 1, so does the posterior minimax rule
    assert np.all((SCORES["bayes_mm"](grid) >= 0) >= (SCORES["plugin"](grid) >= 0))


def test_plugin_closed_form_values():
    assert excess_risk(0.0, 1.0) == pytest.approx(PLUGIN_RISK_H0_1, abs=1e-15)
    assert excess_regret(0.0, -1.0) == pytest.approx(PLUGIN_REGRET_H0_M1, abs=1e-15)


@given(st.floats(-2, 2), st.floats(-8, 8))
def test_curves_are_nonnegative(t, h0):
    assert excess_risk(t, h0) >= 0 and excess_regret(t, h0) >= 0


def test_curves_vanish_at_zero():
    cfg = Ex7Config()
    for curves in (ex7_excess_risk_curve(cfg), ex7_excess_regret_curve(cfg)):
        for c in curves.values():
            assert c.excess[np.flatnonzero(c.h0 == 0.0)[0]] == 0.0


@pytest.mark.parametrize("criterion", ["risk", "regret"])
@pytest.mark.parametrize("rule", ["plugin", "bayes_mmr"])
def test_monte_carlo_matches_curves(rule, criterion):
    t = rule_threshold(rule)
    curve = excess_risk if criterion == "risk" else excess_regret
    for i, h0 in enumerate(MC_CHECK_POINTS):
        mean, se = ex7_monte_carlo(rule, h0, 200_000, seed=i, criterion=criterion)
        assert abs(mean - float(curve(t, h0))) <= 3 * se + 1e-12


def test_ratio_table_convention():
    h0 = np.array([0.0, 1.0])
    a = RuleCurve("a", 0.0, h0, np.array([0.0, 1.0]))
    b = RuleCurve("b", 0.0, h0, np.array([0.0, 1.5]))
    table = ratio_table({"a": a, "b": b})
    assert table["a"]["b"]["max"] == pytest.approx(0.5)
    assert table["b"]["a"]["integrated"] == pytest.approx(-1 / 3)


def test_trapezoid_integral_of_plugin_risk():
    # integral of 3 h Phi(-h) over h >= 0 is 3/4 and of -h Phi(h) over h <= 0 (times -1) is 1/4
    cfg = Ex7Config(step=0.001)
    c = ex7_excess_risk_curve(cfg)["plugin"]
    assert c.integrated == pytest.approx(1.0, abs=1e-5)


def test_config_validation_and_outputs(tmp_path):
    with pytest.raises(InputError):
        Ex7Config(step=0.0)
    with pytest.raises(InputError):
        Ex7Config(rules=("plugin", "oracle"))
    with pytest.raises(InputError):
        rule_threshold("oracle")
    cfg = Ex7Config(h0_min=-1, h0_max=1, step=0.5, rules=("plugin", "bayes_mm"))
    curves = ex7_excess_risk_curve(cfg)
    path = tmp_path / "curves.csv"
    write_curves_csv(curves, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "h0,plugin,bayes_mm" and len(lines) == 6
    s = summary(curves)
    assert set(s["plugin"]) == {"threshold", "integrated", "max", "argmax_h0"}
