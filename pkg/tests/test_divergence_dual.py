import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ndtr

from grid_oracles import kl_ball_max
from robust_forecast.errors import EmptyIdentifiedSet, InputError
from robust_forecast.divergence_dual import (
    ContinuousSetSpec, DiscreteReference, NormalReference, dual_extreme_lower, dual_extreme_upper,
    dual_extreme_upper_report, inner_upper, moment_divergence, multinomial_regret_gap,
)

SUPPORT = (0.0, 1.0, 2.0, 3.0)


def discrete_spec(p0, b, delta, g=None, r=()):
    ref = DiscreteReference(SUPPORT, tuple(p0))
    b = np.asarray(b, float)
    bfun = lambda x, phi, m: b[x.astype(int)] if m == 1 else 1.0 - b[x.astype(int)]
    gfun = None if g is None else (lambda x, phi: np.asarray(g, float)[x.astype(int)][:, None])
    return ContinuousSetSpec(np.array([0.0]), ref, bfun, gfun, np.asarray(r, float), delta)


@st.composite
def discrete_problem(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    p0 = rng.dirichlet(np.ones(4) * 2)
    p0 /= p0.sum()
    return p0, rng.random(4)


def test_zero_radius_recovers_the_mean_of_a_normal_reference():
    spec = ContinuousSetSpec(np.array([0.0]), NormalReference(), lambda x, phi, m: ndtr(x), delta=0.0,
                             sample_size=100_000, seed=3)
    rep = dual_extreme_upper_report(spec)
    assert abs(rep.value - 0.5) <= 3 * rep.std_error
    assert rep.std_error == pytest.approx(math.sqrt(1 / 12 / 100_000), rel=0.05)


def test_gauss_hermite_reference_is_exact_at_zero_radius():
    spec = ContinuousSetSpec(np.array([0.0]), NormalReference(0.5, 1.0, "gauss_hermite"), lambda x, phi, m: ndtr(x))
    # E[Phi(X)] for X ~ N(0.5, 1) is Phi(0.5 / sqrt(2))
    assert dual_extreme_upper(spec) == pytest.approx(float(ndtr(0.5 / math.sqrt(2))), abs=1e-10)


def test_large_radius_gives_the_largest_value():
    b = [0.1, 0.4, 0.9, 0.3]
    spec = discrete_spec([0.25] * 4, b, "large")
    assert dual_extreme_upper(spec) == pytest.approx(0.9)
    assert dual_extreme_lower(spec) == pytest.approx(0.1)


def test_closed_form_two_point_tilt():
    # reference (1/2, 1/2) on b = (0, 1): the upper value is q with KL(q || 1/2) = delta
    q = 0.8
    delta = q * math.log(2 * q) + (1 - q) * math.log(2 * (1 - q))
    spec = ContinuousSetSpec(np.array([0.0]), DiscreteReference((0.0, 1.0), (0.5, 0.5)), lambda x, phi, m: x,
                             delta=delta)
    assert dual_extreme_upper(spec) == pytest.approx(q, abs=1e-7)


@settings(max_examples=20)
@given(discrete_problem())
def test_values_increase_with_the_radius(problem):
    p0, b = problem
    ups = [dual_extreme_upper(discrete_spec(p0, b, d)) for d in (0.0, 0.01, 0.05, 0.2, 1.0)]
    lows = [dual_extreme_lower(discrete_spec(p0, b, d)) for d in (0.0, 0.01, 0.05, 0.2, 1.0)]
    assert all(x <= y + 1e-9 for x, y in zip(ups, ups[1:]))
    assert all(x >= y - 1e-9 for x, y in zip(lows, lows[1:]))
    assert ups[0] == pytest.approx(p0 @ b, abs=1e-9)


@settings(max_examples=20)
@given(discrete_problem(), st.floats(0.001, 0.5))
def test_lower_below_mean_below_upper(problem, delta):
    p0, b = problem
    spec = discrete_spec(p0, b, delta)
    assert dual_extreme_lower(spec) - 1e-9 <= p0 @ b <= dual_extreme_upper(spec) + 1e-9


@settings(max_examples=20)
@given(discrete_problem(), st.floats(0.001, 0.5))
def test_lower_is_reflected_upper(problem, delta):
    p0, b = problem
    lo = dual_extreme_lower(discrete_spec(p0, b, delta))
    up_of_complement = dual_extreme_upper(discrete_spec(p0, 1.0 - b, delta))
    assert lo == pytest.approx(1.0 - up_of_complement, abs=1e-7)


@settings(max_examples=15)
@given(discrete_problem(), st.floats(0.001, 0.3), st.floats(0.001, 0.3))
def test_upper_value_is_concave_in_the_radius(problem, d1, d2):
    p0, b = problem
    v = lambda d: dual_extreme_upper(discrete_spec(p0, b, d))
    assert v(0.5 * (d1 + d2)) >= 0.5 * (v(d1) + v(d2)) - 1e-7


@pytest.mark.parametrize("seed", range(4))
def test_discrete_reference_matches_brute_force(seed):
    rng = np.random.default_rng(100 + seed)
    p0 = rng.dirichlet(np.ones(4) * 3)
    p0 /= p0.sum()
    b = rng.random(4)
    delta = 0.1
    assert dual_extreme_upper(discrete_spec(p0, b, delta)) == pytest.approx(kl_ball_max(p0, b, delta), abs=1e-2)
    assert dual_extreme_lower(discrete_spec(p0, b, delta)) == pytest.approx(-kl_ball_max(p0, -b, delta), abs=1e-2)


def test_discrete_reference_with_a_moment_matches_brute_force():
    p0 = np.array([0.1, 0.2, 0.3, 0.4])
    b = np.array([0.9, 0.2, 0.6, 0.1])
    g = np.array([0.0, 1.0, 2.0, 3.0])
    r = 1.8
    spec = discrete_spec(p0, b, 0.2, g=g, r=[r])
    oracle = kl_ball_max(p0, b, 0.2, g=g, r=r, moment_tol=5e-3)
    assert dual_extreme_upper(spec) == pytest.approx(oracle, abs=1e-2)


def test_unreachable_moment_is_empty():
    spec = discrete_spec([0.25] * 4, [0.5] * 4, 0.1, g=SUPPORT, r=[5.0])
    with pytest.raises(EmptyIdentifiedSet):
        dual_extreme_upper(spec)


def test_moment_outside_the_ball_is_infeasible():
    # mean 2.9 needs almost all mass on the last point: KL far above 0.01
    sol = inner_upper(np.array([0.1, 0.2, 0.3, 0.4]), (np.array(SUPPORT) - 2.9)[:, None], np.full(4, 0.25), 0.01, True)
    assert not sol.feasible and sol.value == -math.inf


def test_seed_reproducibility():
    make = lambda seed: ContinuousSetSpec(np.array([0.0, 0.5]), NormalReference(), lambda x, phi, m: ndtr(x + phi),
                                          delta=0.05, sample_size=20_000, seed=seed)
    assert dual_extreme_upper(make(1)) == dual_extreme_upper(make(1))
    assert dual_extreme_upper(make(1)) != dual_extreme_upper(make(2))


def test_outer_maximum_over_phi():
    spec = ContinuousSetSpec(np.array([-1.0, 0.0, 1.0]), NormalReference(method="gauss_hermite"),
                             lambda x, phi, m: ndtr(x + phi), delta=0.0)
    rep = dual_extreme_upper_report(spec)
    assert rep.phi == 1.0 and rep.n_feasible == 3
    assert rep.value == pytest.approx(float(ndtr(1 / math.sqrt(2))), abs=1e-10)


def three_outcome_spec(probs, delta):
    probs = np.asarray(probs, float)  # support points x rows of outcome probabilities
    return ContinuousSetSpec(np.array([0.0]), DiscreteReference(tuple(range(len(probs))), (1 / len(probs),) * len(probs)),
                             lambda x, phi, m: probs[x.astype(int), m], delta=delta, num_outcomes=probs.shape[1])


@settings(max_examples=15)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 0.5))
def test_regret_gaps_are_nonnegative(seed, delta):
    probs = np.random.default_rng(seed).dirichlet(np.ones(3), size=3)
    spec = three_outcome_spec(probs, delta)
    assert all(multinomial_regret_gap(spec, m) >= 0.0 for m in range(3))


def test_dominant_outcome_has_zero_regret():
    probs = [[0.7, 0.2, 0.1], [0.8, 0.1, 0.1], [0.6, 0.3, 0.1]]
    spec = three_outcome_spec(probs, 0.3)
    assert multinomial_regret_gap(spec, 0) == 0.0
    assert multinomial_regret_gap(spec, 2) > 0.4


def test_input_validation():
    with pytest.raises(InputError):
        ContinuousSetSpec(np.array([0.0]), NormalReference(), lambda x, phi, m: x, delta=-1.0)
    with pytest.raises(InputError):
        ContinuousSetSpec(np.array([0.0]), NormalReference(), lambda x, phi, m: x, delta="huge")
    with pytest.raises(InputError):
        DiscreteReference((0.0, 1.0), (0.5, 0.6))


def test_vanishing_radius_returns_the_mean():
    p0, b = np.array([0.1, 0.2, 0.3, 0.4]), np.array([0.9, 0.2, 0.6, 0.1])
    for delta in (3e-136, 1e-30, 1e-25):
        assert dual_extreme_upper(discrete_spec(p0, b, delta)) == pytest.approx(p0 @ b, abs=1e-12)


def test_moment_divergence_closed_form():
    # reference (1/2, 1/2) on {0, 1} with target mean q: the I-projection is Bernoulli(q)
    q = 0.8
    dg = (np.array([0.0, 1.0]) - q)[:, None]
    expected = q * math.log(2 * q) + (1 - q) * math.log(2 * (1 - q))
    assert moment_divergence(dg, np.array([0.5, 0.5])) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("delta", [1e-30, 1e-20, 1e-15, 1e-13, 1e-11, 1e-9])
def test_tiny_radius_with_moments_stays_in_the_pinsker_band(delta):
    g = np.array([0.0, 1.0, 2.0, 3.0])
    band = math.sqrt(delta / 2)
    for seed in range(10):
        rng = np.random.default_rng(seed)
        p0 = rng.dirichlet(np.ones(4) * 2)
        p0 /= p0.sum()
        b = rng.random(4)
        for frac in (0.0, 0.5, 1.5, 3.0):
            spec = discrete_spec(p0, b, delta, g=g, r=[p0 @ g + frac * 3 * band])
            try:
                v = dual_extreme_upper(spec)
            except EmptyIdentifiedSet:
                assert frac > 0
                continue
            assert abs(v - p0 @ b) <= np.ptp(b) * band + 1e-8


def test_moment_just_outside_the_ball_is_empty():
    # target mean chosen so the smallest divergence is twice the radius
    q, delta = 0.8, 0.05
    kl = lambda t: t * math.log(2 * t) + (1 - t) * math.log(2 * (1 - t))
    lo, hi = 0.5, 0.999
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if kl(mid) < 2 * delta else (lo, mid)
    spec = ContinuousSetSpec(np.array([0.0]), DiscreteReference((0.0, 1.0), (0.5, 0.5)), lambda x, phi, m: x,
                             lambda x, phi: x[:, None], [lo], delta)
    with pytest.raises(EmptyIdentifiedSet):
        dual_extreme_upper(spec)
    spec.delta = 2.5 * delta
    assert dual_extreme_upper(spec) == pytest.approx(lo, abs=1e-7)
