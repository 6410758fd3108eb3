import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from staircase_enf import (
    CascadeStage,
    DomainError,
    PowerGainRule,
    StepMoments,
    StepProfile,
    capasso_enf,
    capasso_enf_delta,
    capasso_enf_heterogeneous,
    capasso_enf_moments,
    cascade_total_gain_variant,
    compare,
    friis_total,
    mean_staircase_gain,
    stages_from_profile,
    stepwise_enf,
)

from oracles import capasso_exact, enumerate_pmf, pmf_enf

PAPER_TOL = 5e-7  # half a unit in the sixth printed decimal
RTOL = 1e-12

# exact rational ENFs from per-electron enumeration (tests/oracles.py)
ORACLE_P05_N2 = float(Fraction(32, 27))  # 1.185185...
ORACLE_P05_P03 = float(Fraction(1816, 1521))  # 1.193951...

probability = st.floats(min_value=0.0, max_value=1.0)
interior = st.floats(min_value=1e-3, max_value=1 - 1e-3)


def test_oracle_constants_are_what_the_enumerator_gives():
    assert ORACLE_P05_N2 == float(pmf_enf(enumerate_pmf([Fraction(1, 2)] * 2)))
    assert ORACLE_P05_P03 == float(pmf_enf(enumerate_pmf([Fraction(1, 2), Fraction(3, 10)])))


@pytest.mark.parametrize(
    "p, n, expected",
    [(0.3, 1, 1.12426), (0.3, 2, 1.219845), (0.3, 3, 1.293372)],
)
def test_capasso_matches_published_illustrations(p, n, expected):
    assert abs(capasso_enf(p, n) - expected) < PAPER_TOL


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_capasso_is_exactly_one_at_probability_endpoints(p):
    assert capasso_enf(p, 5) == 1.0


def test_capasso_zero_steps():
    assert capasso_enf(0.3, 0) == 1.0


@pytest.mark.parametrize("bad", [-0.1, 1.0001, math.nan])
def test_capasso_rejects_probabilities_outside_unit_interval(bad):
    with pytest.raises(DomainError):
        capasso_enf(bad, 2)


def test_capasso_rejects_negative_steps():
    with pytest.raises(DomainError):
        capasso_enf(0.3, -1)


def test_delta_form():
    assert abs(capasso_enf_delta(0.7, 2) - 1.219845) < PAPER_TOL
    assert capasso_enf_delta(1.0, 4) == 1.0
    assert capasso_enf_delta(0.5, 2) == pytest.approx(ORACLE_P05_N2, rel=RTOL)
    with pytest.raises(DomainError):
        capasso_enf_delta(1.5, 2)


@given(probability, st.integers(0, 64))
def test_delta_form_agrees_with_p_form(delta, n):
    assert math.isclose(capasso_enf_delta(delta, n), capasso_enf(1 - delta, n), rel_tol=1e-15)


def test_heterogeneous_form():
    assert abs(capasso_enf_heterogeneous([0.3, 0.3]) - 1.219845) < PAPER_TOL
    assert capasso_enf_heterogeneous([]) == 1.0
    assert capasso_enf_heterogeneous([0.5, 0.3]) == pytest.approx(ORACLE_P05_P03, rel=RTOL)
    with pytest.raises(DomainError):
        capasso_enf_heterogeneous([0.3, 1.2])


def test_heterogeneous_form_depends_on_step_order():
    assert capasso_enf_heterogeneous([0.5, 0.3]) != capasso_enf_heterogeneous([0.3, 0.5])


def test_moments_form():
    assert abs(capasso_enf_moments(StepMoments(1.3, 0.21), 3) - 1.293372) < PAPER_TOL
    assert capasso_enf_moments(StepMoments(2.0, 0.0), 7) == 1.0
    assert capasso_enf_moments(StepMoments(1.5, 0.25), 2) == pytest.approx(ORACLE_P05_N2, rel=RTOL)


def test_moments_form_singular_mean():
    assert capasso_enf_moments(StepMoments(1.0, 0.0), 5) == 1.0
    with pytest.raises(DomainError):
        capasso_enf_moments(StepMoments(1.0, 0.1), 5)


def test_step_moments_validation():
    with pytest.raises(DomainError):
        StepMoments(0.9, 0.1)
    with pytest.raises(DomainError):
        StepMoments(1.2, -0.1)
    assert StepMoments.from_probability(0.3) == StepMoments(1.3, 0.3 * 0.7)


def test_stepwise():
    assert abs(stepwise_enf(0.3) - 1.12426) < PAPER_TOL
    assert stepwise_enf(0.0) == 1.0
    assert stepwise_enf(0.5) == pytest.approx(1 + 0.25 / 2.25, rel=RTOL)
    with pytest.raises(DomainError):
        stepwise_enf(-0.5)


@given(probability)
def test_stepwise_is_one_step_capasso(p):
    assert math.isclose(stepwise_enf(p), capasso_enf(p, 1), rel_tol=1e-15)


def _stages(p, n, rule=PowerGainRule.SQUARED):
    return stages_from_profile(StepProfile.homogeneous(p, n), rule)


def test_friis_with_power_gains():
    assert abs(friis_total(_stages(0.3, 2)) - 1.197787) < PAPER_TOL
    assert abs(friis_total(_stages(0.3, 3)) - 1.241294) < PAPER_TOL
    single = CascadeStage(1.12426, 1.3, 1.69)
    assert friis_total([single]) == 1.12426


def test_gain_variant_cascade():
    assert abs(cascade_total_gain_variant(_stages(0.3, 2)) - 1.219845) < PAPER_TOL
    assert abs(cascade_total_gain_variant(_stages(0.3, 3)) - 1.293372) < PAPER_TOL


def test_noiseless_stages_compose_to_one():
    stages = [CascadeStage(1.0, m, m * m) for m in (1.1, 3.0, 0.5)]
    assert friis_total(stages) == 1.0
    assert cascade_total_gain_variant(stages) == 1.0


def test_empty_cascade_is_unit():
    assert friis_total([]) == 1.0
    assert cascade_total_gain_variant([]) == 1.0


def test_cascade_stage_validation():
    with pytest.raises(DomainError):
        CascadeStage(0.9, 1.0, 1.0)
    with pytest.raises(DomainError):
        CascadeStage(1.1, 0.0, 1.0)
    with pytest.raises(DomainError):
        CascadeStage(1.1, 1.0, -2.0)


def test_power_gain_rule_parsing():
    assert PowerGainRule.parse("M2") is PowerGainRule.SQUARED
    assert PowerGainRule.parse("m^2") is PowerGainRule.SQUARED
    assert PowerGainRule.parse("M") is PowerGainRule.LINEAR
    assert PowerGainRule.parse("linear") is PowerGainRule.LINEAR
    with pytest.raises(DomainError):
        PowerGainRule.parse("G")


def test_stage_from_step_applies_rule():
    sq = CascadeStage.from_step(0.3, "M2")
    lin = CascadeStage.from_step(0.3, "M")
    assert sq.gain == lin.gain == 1.3
    assert sq.power_gain == 1.3 * 1.3
    assert lin.power_gain == 1.3


def test_mean_staircase_gain():
    assert mean_staircase_gain([0.3, 0.3]) == pytest.approx(1.69, rel=RTOL)
    assert mean_staircase_gain([]) == 1.0
    assert mean_staircase_gain([0.5, 0.3]) == pytest.approx(1.95, rel=RTOL)


def test_step_profile():
    prof = StepProfile.from_deltas([0.7, 0.5])
    assert prof.probs == pytest.approx((0.3, 0.5))
    assert prof.deltas == pytest.approx((0.7, 0.5))
    assert prof.n == 2 and not prof.is_homogeneous
    assert StepProfile.homogeneous(0.2, 0).n == 0
    with pytest.raises(DomainError):
        StepProfile((0.1, -0.2))
    with pytest.raises(DomainError):
        StepProfile.homogeneous(0.2, 1.5)


def test_compare_two_steps():
    r = compare(StepProfile.homogeneous(0.3, 2))
    assert abs(r.capasso - 1.219845) < PAPER_TOL
    assert abs(r.friis_power_gain - 1.197787) < PAPER_TOL
    assert abs(r.friis_gain_variant - 1.219845) < PAPER_TOL
    assert r.abs_discrepancy == abs(r.capasso - r.friis_power_gain)
    assert r.mean_staircase_gain == pytest.approx(1.69)


def test_compare_three_steps():
    r = compare(StepProfile.homogeneous(0.3, 3))
    assert abs(r.capasso - 1.293372) < PAPER_TOL
    assert abs(r.friis_power_gain - 1.241294) < PAPER_TOL


@pytest.mark.parametrize("rule", ["M2", "M"])
def test_compare_single_step_is_rule_independent(rule):
    r = compare(StepProfile.homogeneous(0.3, 1), rule)
    for value in (r.capasso, r.friis_power_gain, r.friis_gain_variant):
        assert abs(value - 1.12426) < PAPER_TOL


def test_compare_linear_rule_collapses_to_gain_variant():
    r = compare(StepProfile.homogeneous(0.3, 3), "M")
    assert r.friis_power_gain == r.friis_gain_variant
    assert r.abs_discrepancy == pytest.approx(0.0, abs=1e-15)


def test_compare_empty_profile():
    r = compare(StepProfile())
    assert r.capasso == r.friis_power_gain == r.friis_gain_variant == 1.0


# ---- properties

@given(probability, st.integers(0, 64))
def test_four_capasso_forms_agree(p, n):
    # the moments form needs a step mean distinguishable from 1
    assume(p == 0.0 or 1.0 + p > 1.0)
    ref = capasso_enf(p, n)
    assert math.isclose(capasso_enf_delta(1 - p, n), ref, rel_tol=RTOL)
    assert math.isclose(capasso_enf_heterogeneous([p] * n), ref, rel_tol=RTOL)
    assert math.isclose(capasso_enf_moments(StepMoments.from_probability(p), n), ref, rel_tol=RTOL)


@given(probability, st.integers(0, 100))
def test_gain_variant_telescopes_to_capasso(p, n):
    stages = [CascadeStage(stepwise_enf(p), 1 + p, (1 + p) ** 2)] * n
    assert math.isclose(cascade_total_gain_variant(stages), capasso_enf(p, n), rel_tol=RTOL)


@given(st.lists(probability, max_size=30))
def test_gain_variant_equals_heterogeneous_form(probs):
    stages = stages_from_profile(StepProfile(tuple(probs)))
    assert math.isclose(
        cascade_total_gain_variant(stages), capasso_enf_heterogeneous(probs), rel_tol=RTOL
    )


@given(
    st.lists(
        st.tuples(st.floats(1.0, 10.0), st.floats(1.001, 10.0)), min_size=1, max_size=12
    )
)
def test_friis_never_exceeds_gain_variant(params):
    stages = [CascadeStage(f, m, m * m) for f, m in params]
    friis = friis_total(stages)
    variant = cascade_total_gain_variant(stages)
    assert friis <= variant
    if len(stages) == 1 or all(f == 1.0 for f, _ in params[1:]):
        assert friis == variant


@given(st.lists(st.tuples(st.floats(1.01, 10.0), st.floats(1.01, 10.0)), min_size=2, max_size=12))
def test_friis_strictly_below_gain_variant_with_noisy_stages(params):
    stages = [CascadeStage(f, m, m * m) for f, m in params]
    assert friis_total(stages) < cascade_total_gain_variant(stages)


@given(interior, st.integers(2, 64))
def test_power_gain_friis_strictly_below_capasso(p, n):
    assert friis_total(_stages(p, n)) < capasso_enf(p, n)


@given(probability)
def test_single_step_all_forms_agree(p):
    stages = _stages(p, 1)
    assert friis_total(stages) == cascade_total_gain_variant(stages)
    assert math.isclose(friis_total(stages), capasso_enf(p, 1), rel_tol=1e-15)


@given(interior, st.integers(0, 199))
def test_capasso_nondecreasing_and_bounded(p, n):
    bound = 1 + (1 - p) / (1 + p)
    lo, hi = capasso_enf(p, n), capasso_enf(p, n + 1)
    assert lo <= hi <= bound


@settings(max_examples=30)
@given(st.fractions(Fraction(1, 100), Fraction(99, 100), max_denominator=100), st.integers(0, 40))
def test_capasso_strictly_increasing_in_exact_arithmetic(p, n):
    assert capasso_exact(p, n) < capasso_exact(p, n + 1)
    assert math.isclose(capasso_enf(float(p), n), float(capasso_exact(p, n)), rel_tol=1e-14)


@pytest.mark.parametrize("p", [0.1, 0.15, 0.3, 0.5, 0.9, 0.99])
def test_capasso_gap_to_limit_at_200_steps(p):
    gap = (1 + (1 - p) / (1 + p)) - capasso_enf(p, 200)
    exact = (1 - p) / (1 + p) * (1 + p) ** -200
    assert gap == pytest.approx(exact, rel=1e-4, abs=1e-15)


@pytest.mark.parametrize("p", [0.15, 0.3, 0.5, 0.9, 0.99, 1.0])
def test_capasso_within_1e10_of_limit_at_200_steps(p):
    assert abs(capasso_enf(p, 200) - (1 + (1 - p) / (1 + p))) < 1e-10
