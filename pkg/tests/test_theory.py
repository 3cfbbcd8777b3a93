import pytest

from errors import DimensionTooSmall, UnboundedShift
from examples.configs import M_SWEEP, ORACLE_MATRIX
from config import apply_overrides
from model import (
    Ball,
    Constant,
    ModelConfig,
    PowerLaw,
    RadialPower,
    StretchedExp,
    config_from_dict,
)
from theory import (
    Outcome,
    Verdict,
    beta0,
    comparison_extend,
    critical_dimension,
    beta_shift_invariance,
    fired_rules,
    predict_csp,
    predict_explosion,
    predict_point_hitting,
)


@pytest.mark.parametrize("d, p, expected", [
    (2, 2.0, -2.0),
    (3, 2.0, -1.0),
    (4, 2.0, 0.0),
    (5, 2.0, 1.0),
    (3, 1.5, -6.0),
    (6, 1.5, 0.0),
    (8, 1.5, 4.0),
    (2, 3.0, -0.5),
    (4, 3.0, 0.5),
])
def test_beta0_table(d, p, expected):
    assert beta0(d, p) == pytest.approx(expected)


@pytest.mark.parametrize("p", [1.25, 1.5, 2.0, 3.0])
def test_beta0_changes_sign_at_the_critical_dimension(p):
    dc = critical_dimension(p)
    assert beta0(dc, p) == pytest.approx(0.0, abs=1e-12)
    assert beta0(dc - 0.1, p) < 0 < beta0(dc + 0.1, p)


@pytest.mark.parametrize("name, model, expected", ORACLE_MATRIX, ids=[row[0] for row in ORACLE_MATRIX])
def test_oracle_matrix(name, model, expected):
    verdict = predict_csp(config_from_dict(model))
    assert verdict.value == Outcome(expected), verdict


@pytest.mark.parametrize("name, model, expected", ORACLE_MATRIX, ids=[row[0] for row in ORACLE_MATRIX])
def test_fired_rules_are_self_consistent(name, model, expected):
    fired = fired_rules(config_from_dict(model))
    assert fired
    assert {v.value for v in fired} == {Outcome(expected)}


def test_m_sweep_with_matching_alpha_holds():
    base = ORACLE_MATRIX[0][1]
    for point in M_SWEEP:
        verdict = predict_csp(config_from_dict(apply_overrides(base, point)))
        assert verdict.value == Outcome.HOLDS


def test_alpha_decaying_faster_than_the_motion_allows_fails():
    config = ModelConfig(motion=RadialPower(m=1.0), alpha=StretchedExp(1.0, 1.0, 1.5))
    assert predict_csp(config).value == Outcome.FAILS
    assert predict_csp(config).source == "fast-decaying-alpha"


def test_bounded_domains_are_undetermined():
    verdict = predict_csp(ModelConfig(domain=Ball(3.0)))
    assert verdict.value == Outcome.UNDETERMINED
    assert verdict.unmet


def test_p_above_two_is_undetermined():
    assert predict_csp(ModelConfig(p=2.5)).value == Outcome.UNDETERMINED


@pytest.mark.parametrize("m, d, expected", [
    (3.0, 3, Outcome.EXPLODES),
    (2.5, 4, Outcome.EXPLODES),
    (0.0, 3, Outcome.CONSERVATIVE),
    (1.0, 2, Outcome.CONSERVATIVE),
    (2.0, 5, Outcome.CONSERVATIVE),
])
def test_explosion_dichotomy(m, d, expected):
    assert predict_explosion(ModelConfig(d=d, motion=RadialPower(m=m))).value == expected


def test_planar_fast_motion_does_not_explode():
    assert predict_explosion(ModelConfig(d=2, motion=RadialPower(m=3.0))).value == Outcome.UNDETERMINED


def test_point_hitting_needs_two_dimensions():
    with pytest.raises(DimensionTooSmall):
        predict_point_hitting(ModelConfig(d=1))


def test_point_hitting_reads_as_hits(punctured_d3, punctured_d4, punctured_d3_damped):
    assert predict_point_hitting(punctured_d3).hits is True
    assert predict_point_hitting(punctured_d4).hits is False
    assert predict_point_hitting(punctured_d3_damped).hits is False


def test_comparison_carries_holds_to_larger_alpha(brownian):
    base = predict_csp(brownian)
    bigger = brownian.replace(alpha=Constant(2.0), beta=Constant(-1.0))
    verdict = comparison_extend(base, brownian, bigger)
    assert verdict.value == Outcome.HOLDS
    assert verdict.source == "comparison"


def test_comparison_refuses_the_wrong_direction(brownian):
    base = predict_csp(brownian)
    smaller = brownian.replace(alpha=Constant(0.5))
    assert comparison_extend(base, brownian, smaller).value == Outcome.UNDETERMINED


def test_comparison_needs_the_same_motion(brownian):
    other = brownian.replace(motion=RadialPower(m=1.0))
    assert comparison_extend(predict_csp(brownian), brownian, other).value == Outcome.UNDETERMINED


def test_beta_shift_invariance(fast_motion):
    verdict = beta_shift_invariance(fast_motion, Constant(5.0))
    assert verdict.value == Outcome.FAILS
    assert verdict.source == "beta-shift"


def test_unbounded_beta_shift_is_rejected(brownian):
    with pytest.raises(UnboundedShift):
        beta_shift_invariance(brownian, PowerLaw(-1.0, 1.0))


def test_verdict_row_lists_unmet_hypotheses():
    verdict = Verdict(Outcome.UNDETERMINED, "no-rule", unmet=("a", "b"))
    row = verdict.to_row("abc")
    assert row["value"] == "Undetermined"
    assert "unmet: a, b" in row["note"]
    assert not verdict.decisive
