import numpy as np
import pytest

from errors import InvalidLaw
from model import Constant
from offspring import build_offspring_law, default_rate_constant, no_branching_law, tail_table


def test_binary_law_for_p_two():
    law = build_offspring_law(2.0, 10, Constant(1.0), Constant(0.0))
    assert law.c == 2.0
    np.testing.assert_allclose(law.weights(np.array([0.0]))[:, 0], [0.5, 0.0, 0.5])
    np.testing.assert_allclose(law.probabilities(2), [0.5, 0.0, 0.5])
    assert law.rate == pytest.approx(20.0)
    assert law.mean(np.array([1.0]))[0] == 1.0


def test_tail_table_for_stable_branching():
    assert tail_table(2.0).tolist() == [1.0]
    table = tail_table(1.5)
    # |binom(1.5, 2)| / (p - 1)
    assert table[0] == pytest.approx(0.75)
    assert table[-1] == 1.0
    assert np.all(np.diff(table) >= 0)


@pytest.mark.parametrize("p, beta", [(2.0, 0.0), (1.5, 0.5), (1.2, -1.0)])
def test_generating_function_matches_the_branching_mechanism(p, beta):
    law = build_offspring_law(p, 50, Constant(1.0), Constant(beta))
    assert law.generating_function_gap() < 1e-8


def test_creation_shifts_the_mean():
    law = build_offspring_law(2.0, 100, Constant(1.0), Constant(2.0))
    assert law.mean(np.array([0.0]))[0] == pytest.approx(1.01)


@pytest.mark.parametrize("kwargs", [
    dict(p=2.5, n=10),
    dict(p=2.0, n=0),
    dict(p=2.0, n=1, c=1.0),
    dict(p=2.0, n=1, beta=Constant(2.0)),
])
def test_invalid_laws(kwargs):
    args = dict(alpha=Constant(1.0), beta=Constant(0.0))
    args.update(kwargs)
    with pytest.raises(InvalidLaw):
        build_offspring_law(**args)


def test_samples_have_the_right_mean():
    law = build_offspring_law(2.0, 10, Constant(1.0), Constant(0.0))
    counts = law.sample(np.zeros(20000), np.random.default_rng(0))
    assert set(np.unique(counts)) <= {0, 2}
    assert counts.mean() == pytest.approx(1.0, abs=0.05)


def test_stable_samples_start_at_two():
    law = build_offspring_law(1.5, 10, Constant(1.0), Constant(0.0))
    counts = law.sample(np.zeros(5000), np.random.default_rng(1))
    assert counts.min() >= 0
    # p1 vanishes without creation
    assert 1 not in counts
    assert counts.max() >= 2


def test_frozen_population_law():
    law = no_branching_law(10)
    assert law.rate == 0.0
    assert law.sample(np.zeros(4), np.random.default_rng(0)).tolist() == [1, 1, 1, 1]


def test_default_rate_constant_covers_negative_beta():
    assert default_rate_constant(2.0, 1.0, -3.0) == 5.0
    assert default_rate_constant(1.5, 2.0, 1.0) == 3.0
