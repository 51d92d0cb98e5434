import math

import numpy as np
import pytest
from scipy import integrate

from zimediate.exceptions import DomainError
from zimediate.outcome import OutcomeParams, outcome_logpdf, outcome_mean

P = OutcomeParams((1.0, 0.5, -2.0, 0.3, 0.7, -0.1), 1.3)


def test_mean_at_zero_and_positive():
    assert outcome_mean(P, 2.0, 0.0) == pytest.approx(1.0 + 0.3 * 2.0)
    expected = 1.0 + 0.5 * 3 - 2.0 + 0.3 * 2 + 0.7 * 2 - 0.1 * 2 * 3
    assert outcome_mean(P, 2.0, 3.0) == pytest.approx(expected)


def test_vectorised():
    x = np.array([0.0, 1.0, 2.0])
    m = np.array([0.0, 1.0, 4.0])
    out = outcome_mean(P, x, m)
    assert out.shape == (3,)
    assert out[1] == outcome_mean(P, 1.0, 1.0)


@pytest.mark.parametrize("x,m", [(0.0, 0.0), (1.5, 2.0), (-2.0, 7.5)])
def test_density_integrates_to_one(x, m):
    mu = outcome_mean(P, x, m)
    val, _ = integrate.quad(lambda y: math.exp(outcome_logpdf(P, y, x, m)), mu - 40, mu + 40,
                            points=[mu], epsabs=1e-13)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_invalid_inputs():
    with pytest.raises(DomainError):
        OutcomeParams((0,) * 6, 0.0)
    with pytest.raises(ValueError):
        OutcomeParams((0,) * 5, 1.0)
    with pytest.raises(DomainError):
        outcome_mean(P, 0.0, -1.0)
