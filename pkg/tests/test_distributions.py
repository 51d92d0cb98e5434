import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from zimediate.distributions import (
    LinkParams,
    MediatorFamily,
    link_location,
    log_density_positive,
    mediator_mean,
    sample_true_mediator,
    zero_prob,
)
from zimediate.exceptions import DomainError

F = MediatorFamily


def nb_pmf_bruteforce(k, mu, r):
    """NB mass from its gamma-function definition (independent of the package)."""
    logp = (math.lgamma(k + r) - math.lgamma(r) - math.lgamma(k + 1)
            + r * math.log(r / (r + mu)) + k * math.log(mu / (r + mu)))
    return math.exp(logp)


class TestLinkLocation:
    def test_zilon_zero_coefficients(self):
        assert link_location(F.ZILON, LinkParams(0, 0, 0, 0, sigma=1), 7) == 0

    def test_zinb_exp_zero(self):
        assert link_location(F.ZINB, LinkParams(0, 1, 0, 0, r=1), 0) == 1

    def test_zip_exponent_cancels(self):
        assert link_location(F.ZIP, LinkParams(0.5, -0.25, 0, 0), 2) == pytest.approx(1.0)

    def test_overflow_is_reported(self):
        with pytest.raises(ArithmeticError):
            link_location(F.ZIP, LinkParams(800, 0, 0, 0), 1.0)


class TestZeroProb:
    def test_zilon_logistic_zero(self):
        assert zero_prob(F.ZILON, LinkParams(0.3, 1, 0, 0, sigma=1), 12.0) == 0.5

    def test_zinb_mixture_against_sampling(self):
        # Delta* = 0.3, mu = 2, r = 1 -> 0.3 + 0.7 / 3
        g0 = math.log(0.3 / 0.7)
        p = LinkParams(math.log(2.0), 0, g0, 0, r=1.0)
        expected = 0.3 + 0.7 / 3.0
        assert zero_prob(F.ZINB, p, 0.0) == pytest.approx(expected, rel=1e-12)
        rng = np.random.default_rng(1)
        draws = sample_true_mediator(F.ZINB, p, np.zeros(1_000_000), rng)
        freq = np.mean(draws == 0)
        se = math.sqrt(expected * (1 - expected) / 1e6)
        assert abs(freq - expected) < 3 * se

    def test_zip_limit(self):
        p = LinkParams(math.log(30.0), 0, -60.0, 0)
        assert zero_prob(F.ZIP, p, 0.0) == pytest.approx(math.exp(-30), abs=1e-20)

    def test_large_logit_is_stable(self):
        p = LinkParams(0.0, 0.0, 0.0, 1.0, sigma=1.0)
        vals = zero_prob(F.ZILON, p, np.array([-800.0, 800.0]))
        assert np.all(np.isfinite(vals))
        assert vals[0] == 0.0 and vals[1] == 1.0

    @settings(max_examples=60, deadline=None)
    @given(fam=st.sampled_from(list(F)), a0=st.floats(-2, 3), g0=st.floats(-4, 4),
           x=st.floats(-3, 3), s=st.floats(0.2, 5))
    def test_in_unit_interval(self, fam, a0, g0, x, s):
        p = LinkParams(a0, 0.2, g0, -0.3, sigma=s, r=s)
        d = zero_prob(fam, p, x)
        assert 0.0 < d < 1.0


class TestMediatorMean:
    def test_zilon_monte_carlo(self):
        p = LinkParams(0.0, 0.0, 0.0, 0.0, sigma=math.sqrt(2.0))
        assert mediator_mean(F.ZILON, p, 0.0) == pytest.approx(0.5 * math.e, rel=1e-12)
        rng = np.random.default_rng(2)
        d = sample_true_mediator(F.ZILON, p, np.zeros(1_000_000), rng)
        assert abs(d.mean() - 0.5 * math.e) < 3 * d.std() / 1000

    def test_zinb_monte_carlo(self):
        p = LinkParams(math.log(4.0), 0.0, 0.0, 0.0, r=1.5)
        assert mediator_mean(F.ZINB, p, 0.0) == pytest.approx(2.0)
        rng = np.random.default_rng(3)
        d = sample_true_mediator(F.ZINB, p, np.zeros(1_000_000), rng)
        assert abs(d.mean() - 2.0) < 3 * d.std() / 1000

    @pytest.mark.parametrize("fam", list(F))
    def test_all_mass_at_zero(self, fam):
        p = LinkParams(1.0, 0.0, 60.0, 0.0, sigma=1.0, r=1.0)
        assert mediator_mean(fam, p, 0.0) == pytest.approx(0.0, abs=1e-20)


class TestLogDensityPositive:
    def test_standard_lognormal_median(self):
        p = LinkParams(0.0, 0.0, 0.0, 0.0, sigma=1.0)
        assert log_density_positive(F.ZILON, p, 0.0, 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi))

    def test_zip_unit_rate(self):
        p = LinkParams(0.0, 0.0, 0.0, 0.0)
        assert log_density_positive(F.ZIP, p, 0.0, 1.0) == pytest.approx(math.log(1 / (math.e - 1)))

    def test_zinb_summation_oracle(self):
        p = LinkParams(math.log(2.0), 0.0, 0.0, 0.0, r=1.0)
        total = sum(nb_pmf_bruteforce(k, 2.0, 1.0) for k in range(10_001))
        expected = nb_pmf_bruteforce(3, 2.0, 1.0) / (total - nb_pmf_bruteforce(0, 2.0, 1.0))
        assert log_density_positive(F.ZINB, p, 0.0, 3.0) == pytest.approx(math.log(expected), rel=1e-12)

    @pytest.mark.parametrize("fam", list(F))
    def test_nonpositive_rejected(self, fam):
        p = LinkParams(0.0, 0.0, 0.0, 0.0, sigma=1.0, r=1.0)
        with pytest.raises(DomainError):
            log_density_positive(fam, p, 0.0, 0.0)

    @pytest.mark.parametrize("fam", [F.ZINB, F.ZIP])
    def test_non_integer_counts_rejected(self, fam):
        p = LinkParams(0.0, 0.0, 0.0, 0.0, r=1.0)
        with pytest.raises(DomainError):
            log_density_positive(fam, p, 0.0, 2.5)

    @pytest.mark.parametrize("mu,sigma", [(0.0, 1.0), (2.0, 0.3), (-1.0, 2.0)])
    def test_lognormal_normalises(self, mu, sigma):
        p = LinkParams(mu, 0.0, 0.0, 0.0, sigma=sigma)
        f = lambda u: math.exp(log_density_positive(F.ZILON, p, 0.0, math.exp(u)) + u)
        val, _ = integrate.quad(f, mu - 40 * sigma, mu + 40 * sigma, limit=200)
        assert val == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("fam,mu,r", [(F.ZINB, 3.0, 0.5), (F.ZINB, 20.0, 4.0),
                                          (F.ZIP, 0.2, None), (F.ZIP, 15.0, None)])
    def test_counts_normalise(self, fam, mu, r):
        p = LinkParams(math.log(mu), 0.0, 0.0, 0.0, r=r or 1.0)
        total, k, tail = 0.0, 1, 1.0
        while tail > 1e-12:
            chunk = np.exp(log_density_positive(fam, p, 0.0, np.arange(k, k + 1000, dtype=float)))
            total += chunk.sum()
            tail = 1.0 - total
            k += 1000
            if k > 10**6:
                break
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_zip_is_zinb_limit(self):
        m = np.arange(1, 21, dtype=float)
        pz = LinkParams(math.log(4.0), 0.0, 0.0, 0.0)
        pn = LinkParams(math.log(4.0), 0.0, 0.0, 0.0, r=1e6)
        diff = log_density_positive(F.ZINB, pn, 0.0, m) - log_density_positive(F.ZIP, pz, 0.0, m)
        assert np.max(np.abs(diff)) < 1e-3

    def test_large_dispersion_matches_poisson_closely(self):
        # the rising-factorial form stays accurate where a log-gamma difference would cancel
        m = np.arange(1, 21, dtype=float)
        pz = LinkParams(math.log(4.0), 0.0, 0.0, 0.0)
        pn = LinkParams(math.log(4.0), 0.0, 0.0, 0.0, r=1e14)
        diff = log_density_positive(F.ZINB, pn, 0.0, m) - log_density_positive(F.ZIP, pz, 0.0, m)
        assert np.max(np.abs(diff)) < 1e-10


class TestSampler:
    @pytest.mark.parametrize("fam", list(F))
    def test_forced_zero(self, fam):
        p = LinkParams(1.0, 0.0, 80.0, 0.0, sigma=1.0, r=1.0)
        d = sample_true_mediator(fam, p, np.zeros(1000), np.random.default_rng(0))
        assert np.all(d == 0)

    def test_zilon_zero_frequency(self):
        p = LinkParams(0.5, 0.1, -0.2, 0.4, sigma=0.8)
        x = 1.3
        d = sample_true_mediator(F.ZILON, p, np.full(1_000_000, x), np.random.default_rng(4))
        pz = zero_prob(F.ZILON, p, x)
        assert abs(np.mean(d == 0) - pz) < 3 * math.sqrt(pz * (1 - pz) / 1e6)

    def test_zinb_mean(self):
        p = LinkParams(1.0, 0.2, -0.5, 0.3, r=2.5)
        x = -0.7
        d = sample_true_mediator(F.ZINB, p, np.full(1_000_000, x), np.random.default_rng(5))
        assert abs(d.mean() - mediator_mean(F.ZINB, p, x)) < 3 * d.std() / 1000

    def test_zip_zero_frequency(self):
        p = LinkParams(0.3, 0.0, -1.0, 0.0)
        d = sample_true_mediator(F.ZIP, p, np.zeros(1_000_000), np.random.default_rng(6))
        pz = zero_prob(F.ZIP, p, 0.0)
        assert abs(np.mean(d == 0) - pz) < 3 * math.sqrt(pz * (1 - pz) / 1e6)

    def test_seeded_reproducible(self):
        p = LinkParams(1.0, 0.2, -0.5, 0.3, r=2.5)
        a = sample_true_mediator(F.ZINB, p, np.zeros(50), np.random.default_rng(9))
        b = sample_true_mediator(F.ZINB, p, np.zeros(50), np.random.default_rng(9))
        assert np.array_equal(a, b)


class TestParams:
    def test_sigma_must_be_positive_for_zilon(self):
        with pytest.raises(DomainError):
            LinkParams(0, 0, 0, 0, sigma=0.0).check(F.ZILON)

    def test_r_ignored_for_zip(self):
        LinkParams(0, 0, 0, 0, r=-1.0).check(F.ZIP)

    def test_family_parse(self):
        assert F.parse("ZINB") is F.ZINB
        assert F.parse(F.ZIP) is F.ZIP
        with pytest.raises(ValueError):
            F.parse("gamma")
        assert special.expit(0.0) == 0.5
