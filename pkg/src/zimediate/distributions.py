"""Two-part zero-inflated mediator laws (log-normal, negative binomial, Poisson).

Each family ties a location link ``alpha0 + alpha1 * x`` and a logit
zero-inflation link ``gamma0 + gamma1 * x`` to the exposure. For the
log-normal family the logit link gives the total zero probability; for the
count families it gives the structural (excess) zero probability and the
count law adds its own mass at zero.

The public functions accept scalars or arrays for ``x`` (and ``m``) and
broadcast. The underscore-prefixed kernels work directly on linear
predictors and optionally return derivatives; the likelihood uses those.
"""

import enum
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import DomainError, NonFiniteError

LOG_2PI = float(np.log(2.0 * np.pi))


class MediatorFamily(str, enum.Enum):
    ZILON = "zilon"
    ZINB = "zinb"
    ZIP = "zip"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for member in cls:
            if member.value == key or member.name.lower() == key:
                return member
        raise ValueError(f"unknown mediator family {value!r}")

    @property
    def is_count(self):
        return self is not MediatorFamily.ZILON

    @property
    def has_scale(self):
        """Whether the family carries a positive scale (sigma or r)."""
        return self is not MediatorFamily.ZIP

    @property
    def label(self):
        return {"zilon": "ZILoN", "zinb": "ZINB", "zip": "ZIP"}[self.value]


@dataclass(frozen=True)
class LinkParams:
    """Regression parameters of the mediator law.

    ``sigma`` is the log-scale standard deviation (ZILoN) and ``r`` the
    negative binomial dispersion (ZINB); each is ignored by the other
    families.
    """

    alpha0: float
    alpha1: float
    gamma0: float
    gamma1: float
    sigma: float = 1.0
    r: float = 1.0

    def check(self, family):
        family = MediatorFamily.parse(family)
        vals = (self.alpha0, self.alpha1, self.gamma0, self.gamma1)
        if not all(np.isfinite(v) for v in vals):
            raise NonFiniteError("link parameters must be finite")
        if family is MediatorFamily.ZILON and not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if family is MediatorFamily.ZINB and not (self.r > 0 and np.isfinite(self.r)):
            raise DomainError(f"r must be positive, got {self.r}")
        return self

    def scale(self, family):
        family = MediatorFamily.parse(family)
        if family is MediatorFamily.ZILON:
            return self.sigma
        if family is MediatorFamily.ZINB:
            return self.r
        return None


# ---------------------------------------------------------------------------
# kernels on linear predictors
# ---------------------------------------------------------------------------

def _exp_location(lp_a):
    with np.errstate(over="ignore"):
        mu = np.exp(lp_a)
    if not np.all(np.isfinite(mu)):
        raise NonFiniteError("location link overflowed (exp of linear predictor)")
    return mu


def _x_over_1px_minus_log1p(x):
    """x / (1 + x) - log1p(x), accurate for small x (large dispersion r)."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-3
    xs = np.where(small, x, 0.0)
    series = xs * xs * (-0.5 + xs * (2.0 / 3.0 + xs * (-0.75 + xs * 0.8)))
    with np.errstate(invalid="ignore"):
        direct = x / (1.0 + x) - np.log1p(x)
    return np.where(small, series, direct)


def _log_count_zero(family, lp_a, scale):
    """log P(count = 0) for the count part, with d/d lp_a and d/d log(scale)."""
    if family is MediatorFamily.ZIP:
        lam = _exp_location(lp_a)
        return -lam, -lam, None
    mu = _exp_location(lp_a)
    r = scale
    # log p0 = -r log(1 + mu/r)
    log_p0 = -r * np.log1p(mu / r)
    d_lpa = -mu / (1.0 + mu / r)
    d_logr = r * _x_over_1px_minus_log1p(mu / r)
    return log_p0, d_lpa, d_logr


RISING_TABLE_MAX = 100_000


def _log_rising_excess(r, m):
    """sum_{j<m} log1p(j / r) and sum_{j<m} r / (r + j) for integer ``m``.

    The first is log Gamma(r + m) - log Gamma(r) - m log r, free of the
    cancellation that plagues the log-gamma difference when r is large.
    """
    m = np.asarray(m, dtype=float)
    top = int(np.max(m)) if m.size else 0
    if np.ndim(r) == 0 and top <= RISING_TABLE_MAX:
        j = np.arange(top, dtype=float)
        s1 = np.concatenate([[0.0], np.cumsum(np.log1p(j / r))])
        s2 = np.concatenate([[0.0], np.cumsum(r / (r + j))])
        idx = m.astype(np.int64)
        return s1[idx], s2[idx]
    s1 = special.gammaln(r + m) - special.gammaln(r) - m * np.log(r)
    s2 = r * (special.digamma(r + m) - special.digamma(r))
    return s1, s2


def _log1mexp(a):
    """log(1 - exp(a)) for a <= 0."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    small = a > -0.6931471805599453
    out[small] = np.log(-np.expm1(a[small]))
    out[~small] = np.log1p(-np.exp(a[~small]))
    return out


def zero_log_terms(family, lp_a, lp_g, scale, grad=False):
    """Return ``log(Delta)``, ``log(1 - Delta)`` and optionally their derivatives.

    Derivatives are with respect to the location predictor, the logit
    predictor and the log of the scale parameter, returned as two dicts
    keyed ``"a"``, ``"g"``, ``"s"``.
    """
    family = MediatorFamily.parse(family)
    lp_g = np.asarray(lp_g, dtype=float)
    log_ds = special.log_expit(lp_g)
    log_1mds = special.log_expit(-lp_g)
    ds = special.expit(lp_g)
    if family is MediatorFamily.ZILON:
        if not grad:
            return log_ds, log_1mds
        zeros = np.zeros_like(lp_g)
        return (log_ds, log_1mds,
                {"a": zeros, "g": 1.0 - ds, "s": zeros},
                {"a": zeros, "g": -ds, "s": zeros})

    lp_a = np.asarray(lp_a, dtype=float)
    log_p0, dp0_a, dp0_s = _log_count_zero(family, lp_a, scale)
    log_p0 = np.broadcast_to(log_p0, lp_g.shape)
    log_1mp0 = _log1mexp(np.minimum(log_p0, -1e-300))
    log_delta = np.logaddexp(log_ds, log_1mds + log_p0)
    log_1mdelta = log_1mds + log_1mp0
    if not grad:
        return log_delta, log_1mdelta
    w0 = np.exp(log_ds - log_delta)  # share of Delta that is structural
    w1 = 1.0 - w0
    odds_p0 = np.exp(log_p0 - log_1mp0)
    d_logdelta = {"g": w0 - ds, "a": w1 * dp0_a}
    d_log1mdelta = {"g": -ds, "a": -odds_p0 * dp0_a}
    if dp0_s is None:
        zeros = np.zeros_like(lp_g)
        d_logdelta["s"] = zeros
        d_log1mdelta["s"] = zeros
    else:
        d_logdelta["s"] = w1 * dp0_s
        d_log1mdelta["s"] = -odds_p0 * dp0_s
    return log_delta, log_1mdelta, d_logdelta, d_log1mdelta


def log_normal_u(u, mu, sigma, grad=False):
    """Normal log-density of ``u = log m``, the ZILoN positive part per unit of ``u``."""
    z = (u - mu) / sigma
    val = -0.5 * LOG_2PI - np.log(sigma) - 0.5 * z * z
    if not grad:
        return val
    return val, z / sigma, z * z - 1.0


def log_positive_count(family, m, lp_a, scale, grad=False):
    """log G(m) for the zero-truncated count law, m = 1, 2, ...

    With ``grad`` also returns derivatives with respect to the location
    predictor and to ``log(scale)`` (zeros for ZIP).
    """
    family = MediatorFamily.parse(family)
    m = np.asarray(m, dtype=float)
    lp_a = np.asarray(lp_a, dtype=float)
    log_p0, dp0_a, dp0_s = _log_count_zero(family, lp_a, scale)
    log_1mp0 = _log1mexp(np.minimum(log_p0, -1e-300))
    odds_p0 = np.exp(log_p0 - log_1mp0)
    if family is MediatorFamily.ZIP:
        lam = np.exp(lp_a)
        val = m * lp_a - lam - special.gammaln(m + 1.0) - log_1mp0
        if not grad:
            return val
        d_a = (m - lam) + odds_p0 * dp0_a
        return val, d_a, np.zeros(np.broadcast(m, lp_a).shape)
    mu = np.exp(lp_a)
    r = scale
    x = mu / r
    l1x = np.log1p(x)
    s1, s2 = _log_rising_excess(r, m)
    val = s1 - special.gammaln(m + 1.0) + m * (lp_a - l1x) - r * l1x - log_1mp0
    if not grad:
        return val
    d_a = (m - mu) / (1.0 + x) + odds_p0 * dp0_a
    d_s = s2 - m / (1.0 + x) + r * _x_over_1px_minus_log1p(x)
    d_s = d_s + odds_p0 * dp0_s
    return val, d_a, d_s


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------

def _predictors(params, x, offset_a=0.0, offset_g=0.0):
    x = np.asarray(x, dtype=float)
    lp_a = params.alpha0 + params.alpha1 * x + offset_a
    lp_g = params.gamma0 + params.gamma1 * x + offset_g
    return lp_a, lp_g


def _maybe_scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def link_location(family, params, x, offset=0.0):
    """Location of the positive part: mu (ZILoN, log scale), mu (ZINB) or lambda (ZIP)."""
    family = MediatorFamily.parse(family)
    params.check(family)
    lp_a, _ = _predictors(params, x, offset_a=offset)
    if family is MediatorFamily.ZILON:
        return _maybe_scalar(lp_a)
    return _maybe_scalar(_exp_location(lp_a))


def structural_zero_prob(family, params, x, offset=0.0):
    """Logistic of the zero-inflation link; total zeros for ZILoN, excess zeros otherwise."""
    _, lp_g = _predictors(params, x, offset_g=offset)
    return _maybe_scalar(special.expit(lp_g))


def zero_prob(family, params, x, offset_a=0.0, offset_g=0.0):
    """Probability that the true mediator equals zero at exposure ``x``."""
    family = MediatorFamily.parse(family)
    params.check(family)
    lp_a, lp_g = _predictors(params, x, offset_a, offset_g)
    lp_a, lp_g = np.broadcast_arrays(lp_a, lp_g)
    log_delta, _ = zero_log_terms(family, lp_a, lp_g, params.scale(family))
    return _maybe_scalar(np.exp(log_delta))


def mediator_mean(family, params, x, offset_a=0.0, offset_g=0.0):
    """E(M_x) under the two-part law.

    ZILoN: (1 - Delta) exp(mu + sigma^2 / 2); ZINB: (1 - Delta*) mu;
    ZIP: (1 - Delta*) lambda.
    """
    family = MediatorFamily.parse(family)
    params.check(family)
    lp_a, lp_g = _predictors(params, x, offset_a, offset_g)
    with np.errstate(over="ignore"):
        if family is MediatorFamily.ZILON:
            out = special.expit(-lp_g) * np.exp(lp_a + 0.5 * params.sigma ** 2)
        else:
            out = special.expit(-lp_g) * np.exp(lp_a)
    if not np.all(np.isfinite(out)):
        raise NonFiniteError("mediator mean is not finite")
    return _maybe_scalar(out)


def log_density_positive(family, params, x, m, offset=0.0):
    """log G(m): density (ZILoN) or mass (ZINB, ZIP) of M given M > 0."""
    family = MediatorFamily.parse(family)
    params.check(family)
    m = np.asarray(m, dtype=float)
    if np.any(m <= 0) or not np.all(np.isfinite(m)):
        raise DomainError("positive-part density requires m > 0")
    lp_a, _ = _predictors(params, x, offset_a=offset)
    if family is MediatorFamily.ZILON:
        logm = np.log(m)
        out = log_normal_u(logm, lp_a, params.sigma) - logm
    else:
        if np.any(m != np.round(m)):
            raise DomainError(f"{family.label} mediator values must be integers")
        out = log_positive_count(family, m, lp_a, params.scale(family))
    return _maybe_scalar(out)


def sample_true_mediator(family, params, x, rng, offset_a=0.0, offset_g=0.0):
    """Draw true mediator values at exposure ``x`` (array-valued ``x`` draws one per entry)."""
    family = MediatorFamily.parse(family)
    params.check(family)
    lp_a, lp_g = _predictors(params, x, offset_a, offset_g)
    lp_a, lp_g = np.broadcast_arrays(lp_a, lp_g)
    shape = lp_a.shape
    zero = rng.random(shape) < special.expit(lp_g)
    if family is MediatorFamily.ZILON:
        pos = np.exp(lp_a + params.sigma * rng.standard_normal(shape))
    elif family is MediatorFamily.ZINB:
        mu = _exp_location(lp_a)
        pos = rng.negative_binomial(params.r, params.r / (params.r + mu)).astype(float)
    else:
        pos = rng.poisson(_exp_location(lp_a)).astype(float)
    out = np.where(zero, 0.0, pos)
    return _maybe_scalar(out)
