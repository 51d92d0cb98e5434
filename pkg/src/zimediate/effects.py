"""Closed-form mediation effects and delta-method inference.

With E(M_x) the mediator mean and Delta_x the probability of a true zero,

    NIE1 = (b1 + b5 x2) (E M_x2 - E M_x1)
    NIE2 = (b2 + b4 x2) (Delta_x1 - Delta_x2)
    NDE  = (x2 - x1) {b3 + (1 - Delta_x1) b4 + b5 E M_x1}
    CDE  = (x2 - x1) (b3 + b4 1(m > 0) + b5 m)

and NIE = NIE1 + NIE2. With confounders the effects are averaged over the
supplied confounder rows.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .distributions import mediator_mean, zero_prob
from .params import ParamLayout

EFFECT_NAMES = ("NIE1", "NIE2", "NIE", "NDE", "CDE")
GRADIENT_STEP = 1e-6


@dataclass(frozen=True)
class EffectRequest:
    x1: float
    x2: float
    cde_m: float = None
    ci_level: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError(f"ci_level must lie in (0, 1), got {self.ci_level}")
        for name in ("x1", "x2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.cde_m is not None and self.cde_m < 0:
            raise ValueError("cde_m must be non-negative")


@dataclass(frozen=True)
class Effect:
    estimate: float
    se: float
    ci_lower: float
    ci_upper: float
    p_value: float

    def covers(self, value):
        return self.ci_lower <= value <= self.ci_upper

    def as_dict(self):
        return {"estimate": self.estimate, "se": self.se, "ci_lower": self.ci_lower,
                "ci_upper": self.ci_upper, "p_value": self.p_value}


@dataclass(frozen=True)
class EffectEstimates:
    NIE1: Effect
    NIE2: Effect
    NIE: Effect
    NDE: Effect
    CDE: Effect
    x1: float
    x2: float
    cde_m: float
    ci_level: float
    warnings: tuple = field(default=())

    def __getitem__(self, name):
        if name not in EFFECT_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def as_dict(self):
        out = {"x1": self.x1, "x2": self.x2, "cde_m": self.cde_m, "ci_level": self.ci_level}
        out.update({name: self[name].as_dict() for name in EFFECT_NAMES})
        out["warnings"] = list(self.warnings)
        return out


def _theta_effects(theta, x1, x2, cde_m, z_rows):
    family = theta.family
    link = theta.link
    b0, b1, b2, b3, b4, b5 = theta.outcome.beta
    if z_rows is None or theta.n_confounders == 0:
        off_a = off_g = 0.0
    else:
        z_rows = np.asarray(z_rows, dtype=float)
        off_a = z_rows @ np.asarray(theta.zeta_a)
        off_g = z_rows @ np.asarray(theta.zeta_g)
    em1 = np.mean(mediator_mean(family, link, x1, off_a, off_g))
    em2 = np.mean(mediator_mean(family, link, x2, off_a, off_g))
    d1 = np.mean(zero_prob(family, link, x1, off_a, off_g))
    d2 = np.mean(zero_prob(family, link, x2, off_a, off_g))
    nie1 = (b1 + b5 * x2) * (em2 - em1)
    nie2 = (b2 + b4 * x2) * (d1 - d2)
    nde = (x2 - x1) * (b3 + (1.0 - d1) * b4 + b5 * em1)
    cde = (x2 - x1) * (b3 + b4 * float(cde_m > 0) + b5 * cde_m)
    return np.array([nie1, nie2, nie1 + nie2, nde, cde])


def effects_point(theta, family=None, request=None, z_rows=None):
    """Point values of the five effects as a dict keyed by effect name.

    ``request.cde_m`` must be set (no data are available here for a default).
    """
    if family is not None and theta.family.value != str(getattr(family, "value", family)).lower():
        raise ValueError("theta belongs to a different family")
    if request.cde_m is None:
        raise ValueError("cde_m is required for point effects")
    vals = _theta_effects(theta, float(request.x1), float(request.x2), float(request.cde_m), z_rows)
    return dict(zip(EFFECT_NAMES, (float(v) for v in vals)))


def effect_gradient(vec, layout, request, z_rows=None, step=GRADIENT_STEP):
    """Effects at ``vec`` and their central-difference Jacobian, shape (5, p)."""
    vec = np.asarray(vec, dtype=float)

    def f(v):
        return _theta_effects(layout.unpack(v), request.x1, request.x2, request.cde_m, z_rows)

    h = step * (1.0 + np.abs(vec))
    J = np.empty((len(EFFECT_NAMES), len(vec)))
    for j in range(len(vec)):
        e = np.zeros_like(vec)
        e[j] = h[j]
        J[:, j] = (f(vec + e) - f(vec - e)) / (2.0 * h[j])
    return f(vec), J


def wald(estimate, se, ci_level):
    zcrit = stats.norm.ppf(0.5 + 0.5 * ci_level)
    if not np.isfinite(se):
        return Effect(estimate, float("nan"), float("nan"), float("nan"), float("nan"))
    if se == 0.0:
        p = 1.0 if estimate == 0.0 else 0.0
    else:
        p = float(2.0 * stats.norm.sf(abs(estimate) / se))
    return Effect(float(estimate), float(se), float(estimate - zcrit * se),
                  float(estimate + zcrit * se), p)


def default_cde_m(dataset):
    """Median of the positive observed mediator values."""
    pos = dataset.m[dataset.positive]
    return float(np.median(pos)) if len(pos) else 0.0


def effects_with_inference(fit_result, request, covariance=None):
    """Effects with delta-method standard errors, Wald intervals and two-sided p-values."""
    if request.cde_m is None:
        request = EffectRequest(request.x1, request.x2, default_cde_m(fit_result.dataset),
                                request.ci_level)
    layout = ParamLayout(fit_result.family, fit_result.theta_hat.n_confounders)
    z_rows = fit_result.dataset.z if fit_result.theta_hat.n_confounders else None
    cov = fit_result.covariance if covariance is None else np.asarray(covariance, dtype=float)
    values, J = effect_gradient(fit_result.vector, layout, request, z_rows)
    values[2] = values[0] + values[1]
    var = np.einsum("ij,jk,ik->i", J, cov, J)
    se = np.sqrt(np.clip(var, 0.0, None))
    notes = []
    if request.x1 == request.x2:
        notes.append("x1 equals x2: every effect is zero by construction")
    notes.extend(f"fit: {f}" for f in fit_result.flags)
    effects = {name: wald(v, s, request.ci_level) for name, v, s in zip(EFFECT_NAMES, values, se)}
    return EffectEstimates(**effects, x1=float(request.x1), x2=float(request.x2),
                           cde_m=float(request.cde_m), ci_level=float(request.ci_level),
                           warnings=tuple(notes))
