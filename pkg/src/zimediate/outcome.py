"""Linear outcome model with exposure-mediator interactions and normal errors."""

from dataclasses import dataclass

import numpy as np

from .distributions import LOG_2PI
from .exceptions import DomainError


@dataclass(frozen=True)
class OutcomeParams:
    """Y = b0 + b1 m + b2 1(m>0) + b3 x + b4 x 1(m>0) + b5 x m + eps, eps ~ N(0, delta^2)."""

    beta: tuple
    delta: float

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != 6:
            raise ValueError(f"expected 6 outcome coefficients, got {len(beta)}")
        object.__setattr__(self, "beta", beta)
        if not self.delta > 0:
            raise DomainError(f"delta must be positive, got {self.delta}")


def outcome_mean(params, x, m, offset=0.0):
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise DomainError("mediator values must be non-negative")
    x = np.asarray(x, dtype=float)
    b0, b1, b2, b3, b4, b5 = params.beta
    pos = (m > 0).astype(float)
    out = b0 + b1 * m + b2 * pos + b3 * x + b4 * x * pos + b5 * x * m + offset
    return float(out) if np.ndim(out) == 0 else out


def outcome_logpdf(params, y, x, m, offset=0.0):
    resid = np.asarray(y, dtype=float) - outcome_mean(params, x, m, offset)
    z = resid / params.delta
    out = -0.5 * LOG_2PI - np.log(params.delta) - 0.5 * z * z
    return float(out) if np.ndim(out) == 0 else out
