"""Detection mechanism that turns small positive mediator values into observed zeros."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

DEFAULT_B = 20.0


@dataclass(frozen=True)
class FalseZeroMechanism:
    """P(M* = 0 | M = m) = exp(-eta^2 m) for 0 < m <= B, 1 at m = 0, 0 beyond B.

    Only ``eta ** 2`` matters, so the raw ``eta`` can be optimised without
    constraints.
    """

    eta: float
    B: float = DEFAULT_B

    def __post_init__(self):
        if not self.B > 0:
            raise DomainError(f"detection cap B must be positive, got {self.B}")

    @property
    def rate(self):
        return self.eta * self.eta

    def prob_observed_zero(self, m):
        m = np.asarray(m, dtype=float)
        if np.any(m < 0):
            raise DomainError("mediator values must be non-negative")
        p = np.where(m <= self.B, np.exp(-self.rate * m), 0.0)
        p = np.where(m == 0, 1.0, p)
        return float(p) if p.ndim == 0 else p

    def log_prob_detected(self, m):
        """log P(M* > 0 | M = m) for m > 0; -inf where detection is impossible."""
        m = np.asarray(m, dtype=float)
        with np.errstate(divide="ignore"):
            inside = np.log(-np.expm1(-self.rate * m))
        return np.where(m <= self.B, inside, 0.0)

    def observe(self, m, rng):
        m = np.asarray(m, dtype=float)
        if np.any(m < 0):
            raise DomainError("mediator values must be non-negative")
        hidden = rng.random(m.shape) < self.prob_observed_zero(m)
        out = np.where(hidden, 0.0, m)
        return float(out) if out.ndim == 0 else out


def prob_observed_zero(mech, m):
    return mech.prob_observed_zero(m)


def observe(mech, m, rng):
    return mech.observe(m, rng)
