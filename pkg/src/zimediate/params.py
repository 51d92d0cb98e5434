"""Full parameter vector of the mediation model and its unconstrained packing."""

from dataclasses import dataclass, field, replace
from types import SimpleNamespace

import numpy as np

from .distributions import LinkParams, MediatorFamily
from .outcome import OutcomeParams


@dataclass(frozen=True)
class Theta:
    """Outcome coefficients, mediator link parameters and the false-zero parameter.

    ``zeta_y``, ``zeta_a`` and ``zeta_g`` hold confounder coefficients in the
    outcome, location link and zero-inflation link respectively (one entry
    per confounder column, empty without confounders).
    """

    family: MediatorFamily
    outcome: OutcomeParams
    link: LinkParams
    eta: float
    zeta_y: tuple = field(default=())
    zeta_a: tuple = field(default=())
    zeta_g: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "family", MediatorFamily.parse(self.family))
        for name in ("zeta_y", "zeta_a", "zeta_g"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.zeta_y) == len(self.zeta_a) == len(self.zeta_g):
            raise ValueError("confounder coefficient blocks must have equal length")
        self.link.check(self.family)

    @property
    def n_confounders(self):
        return len(self.zeta_y)

    @property
    def layout(self):
        return ParamLayout(self.family, self.n_confounders)

    def to_vector(self):
        return self.layout.pack(self)

    def with_eta(self, eta):
        return replace(self, eta=float(eta))

    @classmethod
    def from_vector(cls, family, vec, n_confounders=0):
        return ParamLayout(family, n_confounders).unpack(vec)

    @classmethod
    def build(cls, family, beta, delta, alpha, gamma, eta, sigma=1.0, r=1.0,
              zeta_y=(), zeta_a=(), zeta_g=()):
        """Convenience constructor from flat coefficient tuples."""
        link = LinkParams(float(alpha[0]), float(alpha[1]), float(gamma[0]), float(gamma[1]),
                          sigma=float(sigma), r=float(r))
        return cls(MediatorFamily.parse(family), OutcomeParams(tuple(beta), float(delta)), link,
                   float(eta), tuple(zeta_y), tuple(zeta_a), tuple(zeta_g))

    def as_dict(self):
        """Natural-scale parameters keyed by name, in layout order."""
        out = {f"beta{j}": b for j, b in enumerate(self.outcome.beta)}
        out.update({f"beta_z{j + 1}": v for j, v in enumerate(self.zeta_y)})
        out["delta"] = self.outcome.delta
        out["alpha0"], out["alpha1"] = self.link.alpha0, self.link.alpha1
        out.update({f"alpha_z{j + 1}": v for j, v in enumerate(self.zeta_a)})
        out["gamma0"], out["gamma1"] = self.link.gamma0, self.link.gamma1
        out.update({f"gamma_z{j + 1}": v for j, v in enumerate(self.zeta_g)})
        if self.family is MediatorFamily.ZILON:
            out["sigma"] = self.link.sigma
        elif self.family is MediatorFamily.ZINB:
            out["r"] = self.link.r
        out["eta"] = self.eta
        return out


class ParamLayout:
    """Index map of the unconstrained vector.

    Order: beta0..beta5, outcome confounders, log(delta), alpha0, alpha1,
    location confounders, gamma0, gamma1, zero-link confounders,
    log(sigma) or log(r) when the family has a scale, eta.
    """

    def __init__(self, family, n_confounders=0):
        self.family = MediatorFamily.parse(family)
        self.q = int(n_confounders)
        q = self.q
        pos = 0

        def take(k):
            nonlocal pos
            s = slice(pos, pos + k)
            pos += k
            return s

        self.beta = take(6)
        self.zeta_y = take(q)
        self.log_delta = pos
        pos += 1
        self.alpha = take(2)
        self.zeta_a = take(q)
        self.gamma = take(2)
        self.zeta_g = take(q)
        if self.family.has_scale:
            self.log_scale = pos
            pos += 1
        else:
            self.log_scale = None
        self.eta = pos
        pos += 1
        self.size = pos

    def __eq__(self, other):
        return isinstance(other, ParamLayout) and (self.family, self.q) == (other.family, other.q)

    def __len__(self):
        return self.size

    @property
    def names(self):
        q = self.q
        names = [f"beta{j}" for j in range(6)] + [f"beta_z{j + 1}" for j in range(q)]
        names += ["log_delta", "alpha0", "alpha1"] + [f"alpha_z{j + 1}" for j in range(q)]
        names += ["gamma0", "gamma1"] + [f"gamma_z{j + 1}" for j in range(q)]
        if self.family is MediatorFamily.ZILON:
            names.append("log_sigma")
        elif self.family is MediatorFamily.ZINB:
            names.append("log_r")
        names.append("eta")
        return names

    # blocks of the outcome design and the two link designs
    def outcome_index(self):
        return np.r_[np.arange(6), np.arange(self.zeta_y.start, self.zeta_y.stop)]

    def location_index(self):
        return np.r_[np.arange(self.alpha.start, self.alpha.stop),
                     np.arange(self.zeta_a.start, self.zeta_a.stop)]

    def zero_index(self):
        return np.r_[np.arange(self.gamma.start, self.gamma.stop),
                     np.arange(self.zeta_g.start, self.zeta_g.stop)]

    def pack(self, theta):
        if theta.family is not self.family or theta.n_confounders != self.q:
            raise ValueError("theta does not match this layout")
        v = np.empty(self.size)
        v[self.beta] = theta.outcome.beta
        v[self.zeta_y] = theta.zeta_y
        v[self.log_delta] = np.log(theta.outcome.delta)
        link = theta.link
        v[self.alpha] = (link.alpha0, link.alpha1)
        v[self.zeta_a] = theta.zeta_a
        v[self.gamma] = (link.gamma0, link.gamma1)
        v[self.zeta_g] = theta.zeta_g
        if self.log_scale is not None:
            v[self.log_scale] = np.log(link.scale(self.family))
        v[self.eta] = theta.eta
        return v

    def split(self, vec):
        """View of a vector as named arrays (natural scale for delta and the scale)."""
        vec = np.asarray(vec, dtype=float)
        scale = None if self.log_scale is None else float(np.exp(vec[self.log_scale]))
        return SimpleNamespace(
            beta=vec[self.beta], zeta_y=vec[self.zeta_y],
            delta=float(np.exp(vec[self.log_delta])),
            alpha=vec[self.alpha], zeta_a=vec[self.zeta_a],
            gamma=vec[self.gamma], zeta_g=vec[self.zeta_g],
            scale=scale, eta=float(vec[self.eta]))

    def unpack(self, vec):
        p = self.split(vec)
        sigma = p.scale if self.family is MediatorFamily.ZILON else 1.0
        r = p.scale if self.family is MediatorFamily.ZINB else 1.0
        return Theta.build(self.family, p.beta, p.delta, p.alpha, p.gamma, p.eta,
                           sigma=sigma, r=r, zeta_y=p.zeta_y, zeta_a=p.zeta_a, zeta_g=p.zeta_g)
