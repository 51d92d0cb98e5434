"""Log-likelihood pieces, E-step responsibilities and the EM surrogate Q.

Observed records split into two groups. Group 1 has ``m* > 0`` and
contributes ``log(1 - Delta) + l1`` where ``l1`` is the outcome density,
the probability of detecting ``m*`` and the positive-part mediator density.
Group 2 has ``m* = 0`` and is a two-component mixture: a true zero
(``log Delta + l20``) or a positive value hidden by the detection mechanism
(``log(1 - Delta) + l21``). ``l21`` averages over the hidden value: a
Gauss-Kronrod integral over ``u = log m`` on ``(-inf, log B]`` for ZILoN,
a finite sum over ``m = 1..floor(B)`` for the count families.

:class:`LikelihoodModel` evaluates everything for a whole dataset at a
packed parameter vector (see :class:`~zimediate.params.ParamLayout`) and
returns per-record values together with per-record gradient rows.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import distributions as dist
from .data import Dataset
from .distributions import LOG_2PI, MediatorFamily
from .exceptions import DegenerateLikelihoodError, DomainError
from .false_zero import DEFAULT_B
from .params import ParamLayout
from .quadrature import QuadraturePlan, adaptive_log_quad

QUAD_RTOL = 1e-8
TAIL_SDS = 20.0


@dataclass
class Responsibilities:
    tau0: np.ndarray
    tau1: np.ndarray


@dataclass
class Terms:
    """Per-record log-likelihood pieces at one parameter vector.

    ``lp1`` are the group-1 totals; ``a`` and ``b`` the two group-2 mixture
    components (true zero, false zero). ``grad_*`` hold matching gradient
    rows when requested.
    """

    lp1: np.ndarray
    a: np.ndarray
    b: np.ndarray
    parts: dict
    grad_lp1: np.ndarray = None
    grad_a: np.ndarray = None
    grad_b: np.ndarray = None
    plan: QuadraturePlan = None

    def tau0(self):
        """Posterior probability that each observed zero is a true zero."""
        with np.errstate(invalid="ignore"):
            return special.expit(self.a - self.b)

    def observed(self):
        return float(np.sum(self.lp1) + np.sum(np.logaddexp(self.a, self.b)))

    def q_value(self, tau0):
        tau1 = 1.0 - tau0
        # 0 * (-inf) is taken as 0: a component with zero weight does not count
        qa = np.where(tau0 > 0, tau0 * self.a, 0.0)
        qb = np.where(tau1 > 0, tau1 * self.b, 0.0)
        return float(np.sum(self.lp1) + np.sum(qa) + np.sum(qb))

    def q_grad(self, tau0):
        tau1 = 1.0 - tau0
        return (self.grad_lp1.sum(axis=0) + tau0 @ self.grad_a + tau1 @ self.grad_b)

    def score(self):
        return self.q_grad(self.tau0())


class LikelihoodModel:
    """Observed-data likelihood of one mediator family on one dataset."""

    def __init__(self, dataset, family, B=DEFAULT_B, quad_rtol=QUAD_RTOL):
        if not isinstance(dataset, Dataset):
            raise TypeError("dataset must be a Dataset")
        self.data = dataset
        self.family = MediatorFamily.parse(family)
        self.B = float(B)
        if not self.B > 0:
            raise DomainError("B must be positive")
        self.quad_rtol = quad_rtol
        self.layout = ParamLayout(self.family, dataset.n_confounders)
        if self.family.is_count and not dataset.integer_mediator:
            raise DomainError(f"{self.family.label} requires integer mediator values")
        d = dataset
        self.i1, self.i2 = d.idx_pos, d.idx_zero
        self.n1, self.n2 = len(self.i1), len(self.i2)
        self._y1, self._m1, self._x1, self._z1 = d.y[self.i1], d.m[self.i1], d.x[self.i1], d.z[self.i1]
        self._y2, self._x2, self._z2 = d.y[self.i2], d.x[self.i2], d.z[self.i2]
        self._ones1 = np.ones(self.n1)
        self._ones2 = np.ones(self.n2)
        self._plan_cache = None
        if self.family.is_count:
            kmax = int(np.floor(self.B))
            grid = np.arange(1, kmax + 1, dtype=float)
            self._count_plan = QuadraturePlan(
                np.repeat(np.arange(self.n2), kmax), np.tile(grid, self.n2),
                np.zeros(self.n2 * kmax), self.n2)
        else:
            self._count_plan = None

    # -- helpers ------------------------------------------------------------

    def _linear(self, p, x, z):
        lp_a = p.alpha[0] + p.alpha[1] * x + z @ p.zeta_a
        lp_g = p.gamma[0] + p.gamma[1] * x + z @ p.zeta_g
        return lp_a, lp_g

    def _link_rows(self, x, z):
        return np.column_stack([np.ones_like(x), x, z])

    def _fill(self, G, lay, x, z, g_beta_a, g_beta_m, pos, g_logd, g_a, g_g, g_s, g_eta):
        """Write gradient rows given per-record channel derivatives.

        The outcome block gets ``g_beta_a * [1, 0, pos, x, x pos, 0, z]`` plus
        ``g_beta_m * [0, 1, 0, 0, 0, x, 0]``.
        """
        G[:, 0] = g_beta_a
        G[:, 1] = g_beta_m
        G[:, 2] = g_beta_a * pos
        G[:, 3] = g_beta_a * x
        G[:, 4] = g_beta_a * x * pos
        G[:, 5] = g_beta_m * x
        if lay.q:
            G[:, lay.zeta_y] = g_beta_a[:, None] * z
        G[:, lay.log_delta] = g_logd
        rows = self._link_rows(x, z)
        G[:, lay.location_index()] = g_a[:, None] * rows
        G[:, lay.zero_index()] = g_g[:, None] * rows
        if lay.log_scale is not None:
            G[:, lay.log_scale] = g_s
        G[:, lay.eta] = g_eta
        return G

    # -- ZILoN integration plan ----------------------------------------------

    def _zilon_breaks(self, p):
        lp_a, _ = self._linear(p, self._x2, self._z2)
        sigma = p.scale
        hi = np.log(self.B)
        lo = np.minimum(lp_a, hi) - TAIL_SDS * sigma
        b0, b1, b2, b3, b4, b5 = p.beta
        base = b0 + b2 + (b3 + b4) * self._x2 + self._z2 @ p.zeta_y
        slope = b1 + b5 * self._x2
        with np.errstate(divide="ignore", invalid="ignore"):
            m_star = (self._y2 - base) / slope
            ok = np.isfinite(m_star) & (m_star > 0)
            u_star = np.where(ok, np.log(np.where(ok, m_star, 1.0)), hi)
            width = np.where(ok, p.delta / (np.abs(slope) * np.where(ok, m_star, 1.0)), 0.0)
        width = np.minimum(width, sigma)
        cols = [lo, lp_a - 6 * sigma, lp_a - 2 * sigma, lp_a + 2 * sigma,
                u_star - 3 * width, u_star + 3 * width, np.full_like(lo, hi)]
        br = np.column_stack(cols)
        br = np.clip(br, lo[:, None], hi)
        br.sort(axis=1)
        return br

    def _node_data(self, t, owner):
        """Parameter-free per-node arrays: m, x, y and the confounder rows."""
        with np.errstate(over="ignore"):
            m = np.exp(t)
        return m, self._x2[owner], self._y2[owner], self._z2[owner]

    def _plan_data(self, plan):
        if self._plan_cache is None or self._plan_cache[0] is not plan:
            self._plan_cache = (plan, self._node_data(plan.t, plan.owner))
        return self._plan_cache[1]

    def _zilon_node_logf(self, p, t, owner, data=None):
        """Log of the false-zero integrand (outcome x detection x normal in u)."""
        if data is None:
            reps = t.size // max(len(owner), 1)
            data = self._node_data(t.ravel(), np.repeat(owner, reps))
        m, x, y, z = data
        shape = t.shape
        t = t.ravel()
        b0, b1, b2, b3, b4, b5 = p.beta
        base = b0 + b2 + (b3 + b4) * x + z @ p.zeta_y
        mu = p.alpha[0] + p.alpha[1] * x + z @ p.zeta_a
        resid = y - base - (b1 + b5 * x) * m
        zr = resid / p.delta
        with np.errstate(invalid="ignore"):
            out = (-0.5 * LOG_2PI - np.log(p.delta) - 0.5 * zr * zr - p.eta ** 2 * m
                   + dist.log_normal_u(t, mu, p.scale))
        out = np.where(np.isfinite(out), out, -np.inf)
        return out.reshape(shape)

    def zilon_plan(self, vec, rtol=None):
        """Adaptive plan for the false-zero integrals at ``vec`` (ZILoN only)."""
        p = self.layout.split(vec)
        if self.n2 == 0:
            return QuadraturePlan(np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), 0)
        _, plan = adaptive_log_quad(lambda t, o: self._zilon_node_logf(p, t, o),
                                    self._zilon_breaks(p), rtol=rtol or self.quad_rtol)
        return plan

    # -- main evaluation --------------------------------------------------------

    def terms(self, vec, grad=False, plan=None):
        """Evaluate all per-record pieces at ``vec``.

        ``plan`` fixes the ZILoN integration nodes; by default an adaptive
        plan is built at ``vec``.
        """
        lay = self.layout
        fam = self.family
        p = lay.split(vec)
        b0, b1, b2, b3, b4, b5 = p.beta
        delta = p.delta
        eta2 = p.eta ** 2
        parts = {}
        P = lay.size

        # group 1: positive observed mediator
        y, m, x, z = self._y1, self._m1, self._x1, self._z1
        lp_a, lp_g = self._linear(p, x, z)
        mean = b0 + b1 * m + b2 + b3 * x + b4 * x + b5 * x * m + z @ p.zeta_y
        resid = y - mean
        zr = resid / delta
        l_out = -0.5 * LOG_2PI - np.log(delta) - 0.5 * zr * zr
        inside = m <= self.B
        with np.errstate(divide="ignore"):
            l_det = np.where(inside, np.log(-np.expm1(-eta2 * m)), 0.0)
        if np.any(~np.isfinite(l_det)):
            raise DegenerateLikelihoodError(
                "detection probability is zero for a positive observed mediator (eta = 0)")
        res1 = dist.zero_log_terms(fam, lp_a, lp_g, p.scale, grad=grad)
        log1md = res1[1]
        if fam is MediatorFamily.ZILON:
            logm = np.log(m)
            lg = dist.log_normal_u(logm, lp_a, p.scale, grad=grad)
            if grad:
                lg, dg_a, dg_s = lg
            l_med = lg - logm
        else:
            lg = dist.log_positive_count(fam, m, lp_a, p.scale, grad=grad)
            if grad:
                lg, dg_a, dg_s = lg
            l_med = lg
        lp1 = log1md + l_out + l_det + l_med
        parts.update(l_out1=l_out, l_det1=l_det, l_med1=l_med, log1mdelta1=log1md)
        G1 = None
        if grad:
            d1m = res1[3]
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                g_eta = np.where(inside, 2.0 * p.eta * m / np.expm1(eta2 * m), 0.0)
            G1 = self._fill(np.zeros((self.n1, P)), lay, x, z,
                            resid / delta ** 2, resid * m / delta ** 2, self._ones1,
                            -1.0 + zr * zr, d1m["a"] + dg_a, d1m["g"], d1m["s"] + dg_s, g_eta)

        # group 2: observed zeros
        y, x, z = self._y2, self._x2, self._z2
        lp_a, lp_g = self._linear(p, x, z)
        res2 = dist.zero_log_terms(fam, lp_a, lp_g, p.scale, grad=grad)
        logd, log1md = res2[0], res2[1]
        resid0 = y - (b0 + b3 * x + z @ p.zeta_y)
        zr0 = resid0 / delta
        l20 = -0.5 * LOG_2PI - np.log(delta) - 0.5 * zr0 * zr0

        if fam is MediatorFamily.ZILON:
            if plan is None:
                plan = self.zilon_plan(vec)
            owner = plan.owner
            node = self._plan_data(plan)
            mnode = node[0]
            logf = self._zilon_node_logf(p, plan.t, owner, node) if self.n2 else np.zeros(0)
        else:
            plan = self._count_plan
            owner = plan.owner
            mnode = plan.t
            base = (b0 + b2 + (b3 + b4) * x + z @ p.zeta_y)[owner]
            slope = (b1 + b5 * x)[owner]
            rk = y[owner] - base - slope * mnode
            lg = dist.log_positive_count(fam, mnode, lp_a[owner], p.scale, grad=grad)
            if grad:
                lg, dk_a, dk_s = lg
            zk = rk / delta
            logf = -0.5 * LOG_2PI - np.log(delta) - 0.5 * zk * zk - eta2 * mnode + lg
        l21, post = plan.log_integrate(logf)
        a = logd + l20
        b = log1md + l21
        parts.update(l20=l20, l21=l21, logdelta2=logd, log1mdelta2=log1md)
        Ga = Gb = None
        if grad:
            dd, d1m = res2[2], res2[3]
            zeros = np.zeros(self.n2)
            Ga = self._fill(np.zeros((self.n2, P)), lay, x, z,
                            resid0 / delta ** 2, zeros, zeros, -1.0 + zr0 * zr0,
                            dd["a"], dd["g"], dd["s"], zeros)
            base = (b0 + b2 + (b3 + b4) * x + z @ p.zeta_y)[owner]
            slope = (b1 + b5 * x)[owner]
            rk = y[owner] - base - slope * mnode
            if fam is MediatorFamily.ZILON:
                zu = (plan.t - lp_a[owner]) / p.scale
                rows = (rk, rk * mnode, rk * rk, mnode, zu, zu * zu - 1.0)
            else:
                rows = (rk, rk * mnode, rk * rk, mnode, dk_a, dk_s)
            e_r, e_rm, e_r2, e_m, e_a, e_s = plan.expectations(post, np.stack(rows))
            if fam is MediatorFamily.ZILON:
                e_a = e_a / p.scale
            Gb = self._fill(np.zeros((self.n2, P)), lay, x, z,
                            e_r / delta ** 2, e_rm / delta ** 2, self._ones2,
                            -1.0 + e_r2 / delta ** 2, d1m["a"] + e_a, d1m["g"],
                            d1m["s"] + e_s, -2.0 * p.eta * e_m)
        return Terms(lp1, a, b, parts, G1, Ga, Gb,
                     plan if fam is MediatorFamily.ZILON else None)

    # -- scalar summaries ---------------------------------------------------------

    def observed_loglik(self, vec, plan=None):
        return self.terms(vec, plan=plan).observed()

    def per_record_loglik(self, vec, plan=None):
        t = self.terms(vec, plan=plan)
        out = np.empty(len(self.data))
        out[self.i1] = t.lp1
        out[self.i2] = np.logaddexp(t.a, t.b)
        return out

    def score(self, vec, plan=None):
        return self.terms(vec, grad=True, plan=plan).score()

    def q_function(self, vec, vec0, plan=None):
        tau0 = self.terms(vec0, plan=plan).tau0()
        return self.terms(vec, plan=plan).q_value(tau0)


# ---------------------------------------------------------------------------
# record-level and dataset-level functional API
# ---------------------------------------------------------------------------

def _one(theta, record, B):
    ds = Dataset([record.y], [record.m_star], [record.x],
                 np.asarray(record.z, dtype=float).reshape(1, -1))
    return LikelihoodModel(ds, theta.family, B=B), theta.to_vector()


def loglik_pos(theta, record, B=DEFAULT_B):
    """Group-1 contribution: outcome + detection + positive-part mediator (excludes log(1 - Delta))."""
    if not record.m_star > 0:
        raise DomainError("loglik_pos requires a positive observed mediator")
    model, vec = _one(theta, record, B)
    t = model.terms(vec)
    return float(t.parts["l_out1"][0] + t.parts["l_det1"][0] + t.parts["l_med1"][0])


def loglik_true_zero(theta, record, B=DEFAULT_B):
    if record.m_star != 0:
        raise DomainError("loglik_true_zero requires an observed zero")
    model, vec = _one(theta, record, B)
    return float(model.terms(vec).parts["l20"][0])


def loglik_false_zero(theta, record, B=DEFAULT_B):
    if record.m_star != 0:
        raise DomainError("loglik_false_zero requires an observed zero")
    model, vec = _one(theta, record, B)
    return float(model.terms(vec).parts["l21"][0])


def responsibilities(theta, record, B=DEFAULT_B):
    if record.m_star != 0:
        raise DomainError("responsibilities are defined for observed zeros only")
    model, vec = _one(theta, record, B)
    tau0 = float(model.terms(vec).tau0()[0])
    return Responsibilities(tau0, 1.0 - tau0)


def q_function(theta, theta0, dataset, B=DEFAULT_B):
    if theta.family is not theta0.family:
        raise ValueError("theta and theta0 must belong to the same family")
    model = LikelihoodModel(dataset, theta.family, B=B)
    return model.q_function(theta.to_vector(), theta0.to_vector())


def observed_loglik(theta, dataset, B=DEFAULT_B):
    return LikelihoodModel(dataset, theta.family, B=B).observed_loglik(theta.to_vector())
