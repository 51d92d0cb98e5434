"""EM estimation, observed information and the scikit-learn style estimator."""

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, special
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import Dataset
from .distributions import MediatorFamily
from .exceptions import EstimationError, ZIMediationError
from .false_zero import DEFAULT_B
from .likelihood import LikelihoodModel
from .params import ParamLayout, Theta

logger = logging.getLogger(__name__)

BOUNDARY_EPS = 1e-6


@dataclass(frozen=True)
class FitConfig:
    max_em_iters: int = 500
    em_tol: float = 1e-6
    mstep_tol: float = 1e-8
    mstep_max_iter: int = 200
    B: float = DEFAULT_B
    init: object = "heuristic"
    seed: int = 0
    hessian_step: float = 1e-4
    compute_covariance: bool = True

    def __post_init__(self):
        if self.max_em_iters < 1:
            raise ValueError("max_em_iters must be >= 1")
        if not (self.em_tol > 0 and self.mstep_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.B > 0:
            raise ValueError("B must be positive")


@dataclass(frozen=True)
class FitResult:
    """Outcome of one EM fit.

    ``covariance`` is over the packed vector (log delta, log sigma / log r);
    ``se`` reports natural-scale standard errors by name.
    """

    family: MediatorFamily
    theta_hat: Theta
    vector: np.ndarray
    names: tuple
    loglik: float
    loglik_trace: tuple
    covariance: np.ndarray
    converged: bool
    n_iters: int
    aic: float
    k: int
    n_obs: int
    B: float
    flags: tuple = ()
    stalled_steps: int = 0
    dataset: Dataset = field(default=None, repr=False, compare=False)

    @property
    def reliable(self):
        return self.converged and not any(f.startswith("covariance") for f in self.flags)

    @property
    def se(self):
        if self.covariance is None:
            return {k: float("nan") for k in self.theta_hat.as_dict()}
        var = np.clip(np.diag(self.covariance), 0.0, None)
        se_vec = np.sqrt(var)
        natural = self.theta_hat.as_dict()
        out = {}
        for name, s in zip(self.names, se_vec):
            if name == "log_delta":
                out["delta"] = natural["delta"] * s
            elif name == "log_sigma":
                out["sigma"] = natural["sigma"] * s
            elif name == "log_r":
                out["r"] = natural["r"] * s
            else:
                out[name] = s
        return {k: out[k] for k in natural}

    def min_trace_step(self):
        tr = np.asarray(self.loglik_trace)
        return float(np.min(np.diff(tr))) if len(tr) > 1 else 0.0


# ---------------------------------------------------------------------------
# initialisation
# ---------------------------------------------------------------------------

def _lstsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef


def _logistic_fit(X, t, n_iter=50):
    """Plain Newton-Raphson logistic regression with a tiny ridge for separation."""
    w = np.zeros(X.shape[1])
    p_bar = np.clip(t.mean(), 1e-3, 1 - 1e-3)
    w[0] = np.log(p_bar / (1 - p_bar))
    for _ in range(n_iter):
        p = special.expit(X @ w)
        g = X.T @ (t - p) - 1e-4 * w
        H = (X * (p * (1 - p))[:, None]).T @ X + 1e-4 * np.eye(X.shape[1])
        step = np.linalg.solve(H, g)
        w += step
        if np.max(np.abs(step)) < 1e-10:
            break
    return np.clip(w, -15, 15)


def _poisson_fit(X, m, n_iter=50):
    w = np.zeros(X.shape[1])
    w[0] = np.log(max(m.mean(), 1e-3))
    for _ in range(n_iter):
        mu = np.exp(np.clip(X @ w, -30, 30))
        g = X.T @ (m - mu)
        H = (X * mu[:, None]).T @ X + 1e-8 * np.eye(X.shape[1])
        step = np.linalg.solve(H, g)
        w += step
        if np.max(np.abs(step)) < 1e-10:
            break
    return w


def initial_theta(dataset, family, variant="heuristic"):
    """Cheap starting values.

    Outcome coefficients by least squares on the observed mediator, the
    zero link by logistic regression of 1(m* = 0), the location link and
    scale from the positive observed values, and eta so that
    exp(-eta^2 m) = 1/e at the median positive value. ``variant="perturbed"``
    shifts every block to give an independent second start.
    """
    family = MediatorFamily.parse(family)
    d = dataset
    m, x, z, y = d.m, d.x, d.z, d.y
    pos = (m > 0).astype(float)
    Xo = np.column_stack([np.ones_like(x), m, pos, x, x * pos, x * m, z])
    beta = _lstsq(Xo, y)
    resid = y - Xo @ beta
    delta = max(float(np.std(resid)), 1e-3)
    Xl = np.column_stack([np.ones_like(x), x, z])
    gam = _logistic_fit(Xl, 1.0 - pos)
    ip = d.idx_pos
    mp = m[ip]
    Xp = Xl[ip]
    sigma, r = 1.0, 1.0
    if family is MediatorFamily.ZILON:
        alpha = _lstsq(Xp, np.log(mp))
        sigma = max(float(np.std(np.log(mp) - Xp @ alpha)), 0.05)
    else:
        alpha = _poisson_fit(Xp, mp)
        if family is MediatorFamily.ZINB:
            mean, var = mp.mean(), mp.var()
            r = float(np.clip(mean ** 2 / max(var - mean, 1e-6), 0.2, 50.0))
    # detection failure plausible (probability 1/e) at the median positive value
    eta = float(1.0 / np.sqrt(np.median(mp)))
    if variant == "perturbed":
        beta = beta + 0.05 * np.sign(beta + 1e-12) * np.abs(beta)
        delta *= 1.15
        gam = gam + np.r_[0.4, np.zeros(len(gam) - 1)]
        alpha = alpha + np.r_[0.1, np.zeros(len(alpha) - 1)]
        sigma *= 1.2
        r *= 1.5
        eta *= 0.6
    elif variant != "heuristic":
        raise ValueError(f"unknown init variant {variant!r}")
    q = d.n_confounders
    return Theta.build(family, beta[:6], delta, alpha[:2], gam[:2], eta, sigma=sigma, r=r,
                       zeta_y=beta[6:6 + q], zeta_a=alpha[2:], zeta_g=gam[2:])


# ---------------------------------------------------------------------------
# M step
# ---------------------------------------------------------------------------

def standardizing_transform(layout, dataset):
    """Matrix ``T`` with ``theta = T @ phi`` where ``phi`` are coefficients on centred, scaled covariates."""
    T = np.eye(layout.size)
    c, s = float(np.mean(dataset.x)), float(np.std(dataset.x))
    s = s if s > 0 else 1.0
    zc = dataset.z.mean(axis=0)
    zs = dataset.z.std(axis=0)
    zs = np.where(zs > 0, zs, 1.0)
    b0, b1, b2, b3, b4, b5 = range(6)
    for slope, icpt in ((b3, b0), (b4, b2), (b5, b1)):
        T[slope, slope] = 1.0 / s
        T[icpt, slope] = -c / s
    zy = np.arange(layout.zeta_y.start, layout.zeta_y.stop)
    for j, col in enumerate(zy):
        T[col, col] = 1.0 / zs[j]
        T[b0, col] = -zc[j] / zs[j]
    for block, zblock in ((layout.alpha, layout.zeta_a), (layout.gamma, layout.zeta_g)):
        i0, i1 = block.start, block.start + 1
        T[i1, i1] = 1.0 / s
        T[i0, i1] = -c / s
        for j, col in enumerate(range(zblock.start, zblock.stop)):
            T[col, col] = 1.0 / zs[j]
            T[i0, col] = -zc[j] / zs[j]
    return T


LOG_R_CAP = 25.0


class OptimizerCoords:
    """Map between the parameter vector and the optimizer's coordinates ``phi``.

    ``theta = T @ phi`` except that coordinate ``bounded`` (if any) passes
    through ``cap * tanh(. / cap)``, which keeps a log-dispersion from
    running off to infinity when the data are equidispersed.
    """

    def __init__(self, T, bounded=None, cap=LOG_R_CAP):
        self.T = np.asarray(T, dtype=float)
        self.bounded = bounded
        self.cap = cap

    def to_theta(self, phi):
        v = self.T @ phi
        if self.bounded is not None:
            v[self.bounded] = self.cap * np.tanh(v[self.bounded] / self.cap)
        return v

    def to_phi(self, theta):
        v = np.array(theta, dtype=float)
        if self.bounded is not None:
            ratio = np.clip(v[self.bounded] / self.cap, -1 + 1e-12, 1 - 1e-12)
            v[self.bounded] = self.cap * np.arctanh(ratio)
        return np.linalg.solve(self.T, v)

    def pullback(self, phi, grad_theta):
        """Gradient in ``phi`` from the gradient in ``theta``."""
        g = np.array(grad_theta, dtype=float)
        if self.bounded is not None:
            raw = self.T[self.bounded] @ phi
            g[self.bounded] *= 1.0 - np.tanh(raw / self.cap) ** 2
        return self.T.T @ g


def _coords(transform, p):
    if isinstance(transform, OptimizerCoords):
        return transform
    return OptimizerCoords(np.eye(p) if transform is None else transform)


@dataclass
class MStepInfo:
    stalled: bool
    n_iter: int
    q_gain: float
    hess_inv: np.ndarray = None
    message: str = ""


def m_step(q_objective, theta0, transform=None, tol=1e-8, max_iter=200, hess_inv0=None,
           scale=1.0):
    """Maximise ``q_objective`` (returning value and gradient) from ``theta0`` by BFGS.

    Works in ``phi`` with ``theta = transform @ phi`` (``transform`` may also
    be an :class:`OptimizerCoords`). Returns the new vector
    and an :class:`MStepInfo`; when no ascent is found the start is returned
    with ``stalled=True``.
    """
    theta0 = np.asarray(theta0, dtype=float)
    C = _coords(transform, len(theta0))
    phi0 = C.to_phi(theta0)
    q0, _ = q_objective(theta0)
    if not np.isfinite(q0):
        raise EstimationError("Q is not finite at the starting point of the M step")

    def fun(phi):
        try:
            q, g = q_objective(C.to_theta(phi))
        except (ZIMediationError, FloatingPointError, ValueError):
            return np.inf, np.zeros_like(phi)
        if not np.isfinite(q) or not np.all(np.isfinite(g)):
            return np.inf, np.zeros_like(phi)
        return -q / scale, -C.pullback(phi, g) / scale

    options = {"gtol": tol, "maxiter": max_iter}
    if hess_inv0 is not None:
        options["hess_inv0"] = hess_inv0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(fun, phi0, jac=True, method="BFGS", options=options)
    theta1 = C.to_theta(res.x)
    q1 = -res.fun * scale
    if not np.isfinite(q1) or q1 < q0:
        return theta0, MStepInfo(True, int(res.nit), 0.0, None, str(res.message))
    return theta1, MStepInfo(False, int(res.nit), float(q1 - q0), res.hess_inv, str(res.message))


def _initial_hess_inv(q_objective, theta, T, scale):
    """Inverse curvature of -Q/scale in phi coordinates by differencing the gradient."""
    C = _coords(T, len(theta))
    phi = C.to_phi(theta)
    p = len(phi)
    H = np.empty((p, p))
    for j in range(p):
        h = 1e-5 * (1.0 + abs(phi[j]))
        e = np.zeros(p)
        e[j] = h
        gp = C.pullback(phi + e, q_objective(C.to_theta(phi + e))[1])
        gm = C.pullback(phi - e, q_objective(C.to_theta(phi - e))[1])
        H[:, j] = -(gp - gm) / (2 * h) / scale
    H = 0.5 * (H + H.T)
    if not np.all(np.isfinite(H)):
        return None
    w, V = np.linalg.eigh(H)
    w = np.maximum(np.abs(w), 1e-6 * max(np.max(np.abs(w)), 1e-12))
    return _sym_pd((V / w) @ V.T)


def _sym_pd(M):
    """Symmetrised copy of ``M`` if it is numerically positive definite, else None."""
    if M is None:
        return None
    M = 0.5 * (M + M.T)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None
    return M


# ---------------------------------------------------------------------------
# EM driver
# ---------------------------------------------------------------------------

def check_identifiable(dataset):
    if len(dataset.idx_pos) == 0:
        raise EstimationError("all observed mediator values are zero; the positive part is not identifiable")
    if np.ptp(dataset.x) == 0:
        raise EstimationError("the exposure x is constant; link slopes are not identifiable")
    if len(dataset.idx_pos) < 3:
        raise EstimationError("fewer than 3 positive mediator values")


def _resolve_init(dataset, family, init):
    if isinstance(init, Theta):
        if init.family is not family:
            raise ValueError("initial theta belongs to a different family")
        return init
    return initial_theta(dataset, family, variant=init)


def fit(dataset, family, config=None):
    """Maximum likelihood by EM for one mediator family."""
    config = config or FitConfig()
    family = MediatorFamily.parse(family)
    check_identifiable(dataset)
    model = LikelihoodModel(dataset, family, B=config.B)
    layout = model.layout
    vec = _resolve_init(dataset, family, config.init).to_vector()
    bounded = layout.log_scale if family is MediatorFamily.ZINB else None
    T = OptimizerCoords(standardizing_transform(layout, dataset), bounded=bounded)
    n = len(dataset)

    terms = model.terms(vec)
    ll = terms.observed()
    if not np.isfinite(ll):
        raise EstimationError("log-likelihood is not finite at the initial values")
    trace = [ll]
    converged = False
    stalled = 0
    hess_inv = None
    it = 0
    for it in range(1, config.max_em_iters + 1):
        tau0 = terms.tau0()
        plan = terms.plan

        def q_obj(v, tau0=tau0, plan=plan):
            t = model.terms(v, grad=True, plan=plan)
            return t.q_value(tau0), t.q_grad(tau0)

        if hess_inv is None:
            hess_inv = _initial_hess_inv(q_obj, vec, T, n)
        new_vec, info = m_step(q_obj, vec, transform=T, tol=config.mstep_tol,
                               max_iter=config.mstep_max_iter, hess_inv0=hess_inv, scale=n)
        if info.hess_inv is not None:
            hess_inv = _sym_pd(info.hess_inv)
        if info.stalled:
            stalled += 1
            hess_inv = None
        new_terms = model.terms(new_vec)
        new_ll = new_terms.observed()
        if new_ll < ll - 1e-8 and not info.stalled:
            logger.debug("EM step %d decreased log-likelihood by %.3g", it, ll - new_ll)
        trace.append(new_ll)
        vec, terms = new_vec, new_terms
        if abs(new_ll - ll) < config.em_tol:
            converged = True
            ll = new_ll
            break
        ll = new_ll

    theta_hat = layout.unpack(vec)
    flags = list(boundary_flags(theta_hat, dataset))
    if not converged:
        flags.append("em_not_converged")
    cov = None
    if config.compute_covariance:
        cov, cov_flags = covariance_from_information(model, vec, step=config.hessian_step)
        flags.extend(cov_flags)
    k = layout.size
    return FitResult(
        family=family, theta_hat=theta_hat, vector=vec, names=tuple(layout.names),
        loglik=float(ll), loglik_trace=tuple(float(v) for v in trace), covariance=cov,
        converged=converged, n_iters=it, aic=2.0 * k - 2.0 * float(ll), k=k,
        n_obs=n, B=config.B, flags=tuple(flags), stalled_steps=stalled, dataset=dataset)


def with_covariance(result, config=None):
    """Attach the observed-information covariance to a fit made without it."""
    if result.covariance is not None:
        return result
    config = config or FitConfig(B=result.B)
    model = LikelihoodModel(result.dataset, result.family, B=result.B)
    cov, cov_flags = covariance_from_information(model, result.vector, step=config.hessian_step)
    return replace(result, covariance=cov, flags=result.flags + tuple(cov_flags))


def boundary_flags(theta, dataset):
    """Flags for zero-inflation probabilities pinned at 0 or 1 over the observed x."""
    z = dataset.z
    lp = theta.link.gamma0 + theta.link.gamma1 * dataset.x + z @ np.asarray(theta.zeta_g)
    prob = special.expit(lp)
    out = []
    if np.max(prob) < BOUNDARY_EPS or np.min(prob) > 1 - BOUNDARY_EPS:
        out.append("boundary_zero_inflation: gamma standard errors unreliable")
    return out


# ---------------------------------------------------------------------------
# observed information
# ---------------------------------------------------------------------------

def fd_hessian(f, vec, step=1e-4):
    """Central finite-difference Hessian with steps ``step * (1 + |vec_j|)``."""
    vec = np.asarray(vec, dtype=float)
    p = len(vec)
    h = step * (1.0 + np.abs(vec))
    f0 = f(vec)
    H = np.empty((p, p))
    E = np.diag(h)
    fp = np.array([f(vec + E[j]) for j in range(p)])
    fm = np.array([f(vec - E[j]) for j in range(p)])
    for j in range(p):
        H[j, j] = (fp[j] - 2.0 * f0 + fm[j]) / h[j] ** 2
        for k in range(j + 1, p):
            fpp = f(vec + E[j] + E[k])
            fpm = f(vec + E[j] - E[k])
            fmp = f(vec - E[j] + E[k])
            fmm = f(vec - E[j] - E[k])
            H[j, k] = H[k, j] = (fpp - fpm - fmp + fmm) / (4.0 * h[j] * h[k])
    return H


def observed_information(model, vec, step=1e-4, plan=None):
    """Negative Hessian of the observed log-likelihood at ``vec``.

    For ZILoN the integration nodes are frozen at ``vec`` (built with a tight
    tolerance) so that the differenced function is smooth.
    """
    if model.family is MediatorFamily.ZILON and plan is None:
        plan = model.zilon_plan(vec, rtol=1e-12)
    return -fd_hessian(lambda v: model.observed_loglik(v, plan=plan), vec, step=step)


def covariance_from_information(model, vec, step=1e-4):
    """Invert the observed information; pseudo-inverse with a flag when it is not positive definite."""
    flags = []
    try:
        info = observed_information(model, vec, step=step)
    except ZIMediationError as exc:
        p = len(vec)
        return np.full((p, p), np.nan), [f"covariance_failed: {exc}"]
    info = 0.5 * (info + info.T)
    if not np.all(np.isfinite(info)):
        p = len(vec)
        return np.full((p, p), np.nan), ["covariance_failed: non-finite information"]
    w, V = np.linalg.eigh(info)
    tol = 1e-10 * max(np.max(np.abs(w)), 1e-300)
    if np.min(w) <= tol:
        flags.append("covariance_pseudo_inverse: information not positive definite")
        inv_w = np.where(w > tol, 1.0 / np.where(w > tol, w, 1.0), 0.0)
        cov = (V * inv_w) @ V.T
    else:
        cov = (V / w) @ V.T
    cov = 0.5 * (cov + cov.T)
    return cov, flags


# ---------------------------------------------------------------------------
# scikit-learn style front end
# ---------------------------------------------------------------------------

class ZeroInflatedMediation(BaseEstimator):
    """Mediation analysis with a zero-inflated mediator subject to false zeros.

    Parameters
    ----------
    family : {"auto", "zilon", "zinb", "zip"}
        Mediator family; ``"auto"`` fits every admissible family and keeps
        the one with the smallest AIC.
    B : float
        Detection cap: positive values above ``B`` are never observed as zero.
    max_em_iters, em_tol, mstep_tol : EM controls.
    init : {"heuristic", "perturbed"} or Theta
    seed : int
        Recorded for provenance; estimation itself is deterministic.

    ``fit(X, y, mediator)`` takes ``X`` whose first column is the exposure
    and any further columns confounders.
    """

    def __init__(self, family="auto", B=DEFAULT_B, max_em_iters=500, em_tol=1e-6,
                 mstep_tol=1e-8, init="heuristic", seed=0):
        self.family = family
        self.B = B
        self.max_em_iters = max_em_iters
        self.em_tol = em_tol
        self.mstep_tol = mstep_tol
        self.init = init
        self.seed = seed

    def _config(self):
        return FitConfig(max_em_iters=self.max_em_iters, em_tol=self.em_tol,
                         mstep_tol=self.mstep_tol, B=self.B, init=self.init, seed=self.seed)

    def fit(self, X, y, mediator):
        from .selection import select_model
        from .validation import check_mediation_data

        dataset = check_mediation_data(X, y, mediator)
        families = None if self.family == "auto" else [self.family]
        sel = select_model(dataset, self._config(), families=families)
        self.selection_ = sel
        self.fit_result_ = sel.fits[sel.chosen]
        self.family_ = sel.chosen
        self.theta_ = self.fit_result_.theta_hat
        self.n_features_in_ = 1 + dataset.n_confounders
        self.dataset_ = dataset
        return self

    @property
    def aic_(self):
        check_is_fitted(self, "fit_result_")
        return self.fit_result_.aic

    def effects(self, x1, x2, cde_m=None, ci_level=0.95):
        from .effects import EffectRequest, effects_with_inference

        check_is_fitted(self, "fit_result_")
        return effects_with_inference(self.fit_result_, EffectRequest(x1, x2, cde_m, ci_level))

    def predict(self, X, mediator):
        """Conditional outcome mean E(Y | x, m, z) at the fitted parameters."""
        from .outcome import outcome_mean
        from .validation import check_mediation_data

        check_is_fitted(self, "fit_result_")
        X = np.asarray(X, dtype=float)
        ds = check_mediation_data(X, np.zeros(len(X)), mediator, n_features=self.n_features_in_)
        offset = ds.z @ np.asarray(self.theta_.zeta_y) if ds.n_confounders else 0.0
        return outcome_mean(self.theta_.outcome, ds.x, ds.m, offset)

    def score(self, X, y, mediator):
        """Average observed-data log-likelihood per record."""
        from .validation import check_mediation_data

        check_is_fitted(self, "fit_result_")
        ds = check_mediation_data(X, y, mediator, n_features=self.n_features_in_)
        model = LikelihoodModel(ds, self.family_, B=self.B)
        return model.observed_loglik(self.fit_result_.vector) / len(ds)
