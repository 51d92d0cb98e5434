"""Vectorised adaptive Gauss-Kronrod (G7/K15) quadrature in log space.

Many one-dimensional integrals are refined simultaneously: every panel of
every integrand is evaluated in one array operation per round, and only
panels whose Kronrod/Gauss discrepancy is too large are bisected. Each
integrand is rescaled by the largest log-integrand value seen so far, so
results are returned as ``log(integral)`` without underflow.

The accepted panels form a :class:`QuadraturePlan` (flattened nodes and log
weights) that can be re-used at nearby parameter values; the likelihood
freezes a plan when it needs a smooth function of the parameters.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import QuadratureError

# QUADPACK qk15 abscissae (positive half, descending) and weights.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# full symmetric 15-point rule on [-1, 1]
NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[[9, 11, 13]] = _WG[2::-1]


@dataclass(frozen=True)
class QuadraturePlan:
    """Accepted nodes of an adaptive run.

    ``owner[k]`` is the integrand index of node ``t[k]`` whose log weight is
    ``logw[k]``; ``n`` is the number of integrands.
    """

    owner: np.ndarray
    t: np.ndarray
    logw: np.ndarray
    n: int

    @property
    def n_nodes(self):
        return len(self.t)

    @cached_property
    def _starts(self):
        """Segment starts when every integrand owns a contiguous, non-empty run of nodes."""
        if len(self.owner) == 0:
            return None
        counts = np.bincount(self.owner, minlength=self.n)
        if np.any(counts == 0) or np.any(np.diff(self.owner) < 0):
            return None
        return np.concatenate([[0], np.cumsum(counts)[:-1]])

    def log_integrate(self, logf_nodes):
        """log of sum_k w_k exp(logf_k) per integrand, plus the normalised node weights."""
        a = self.logw + logf_nodes
        if self._starts is not None:
            peak = np.maximum.reduceat(a, self._starts)
        else:
            peak = np.full(self.n, -np.inf)
            np.maximum.at(peak, self.owner, a)
        safe = np.where(np.isfinite(peak), peak, 0.0)
        rel = np.exp(a - safe[self.owner])
        s = np.bincount(self.owner, weights=rel, minlength=self.n)
        with np.errstate(divide="ignore"):
            out = safe + np.log(s)
        out = np.where(np.isfinite(peak), out, -np.inf)
        with np.errstate(invalid="ignore"):
            post = np.where(s[self.owner] > 0, rel / s[self.owner], 0.0)
        return out, post

    def expectation(self, post, values):
        """Per-integrand average of ``values`` under the normalised node weights."""
        return np.bincount(self.owner, weights=post * values, minlength=self.n)

    def expectations(self, post, values):
        """``expectation`` for each row of ``values`` (shape ``(k, n_nodes)``) at once."""
        values = np.asarray(values)
        if self._starts is None:
            return np.stack([self.expectation(post, v) for v in values])
        return np.add.reduceat(values * post, self._starts, axis=1)


def _panel_nodes(a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return mid[:, None] + half[:, None] * NODES[None, :], half


def adaptive_log_quad(log_f, breaks, rtol=1e-10, max_rounds=40, min_width=1e-13,
                      raise_on_failure=True):
    """Integrate ``exp(log_f)`` over ``[breaks[i, 0], breaks[i, -1]]`` for each row ``i``.

    Parameters
    ----------
    log_f : callable
        ``log_f(t, owner)`` with ``t`` of shape ``(P, 15)`` and ``owner`` of
        shape ``(P,)`` returns the log-integrand at ``t`` for integrand
        ``owner[p]``; ``-inf`` is allowed.
    breaks : ndarray, shape (n, k)
        Sorted panel boundaries for each integrand (initial subdivision).
    rtol : float
        Relative tolerance on each integral; a panel is accepted once its
        error estimate is below ``rtol * I * max(width / W, 1/64)``.

    Returns
    -------
    log_integral : ndarray, shape (n,)
    plan : QuadraturePlan
    """
    breaks = np.asarray(breaks, dtype=float)
    n = breaks.shape[0]
    total_width = breaks[:, -1] - breaks[:, 0]
    if np.any(total_width < 0):
        raise ValueError("breakpoints must be sorted")
    a = breaks[:, :-1].ravel()
    b = breaks[:, 1:].ravel()
    owner = np.repeat(np.arange(n), breaks.shape[1] - 1)
    keep = b > a
    a, b, owner = a[keep], b[keep], owner[keep]

    shift = np.full(n, -np.inf)
    acc = np.zeros(n)
    acc_err = np.zeros(n)
    plan_owner, plan_t, plan_logw = [], [], []
    failed = np.zeros(n, dtype=bool)

    for rnd in range(max_rounds + 1):
        if len(a) == 0:
            break
        t, half = _panel_nodes(a, b)
        L = log_f(t, owner)
        new_peak = np.full(n, -np.inf)
        np.maximum.at(new_peak, owner, L.max(axis=1))
        upd = new_peak > shift
        if np.any(upd):
            rescale = np.where(np.isfinite(shift[upd]),
                               np.exp(shift[upd] - new_peak[upd]), 0.0)
            acc[upd] *= rescale
            acc_err[upd] *= rescale
            shift[upd] = new_peak[upd]
        sh = np.where(np.isfinite(shift), shift, 0.0)
        vals = np.exp(L - sh[owner][:, None])
        k_est = half * (vals @ KRONROD_WEIGHTS)
        g_est = half * (vals @ GAUSS_WEIGHTS)
        err = np.abs(k_est - g_est)
        total = acc + np.bincount(owner, weights=k_est, minlength=n)
        frac = np.maximum((b - a) / np.where(total_width > 0, total_width, 1.0)[owner], 1.0 / 64)
        ok = err <= rtol * total[owner] * frac
        ok |= ~np.isfinite(shift[owner])          # integrand identically zero so far
        tiny = (b - a) < min_width
        last = rnd == max_rounds
        if last or np.any(tiny & ~ok):
            bad = (~ok) & (tiny | last)
            failed[np.unique(owner[bad])] = True
            ok |= bad
        acc += np.bincount(owner[ok], weights=k_est[ok], minlength=n)
        acc_err += np.bincount(owner[ok], weights=err[ok], minlength=n)
        if np.any(ok):
            oo = owner[ok]
            plan_owner.append(np.repeat(oo, 15))
            plan_t.append(t[ok].ravel())
            with np.errstate(divide="ignore"):
                plan_logw.append((np.log(half[ok])[:, None] + np.log(KRONROD_WEIGHTS)[None, :]).ravel())
        rej = ~ok
        mid = 0.5 * (a[rej] + b[rej])
        a = np.concatenate([a[rej], mid])
        b = np.concatenate([mid, b[rej]])
        owner = np.concatenate([owner[rej], owner[rej]])

    if np.any(failed) and raise_on_failure:
        idx = np.flatnonzero(failed)
        raise QuadratureError(
            f"adaptive quadrature did not reach rtol={rtol:g} for {len(idx)} integrand(s); "
            f"first indices {idx[:5].tolist()}", records=idx)

    with np.errstate(divide="ignore"):
        log_int = np.where(acc > 0, shift + np.log(np.where(acc > 0, acc, 1.0)), -np.inf)
    if plan_owner:
        po = np.concatenate(plan_owner)
        order = np.argsort(po, kind="stable")
        plan = QuadraturePlan(po[order], np.concatenate(plan_t)[order],
                              np.concatenate(plan_logw)[order], n)
    else:
        plan = QuadraturePlan(np.zeros(0, dtype=int), np.zeros(0), np.zeros(0), n)
    return log_int, plan
