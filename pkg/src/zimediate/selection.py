"""Family selection by AIC."""

import logging
from dataclasses import dataclass, field, replace

from .distributions import MediatorFamily
from .estimator import FitConfig, fit, with_covariance
from .exceptions import IngestionError, SelectionError, ZIMediationError

logger = logging.getLogger(__name__)

# tie-break order after parameter count
FAMILY_ORDER = (MediatorFamily.ZIP, MediatorFamily.ZINB, MediatorFamily.ZILON)
AIC_TIE_TOL = 1e-8


@dataclass(frozen=True)
class AICRow:
    family: MediatorFamily
    k: int = None
    loglik: float = None
    aic: float = None
    converged: bool = False
    status: str = "ok"

    def as_dict(self):
        return {"family": self.family.label, "k": self.k, "loglik": self.loglik,
                "aic": self.aic, "converged": self.converged, "status": self.status}


@dataclass(frozen=True)
class SelectionResult:
    chosen: MediatorFamily
    fits: dict
    table: tuple
    notes: tuple = field(default=())

    @property
    def chosen_fit(self):
        return self.fits[self.chosen]


def admissible_families(dataset, families=None):
    """Families to fit; count families need an integer-valued mediator."""
    notes = []
    if families is None:
        wanted = list(FAMILY_ORDER)
    else:
        wanted = [MediatorFamily.parse(f) for f in families]
    if not dataset.integer_mediator:
        counts = [f for f in wanted if f.is_count]
        if families is not None and counts:
            raise IngestionError(
                f"{counts[0].label} requires integer mediator values; the mediator has non-integer entries")
        if counts:
            notes.append("non-integer mediator: ZINB and ZIP skipped")
        wanted = [f for f in wanted if not f.is_count]
    return wanted, notes


def _rank_key(fit_result):
    return (fit_result.k, FAMILY_ORDER.index(fit_result.family))


def select_model(dataset, config=None, families=None):
    """Fit each admissible family and keep the smallest AIC.

    Fits that raise are excluded with their error in the table. Fits that
    stop at the iteration cap only compete when no family converged. Only
    the chosen fit gets a covariance matrix.
    """
    config = config or FitConfig()
    wanted, notes = admissible_families(dataset, families)
    lean = replace(config, compute_covariance=False)
    fits, rows = {}, []
    for fam in wanted:
        try:
            res = fit(dataset, fam, lean)
        except ZIMediationError as exc:
            logger.info("%s fit failed: %s", fam.label, exc)
            rows.append(AICRow(fam, status=f"failed: {exc}"))
            continue
        fits[fam] = res
        rows.append(AICRow(fam, res.k, res.loglik, res.aic, res.converged,
                           "ok" if res.converged else "not converged"))
    if not fits:
        raise SelectionError("every candidate family failed: "
                             + "; ".join(f"{r.family.label}: {r.status}" for r in rows))
    pool = [f for f in fits.values() if f.converged] or list(fits.values())
    best_aic = min(f.aic for f in pool)
    tied = [f for f in pool if f.aic - best_aic <= AIC_TIE_TOL]
    chosen = min(tied, key=_rank_key).family
    if config.compute_covariance:
        fits[chosen] = with_covariance(fits[chosen], config)
    if len(tied) > 1:
        notes.append("AIC tie broken by parameter count and family order")
    return SelectionResult(chosen, fits, tuple(rows), tuple(notes))
