import numpy as np
import pytest

from conftest import THETAS, simulate_data
from zimediate import selection
from zimediate.data import Dataset
from zimediate.distributions import MediatorFamily
from zimediate.estimator import FitConfig
from zimediate.exceptions import IngestionError, SelectionError
from zimediate.likelihood import LikelihoodModel
from zimediate.selection import admissible_families, select_model

F = MediatorFamily


@pytest.fixture(scope="module")
def zip_selection():
    ds = simulate_data(THETAS["zip"], 500, 41)
    return ds, select_model(ds)


def test_all_three_fitted_on_counts(zip_selection):
    _, sel = zip_selection
    assert set(sel.fits) == {F.ZIP, F.ZINB, F.ZILON}
    assert [row.family for row in sel.table] == [F.ZIP, F.ZINB, F.ZILON]


def test_aic_recomputed_from_loglik(zip_selection):
    ds, sel = zip_selection
    for fam, res in sel.fits.items():
        ll = LikelihoodModel(ds, fam).observed_loglik(res.vector)
        assert res.aic == pytest.approx(2 * res.k - 2 * ll, abs=1e-8)


def test_k_is_parameter_dimension(zip_selection):
    _, sel = zip_selection
    assert {f: r.k for f, r in sel.fits.items()} == {F.ZIP: 12, F.ZINB: 13, F.ZILON: 13}


def test_chosen_minimises_aic(zip_selection):
    _, sel = zip_selection
    best = min(sel.fits.values(), key=lambda r: r.aic)
    assert sel.chosen is best.family
    assert sel.chosen_fit.covariance is not None
    others = [r for f, r in sel.fits.items() if f is not sel.chosen]
    assert all(r.covariance is None for r in others)


def test_non_integer_mediator_only_zilon():
    ds = simulate_data(THETAS["zilon"], 300, 42)
    fams, notes = admissible_families(ds)
    assert fams == [F.ZILON]
    assert notes
    sel = select_model(ds)
    assert sel.chosen is F.ZILON and list(sel.fits) == [F.ZILON]


def test_count_family_requested_on_non_integer():
    ds = simulate_data(THETAS["zilon"], 50, 43)
    with pytest.raises(IngestionError):
        admissible_families(ds, ["zinb"])


def test_single_family_request():
    ds = simulate_data(THETAS["zip"], 300, 44)
    sel = select_model(ds, families=["zip"])
    assert list(sel.fits) == [F.ZIP]
    assert sel.chosen is F.ZIP


class _Stub:
    def __init__(self, family, k, aic, converged=True):
        self.family, self.k, self.aic, self.converged = family, k, aic, converged
        self.loglik = (2 * k - aic) / 2


def _patched(monkeypatch, table):
    def fake_fit(dataset, family, config=None):
        return table[family]
    monkeypatch.setattr(selection, "fit", fake_fit)
    monkeypatch.setattr(selection, "with_covariance", lambda r, c=None: r)


def test_tie_prefers_fewer_parameters(monkeypatch):
    ds = simulate_data(THETAS["zip"], 50, 45)
    _patched(monkeypatch, {F.ZIP: _Stub(F.ZIP, 12, 100.0), F.ZINB: _Stub(F.ZINB, 13, 100.0),
                           F.ZILON: _Stub(F.ZILON, 13, 100.0)})
    sel = select_model(ds)
    assert sel.chosen is F.ZIP
    assert any("tie" in n for n in sel.notes)


def test_tie_between_equal_k_uses_family_order(monkeypatch):
    ds = simulate_data(THETAS["zip"], 50, 46)
    _patched(monkeypatch, {F.ZIP: _Stub(F.ZIP, 12, 120.0), F.ZINB: _Stub(F.ZINB, 13, 100.0),
                           F.ZILON: _Stub(F.ZILON, 13, 100.0)})
    assert select_model(ds).chosen is F.ZINB


def test_non_converged_only_when_nothing_converged(monkeypatch):
    ds = simulate_data(THETAS["zip"], 50, 47)
    _patched(monkeypatch, {F.ZIP: _Stub(F.ZIP, 12, 90.0, converged=False),
                           F.ZINB: _Stub(F.ZINB, 13, 100.0), F.ZILON: _Stub(F.ZILON, 13, 110.0)})
    assert select_model(ds).chosen is F.ZINB


def test_failures_recorded(monkeypatch):
    from zimediate.exceptions import EstimationError

    ds = simulate_data(THETAS["zip"], 50, 48)

    def fake_fit(dataset, family, config=None):
        if family is F.ZIP:
            return _Stub(F.ZIP, 12, 100.0)
        raise EstimationError("boom")

    monkeypatch.setattr(selection, "fit", fake_fit)
    monkeypatch.setattr(selection, "with_covariance", lambda r, c=None: r)
    sel = select_model(ds)
    assert sel.chosen is F.ZIP
    statuses = {row.family: row.status for row in sel.table}
    assert statuses[F.ZINB] == "failed: boom"


def test_all_fail_raises():
    ds = Dataset(np.arange(6.0), np.zeros(6), np.arange(6.0))
    with pytest.raises(SelectionError):
        select_model(ds, FitConfig())
