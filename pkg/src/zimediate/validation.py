"""Input checks for the estimator front end."""

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .data import Dataset
from .exceptions import IngestionError


def check_mediation_data(X, y, mediator, n_features=None):
    """Validate ``(X, y, mediator)`` and wrap them in a :class:`Dataset`.

    Column 0 of ``X`` is the exposure; remaining columns are confounders.
    A 1-d ``X`` is read as the exposure alone.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    X = check_array(X, ensure_2d=True, dtype=np.float64, ensure_all_finite=True)
    y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), dtype=np.float64).ravel()
    m = check_array(np.asarray(mediator, dtype=float).reshape(-1, 1), dtype=np.float64).ravel()
    check_consistent_length(X, y, m)
    if n_features is not None and X.shape[1] != n_features:
        raise IngestionError(f"X has {X.shape[1]} columns, expected {n_features}")
    if np.any(m < 0):
        raise IngestionError("mediator values must be non-negative")
    return Dataset(y, m, X[:, 0], X[:, 1:])
