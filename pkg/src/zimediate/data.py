"""Containers for observed mediation data."""

from dataclasses import dataclass

import numpy as np

from .exceptions import IngestionError


@dataclass(frozen=True)
class Record:
    y: float
    m_star: float
    x: float
    z: tuple = ()

    @property
    def r(self):
        """Observed-positive indicator 1(m* != 0)."""
        return int(self.m_star > 0)


class Dataset:
    """Column arrays (y, m*, x, z) with the observed-zero split precomputed.

    ``z`` is an ``(n, q)`` array of confounders (``q`` may be 0).
    """

    def __init__(self, y, m, x, z=None, names=None):
        y = np.asarray(y, dtype=float).ravel()
        m = np.asarray(m, dtype=float).ravel()
        x = np.asarray(x, dtype=float).ravel()
        n = len(y)
        if not (len(m) == len(x) == n):
            raise IngestionError(f"inconsistent column lengths: y={n}, m={len(m)}, x={len(x)}")
        if n == 0:
            raise IngestionError("empty dataset")
        if z is None:
            z = np.zeros((n, 0))
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.shape[0] != n:
            raise IngestionError(f"confounder block has {z.shape[0]} rows, expected {n}")
        for label, col in (("y", y), ("m", m), ("x", x)):
            if not np.all(np.isfinite(col)):
                raise IngestionError(f"non-finite values in {label}")
        if not np.all(np.isfinite(z)):
            raise IngestionError("non-finite values in confounders")
        if np.any(m < 0):
            raise IngestionError("mediator values must be non-negative")
        self.y, self.m, self.x, self.z = y, m, x, z
        self.names = dict(names or {})
        for arr in (self.y, self.m, self.x, self.z):
            arr.setflags(write=False)
        self.positive = m > 0
        self.idx_pos = np.flatnonzero(self.positive)
        self.idx_zero = np.flatnonzero(~self.positive)

    @classmethod
    def from_records(cls, records):
        records = list(records)
        z = np.array([rec.z for rec in records], dtype=float).reshape(len(records), -1)
        return cls([r.y for r in records], [r.m_star for r in records],
                   [r.x for r in records], z)

    def __len__(self):
        return len(self.y)

    def __repr__(self):
        return (f"Dataset(n={len(self)}, zeros={len(self.idx_zero)}, "
                f"confounders={self.n_confounders}, integer={self.integer_mediator})")

    @property
    def n_confounders(self):
        return self.z.shape[1]

    @property
    def r(self):
        return self.positive.astype(int)

    @property
    def integer_mediator(self):
        return bool(np.all(self.m == np.round(self.m)))

    @property
    def zero_fraction(self):
        return len(self.idx_zero) / len(self)

    def record(self, i):
        return Record(float(self.y[i]), float(self.m[i]), float(self.x[i]),
                      tuple(float(v) for v in self.z[i]))

    def subset(self, index):
        index = np.asarray(index)
        return Dataset(self.y[index], self.m[index], self.x[index], self.z[index], self.names)
