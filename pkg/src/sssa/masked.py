"""Partially observed matrices and the mask algebra built on them.

An :class:`ObservedMatrix` is a dense ``D x N`` array of values together with
a boolean mask marking which entries were actually observed.  Unobserved
entries always hold the fill value 0.0 internally; NaN is accepted on input
as an I/O representation of "missing" but never stored.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ObservedMatrix",
    "ColumnSupport",
    "split",
    "overwrite_missing",
    "column_supports",
]


class ObservedMatrix:
    """Dense matrix with a boolean observation mask.

    Parameters
    ----------
    values : (D, N) array_like
        Entry values.  Positions where ``mask`` is False may be NaN or any
        finite number; they are replaced by 0.0 on construction.
    mask : (D, N) array_like of bool
        True marks an observed entry.

    Raises
    ------
    ValueError
        If shapes disagree, an observed entry is non-finite, or some column
        has no observed entry at all (the self-expressive fit for such a
        column would be undetermined).

    Notes
    -----
    Instances are immutable: the backing arrays are marked read-only, so an
    ObservedMatrix can be shared freely across concurrent workers.
    """

    __slots__ = ("values", "mask")

    def __init__(self, values, mask):
        values = np.array(values, dtype=np.float64)
        mask = np.array(mask, dtype=bool)
        if values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {values.shape}")
        if mask.shape != values.shape:
            raise ValueError(
                f"mask shape {mask.shape} does not match values shape {values.shape}"
            )
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed entries must be finite")
        empty = ~mask.any(axis=0)
        if empty.any():
            cols = np.flatnonzero(empty)
            raise ValueError(
                f"columns {cols.tolist()} have no observed entries"
            )
        values[~mask] = 0.0
        values.flags.writeable = False
        mask.flags.writeable = False
        self.values = values
        self.mask = mask

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    @property
    def n_observed(self):
        return int(self.mask.sum())

    def missing_rate(self):
        return 1.0 - self.n_observed / self.mask.size

    def __repr__(self):
        d, n = self.shape
        return f"ObservedMatrix({d}x{n}, {self.n_observed} observed)"


@dataclass(frozen=True)
class ColumnSupport:
    """Observed row indices of one column (sorted, unique, nonempty)."""

    column: int
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.intp)
        if rows.ndim != 1 or rows.size == 0:
            raise ValueError("support must be a nonempty 1-D index array")
        if np.any(np.diff(rows) <= 0):
            raise ValueError("support rows must be sorted and unique")
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    def __len__(self):
        return self.rows.size


def split(m):
    """Split into (observed_part, missing_part), zero off the respective set.

    The two parts sum to ``m.values`` exactly.
    """
    observed = np.where(m.mask, m.values, 0.0)
    missing = np.where(m.mask, 0.0, m.values)
    return observed, missing


def overwrite_missing(m, source):
    """Replace unobserved entries with the corresponding entries of ``source``.

    Observed entries and the mask are untouched.
    """
    source = np.asarray(source, dtype=np.float64)
    if source.shape != m.shape:
        raise ValueError(
            f"source shape {source.shape} does not match matrix shape {m.shape}"
        )
    return ObservedMatrix(np.where(m.mask, m.values, source), m.mask)


def column_supports(m):
    """Per-column observed row indices, one :class:`ColumnSupport` each."""
    return [
        ColumnSupport(j, np.flatnonzero(m.mask[:, j]))
        for j in range(m.n_cols)
    ]
