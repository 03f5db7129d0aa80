"""Union-of-subspaces synthetic datasets with masks, noise and outliers.

A dataset is built as: random orthonormal bases -> Gaussian points inside
each subspace -> concatenate (optional column shuffle) -> optional range
[0,1] normalization -> snapshot of the clean ground truth -> additive
Gaussian noise -> additive sparse outliers -> independent Bernoulli mask.

Every stage draws from its own child generator spawned from the dataset
seed, so changing, say, the noise level never perturbs the mask, and masks
at increasing missing rates are nested for a fixed seed.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .masked import ObservedMatrix

log = logging.getLogger("sssa")

__all__ = [
    "SyntheticSpec",
    "Dataset",
    "PRESETS",
    "gen_subspace_basis",
    "gen_points",
    "gen_mask",
    "add_noise",
    "add_outliers",
    "make_dataset",
]

NORMALIZATIONS = ("none", "range01")

# (K, D, d, N_k) benchmark shapes: low-rank, high-rank, and the small
# high-rank variant used for baseline comparisons.
PRESETS = {
    "lr": (3, 50, 5, 20),
    "hr": (10, 80, 10, 50),
    "hr-small": (7, 35, 5, 30),
}


@dataclass(frozen=True)
class SyntheticSpec:
    K: int
    D: int
    d: int
    N_k: int
    rho: float = 0.0
    sigma: float = 0.0
    outlier_frac: float = 0.0
    normalization: str = "none"
    seed: int = 0
    shuffle: bool = False

    def __post_init__(self):
        if not (0 < self.d < self.D):
            raise ValueError("need 0 < d < D")
        if self.d > self.N_k:
            raise ValueError("need d <= N_k")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError("rho must be in [0, 1)")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not (0.0 <= self.outlier_frac < 1.0):
            raise ValueError("outlier_frac must be in [0, 1)")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def N(self):
        return self.K * self.N_k

    @classmethod
    def from_preset(cls, name, **overrides):
        k, d_amb, d_sub, n_k = PRESETS[name]
        base = dict(K=k, D=d_amb, d=d_sub, N_k=n_k)
        base.update(overrides)
        return cls(**base)


@dataclass
class Dataset:
    observed: ObservedMatrix
    X_true: np.ndarray
    labels_true: np.ndarray
    spec: SyntheticSpec
    outlier_positions: np.ndarray = field(default=None, repr=False)


def gen_subspace_basis(D, d, rng):
    """Orthonormal basis of a uniformly random d-dimensional subspace."""
    if d >= D:
        raise ValueError("need d < D")
    Q, _ = np.linalg.qr(rng.standard_normal((D, d)))
    return Q


def gen_points(basis, N_k, rng):
    """N_k points drawn inside span(basis) with Gaussian coefficients."""
    d = basis.shape[1]
    return basis @ rng.standard_normal((d, N_k))


def gen_mask(D, N, rho, rng, max_retries=100):
    """Boolean observation mask; each entry missing with probability rho.

    Columns that come out fully missing are redrawn (bounded retries, the
    event is logged), so every column keeps at least one observed entry.
    Thresholding a uniform field makes masks nested across rho for a fixed
    generator state.
    """
    if not (0.0 <= rho < 1.0):
        raise ValueError("rho must be in [0, 1)")
    observed = rng.random((D, N)) >= rho
    for j in np.flatnonzero(~observed.any(axis=0)):
        for attempt in range(max_retries):
            col = rng.random(D) >= rho
            if col.any():
                observed[:, j] = col
                log.debug(
                    "resampled all-missing column %d (%d attempt(s))",
                    j, attempt + 1,
                )
                break
        else:
            raise RuntimeError(
                f"column {j} still fully missing after {max_retries} retries"
            )
    return observed


def add_noise(X, sigma, rng):
    """Additive i.i.d. Gaussian noise with standard deviation sigma."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    X = np.asarray(X, dtype=np.float64)
    if sigma == 0:
        return X.copy()
    return X + sigma * rng.standard_normal(X.shape)


def add_outliers(X, frac, rng):
    """Add uniform draws from [0.2, 1] to floor(frac * D * N) random entries.

    Returns the corrupted matrix and the (row, col) positions hit.
    """
    if not (0.0 <= frac < 1.0):
        raise ValueError("outlier fraction must be in [0, 1)")
    X = np.asarray(X, dtype=np.float64).copy()
    count = int(frac * X.size)
    if count == 0:
        return X, np.empty((0, 2), dtype=np.intp)
    flat = rng.choice(X.size, size=count, replace=False)
    X.flat[flat] += rng.uniform(0.2, 1.0, size=count)
    rows, cols = np.unravel_index(flat, X.shape)
    return X, np.column_stack([rows, cols])


def _normalize_range01(X):
    lo, hi = X.min(), X.max()
    if hi == lo:
        raise ValueError("cannot range-normalize a constant matrix")
    return (X - lo) / (hi - lo)


def make_dataset(spec: SyntheticSpec) -> Dataset:
    """Generate a full benchmark dataset per ``spec``."""
    ss = np.random.SeedSequence(spec.seed)
    rng_basis, rng_points, rng_shuffle, rng_noise, rng_out, rng_mask = (
        np.random.default_rng(child) for child in ss.spawn(6)
    )

    blocks = []
    for _ in range(spec.K):
        basis = gen_subspace_basis(spec.D, spec.d, rng_basis)
        blocks.append(gen_points(basis, spec.N_k, rng_points))
    X = np.hstack(blocks)
    labels = np.repeat(np.arange(spec.K), spec.N_k)

    if spec.shuffle:
        perm = rng_shuffle.permutation(spec.N)
        X = X[:, perm]
        labels = labels[perm]

    if spec.normalization == "range01":
        X = _normalize_range01(X)

    X_true = X.copy()
    corrupted = add_noise(X_true, spec.sigma, rng_noise)
    corrupted, outlier_pos = add_outliers(
        corrupted, spec.outlier_frac, rng_out
    )
    mask = gen_mask(spec.D, spec.N, spec.rho, rng_mask)

    return Dataset(
        observed=ObservedMatrix(corrupted, mask),
        X_true=X_true,
        labels_true=labels,
        spec=spec,
        outlier_positions=outlier_pos,
    )
