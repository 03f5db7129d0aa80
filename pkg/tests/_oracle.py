"""Independent reference computations used only by the tests.

Nothing here shares code with the package solver: the per-column program is
restated through the elementwise identity

    min_{e+z=w} lambda_e |e| + (lambda_z/2) z^2  =  Huber(w)

with threshold ``delta = lambda_e / lambda_z``, and minimised by a plain
projected subgradient method with diminishing, gradient-normalised steps.
"""

import numpy as np


def huber_value(w, lam_e, lam_z):
    """Optimal value of the e/z split of a residual w, elementwise."""
    w = np.asarray(w, dtype=np.float64)
    delta = lam_e / lam_z
    quad = 0.5 * lam_z * np.square(w)
    lin = lam_e * np.abs(w) - 0.5 * lam_e * delta
    return np.where(np.abs(w) <= delta, quad, lin)


def huber_split(w, lam_e, lam_z):
    """The minimising (e, z) with e + z = w."""
    w = np.asarray(w, dtype=np.float64)
    delta = lam_e / lam_z
    e = np.sign(w) * np.maximum(np.abs(w) - delta, 0.0)
    return e, w - e


def huber_grad(w, lam_e, lam_z):
    delta = lam_e / lam_z
    return lam_z * np.clip(w, -delta, delta)


def _project(C, affine):
    B, N, _ = C.shape
    idx = np.arange(N)
    C[:, idx, idx] = 0.0
    if affine:
        corr = (1.0 - C.sum(axis=1)) / (N - 1)
        C += corr[:, None, :]
        C[:, idx, idx] = 0.0
    return C


def subgradient_solve(X, masks, lam_e, lam_z, n_iter=1_000_000,
                      affine=False, step0=1.0):
    """Projected subgradient on the reduced self-expression program.

    Diminishing gradient-normalised steps, run in three stages of shrinking
    base step so the final sweeps resolve the optimum finely; each stage
    restarts from the best iterate seen so far.

    Parameters
    ----------
    X : (B, D, N) stacked fully-filled instances.
    masks : (B, D, N) boolean observation masks.
    lam_e, lam_z : (B,) per-instance weights (scalars broadcast).
    n_iter : total subgradient iterations across the stages.

    Returns
    -------
    f_best : (B, N) best objective seen, per column.
    C_best : (B, N, N) the corresponding coefficients.
    """
    X = np.atleast_3d(np.asarray(X, dtype=np.float64))
    M = np.asarray(masks, dtype=np.float64)
    B, D, N = X.shape
    lam_e = np.broadcast_to(np.asarray(lam_e, dtype=np.float64), (B,))
    lam_z = np.broadcast_to(np.asarray(lam_z, dtype=np.float64), (B,))
    le = lam_e[:, None, None]
    lz = lam_z[:, None, None]

    C = np.zeros((B, N, N))
    if affine:
        C = _project(C.copy(), affine=True)
    f_best = np.full((B, N), np.inf)
    C_best = C.copy()

    stages = [(0.4, 1.0), (0.4, 1.0 / 30.0), (0.2, 1.0 / 900.0)]
    for frac, scale in stages:
        C = C_best.copy()
        steps = int(n_iter * frac)
        s0 = step0 * scale
        for t in range(steps):
            R = M * (X - np.einsum("bdn,bnm->bdm", X, C))
            f = np.abs(C).sum(axis=1) + huber_value(R, le, lz).sum(axis=1)
            improved = f < f_best
            if improved.any():
                np.minimum(f, f_best, out=f_best)
                C_best = np.where(improved[:, None, :], C, C_best)
            g = np.sign(C) - np.einsum(
                "bdn,bdm->bnm", X, huber_grad(R, le, lz)
            )
            gn = np.sqrt(np.einsum("bnm,bnm->bm", g, g))
            step = s0 / (np.sqrt(t + 1.0) * np.maximum(gn, 1e-12))
            C = _project(C - step[:, None, :] * g, affine)

    return f_best, C_best


def best_map_bruteforce(pred, truth):
    """Max label agreement over all K! permutations (K small)."""
    from itertools import permutations

    pred = np.asarray(pred)
    truth = np.asarray(truth)
    k = int(max(pred.max(), truth.max())) + 1
    best = -1
    for perm in permutations(range(k)):
        mapped = np.array(perm)[pred]
        best = max(best, int((mapped == truth).sum()))
    return best
