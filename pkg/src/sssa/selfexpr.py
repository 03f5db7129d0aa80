"""Masked sparse self-expression solved one column at a time by ADMM.

Given a fully filled ``D x N`` matrix ``X`` and an observation mask, each
column ``j`` with observed rows ``S_j`` is represented as a sparse
combination of all columns:

    min  ||c||_1 + lambda_e ||e||_1 + (lambda_z / 2) ||z||^2
    s.t. X[S_j, :] c + e + z = X[S_j, j],   c_j = 0,   (1' c = 1 if affine)

The subproblems are independent, so the solver runs them in lock-step with
vectorised updates across columns; every column keeps its own stopping
decision, exactly as if solved alone.

The splitting introduces an auxiliary copy ``a`` of ``c`` (consensus
constraint ``a = c``).  The ``a``-update is a ridge-type linear solve whose
system depends only on the column's support, so its factorisation is shared
between columns with identical supports and reused across iterations.  The
``c``-update is a soft-threshold with the diagonal entry hard-zeroed, and
``(e, z)`` have a joint closed-form update (soft-threshold for ``e``, then
scalar shrinkage for ``z``).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

log = logging.getLogger("sssa")

__all__ = [
    "MStepConfig",
    "SelfExpression",
    "MStepInfo",
    "ColumnDiagnostics",
    "soft_threshold",
    "solve_column",
    "m_step",
    "objective",
    "constraint_residual",
    "default_lambdas",
    "DEFAULT_ALPHA_E",
    "DEFAULT_ALPHA_Z",
]

# Conventional SSC-style magnitudes; lambda = alpha / mu with mu the
# data-adaptive scale from default_lambdas.
DEFAULT_ALPHA_E = 20.0
DEFAULT_ALPHA_Z = 800.0


def soft_threshold(v, tau):
    """Elementwise sign(v) * max(|v| - tau, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


@dataclass
class MStepConfig:
    """Weights and ADMM controls for the per-column convex program.

    ``lambda_e = inf`` disables the sparse-error term (e stays identically
    zero); ``admm_rho = None`` ties the penalty to ``lambda_z``.
    """

    lambda_e: float
    lambda_z: float
    affine: bool = False
    admm_rho: float | None = None
    admm_tol: float = 1e-6
    admm_max_iter: int = 1000
    adapt_rho: bool = False

    def __post_init__(self):
        if self.lambda_e < 0:
            raise ValueError("lambda_e must be nonnegative")
        if not self.lambda_z > 0:
            raise ValueError("lambda_z must be positive")
        if self.admm_rho is not None and not self.admm_rho > 0:
            raise ValueError("admm_rho must be positive")
        if not self.admm_tol > 0:
            raise ValueError("admm_tol must be positive")
        if self.admm_max_iter < 1:
            raise ValueError("admm_max_iter must be >= 1")

    @property
    def rho(self):
        return self.lambda_z if self.admm_rho is None else self.admm_rho


@dataclass
class SelfExpression:
    """Solution of the m-step: coefficients plus the fitted error split.

    ``C`` is N x N with an exactly zero diagonal.  ``E`` (sparse errors) and
    ``Z`` (noise) are D x N and vanish off the observation mask.
    """

    C: np.ndarray
    E: np.ndarray
    Z: np.ndarray


@dataclass
class _SolverState:
    """Full ADMM state, kept so the next m-step can warm-start from it."""

    A: np.ndarray
    C: np.ndarray
    E: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    V: np.ndarray
    w_aff: np.ndarray


@dataclass
class MStepInfo:
    """Per-column ADMM diagnostics for one m-step."""

    iterations: np.ndarray
    converged: np.ndarray
    primal_residuals: np.ndarray
    dual_residuals: np.ndarray
    state: _SolverState = field(repr=False)

    @property
    def all_converged(self):
        return bool(self.converged.all())

    @property
    def total_iterations(self):
        return int(self.iterations.sum())


@dataclass
class ColumnDiagnostics:
    iterations: int
    converged: bool
    primal_residual: float
    dual_residual: float


def _check_finite(X, mask):
    bad = ~np.isfinite(X).all(axis=0)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        raise ValueError(f"non-finite values in input matrix (column {j})")
    if not mask.any(axis=0).all():
        j = int(np.flatnonzero(~mask.any(axis=0))[0])
        raise ValueError(f"column {j} has no observed entries")


def _support_solvers(X, mask_cols, affine):
    """Per-column apply-functions for (I + B'B [+ 11'])^{-1}.

    Columns sharing a support share one factorisation.  The inverse is
    applied through the matrix inversion lemma on the smaller side: the
    |S| x |S| system ``I + B B'`` when the support is small, the N x N
    system directly otherwise.  Returns the padded gather/scatter indexing
    and the stacked small inverses used by the batched solve.
    """
    D, ncols = mask_cols.shape
    N = X.shape[1]
    row_gram = X @ X.T
    x_rowsum = X.sum(axis=1)

    uniq, uid = np.unique(mask_cols, axis=1, return_inverse=True)
    n_uniq = uniq.shape[1]
    rows_u = [np.flatnonzero(uniq[:, k]) for k in range(n_uniq)]
    m_u = np.array([r.size + (1 if affine else 0) for r in rows_u])

    use_wood = m_u <= N
    m_max = int(m_u[use_wood].max()) if use_wood.any() else 1

    K_u = np.zeros((n_uniq, m_max, m_max))
    G_u = {}
    for k in range(n_uniq):
        rows = rows_u[k]
        if use_wood[k]:
            m = m_u[k]
            H = np.eye(m)
            H[: rows.size, : rows.size] += row_gram[np.ix_(rows, rows)]
            if affine:
                H[: rows.size, -1] += x_rowsum[rows]
                H[-1, : rows.size] += x_rowsum[rows]
                H[-1, -1] += N
            K_u[k, :m, :m] = cho_solve(cho_factor(H), np.eye(m))
        else:
            B = X[rows, :]
            G = np.eye(N) + B.T @ B
            if affine:
                G += 1.0
            G_u[k] = cho_solve(cho_factor(G), np.eye(N))

    # Padded per-column gather indices into an extended (D+2)-row array:
    # row D is a zero pad slot, row D+1 carries the affine component.
    rows_pad = np.full((ncols, m_max), D, dtype=np.intp)
    wood_cols = np.flatnonzero(use_wood[uid])
    direct_cols = np.flatnonzero(~use_wood[uid])
    for j in wood_cols:
        rows = rows_u[uid[j]]
        rows_pad[j, : rows.size] = rows
        if affine:
            rows_pad[j, rows.size] = D + 1
    K_stack = K_u[uid]
    G_stack = (
        np.stack([G_u[uid[j]] for j in direct_cols])
        if direct_cols.size
        else None
    )
    return rows_pad, K_stack, wood_cols, direct_cols, G_stack, row_gram, x_rowsum


def _admm_columns(X, mask_cols, col_index, cfg, warm=None):
    """Run the per-column ADMM in lock-step over the selected columns.

    ``mask_cols`` is (D, ncols); ``col_index[j]`` is the global column index
    (the coefficient forced to zero).  Returns the final state plus
    per-column diagnostics.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    D, N = X.shape
    mask_cols = np.asarray(mask_cols, dtype=bool)
    ncols = mask_cols.shape[1]
    col_index = np.asarray(col_index, dtype=np.intp)
    _check_finite(X, mask_cols)

    Y = X[:, col_index]
    M = mask_cols.astype(np.float64)
    lam_e, lam_z = cfg.lambda_e, cfg.lambda_z
    affine = cfg.affine

    (rows_pad, K_stack, wood_cols, direct_cols, G_stack, row_gram, x_rowsum
     ) = _support_solvers(X, mask_cols, affine)

    if warm is None:
        A = np.zeros((N, ncols))
        C = np.zeros((N, ncols))
        E = np.zeros((D, ncols))
        Z = np.zeros((D, ncols))
        U = np.zeros((D, ncols))
        V = np.zeros((N, ncols))
        w_aff = np.zeros(ncols)
    else:
        A = warm.A.copy()
        C = warm.C.copy()
        E = warm.E.copy()
        Z = warm.Z.copy()
        U = warm.U.copy()
        V = warm.V.copy()
        w_aff = warm.w_aff.copy()

    rho = np.full(ncols, cfg.rho)
    iterations = np.zeros(ncols, dtype=int)
    converged = np.zeros(ncols, dtype=bool)
    prim_final = np.full(ncols, np.inf)
    dual_final = np.full(ncols, np.inf)

    act = np.arange(ncols)
    ones_col = np.ones((N, 1))
    diag_rows = col_index

    for it in range(1, cfg.admm_max_iter + 1):
        Xa = X  # dictionary, shared by all columns
        Ya, Ma = Y[:, act], M[:, act]
        Ea, Za, Ua = E[:, act], Z[:, act], U[:, act]
        Ca, Va = C[:, act], V[:, act]
        rho_a = rho[act]

        # a-update: ridge system via cached factorisations
        T0 = Ma * (Ya - Ea - Za - Ua)
        Q = Xa.T @ T0 + (Ca - Va)
        if affine:
            Q += ones_col * (1.0 - w_aff[act])[None, :]
        XQ = Xa @ Q

        ext = np.zeros((D + 2, act.size))
        ext[:D] = XQ
        if affine:
            ext[D + 1] = Q.sum(axis=0)
        t_pad = ext[rows_pad[act], np.arange(act.size)[:, None]]
        s_pad = np.einsum("jab,jb->ja", K_stack[act], t_pad)
        sc_ext = np.zeros((D + 2, act.size))
        sc_ext[rows_pad[act], np.arange(act.size)[:, None]] = s_pad
        Sc = sc_ext[:D]
        Aa = Q - Xa.T @ Sc
        XA = XQ - row_gram @ Sc
        if affine:
            s_aff = sc_ext[D + 1]
            Aa -= ones_col * s_aff[None, :]
            XA -= x_rowsum[:, None] * s_aff[None, :]
        if direct_cols.size:
            in_act = np.isin(act, direct_cols)
            if in_act.any():
                pos = np.flatnonzero(in_act)
                gsel = np.searchsorted(direct_cols, act[pos])
                Aa[:, pos] = np.einsum(
                    "jab,jb->ja", G_stack[gsel], Q[:, pos].T
                ).T
                XA[:, pos] = Xa @ Aa[:, pos]

        # c-update: soft-threshold of a + dual, then hard-zero the diagonal
        C_new = soft_threshold(Aa + Va, 1.0 / rho_a[None, :])
        C_new[diag_rows[act], np.arange(act.size)] = 0.0

        # joint (e, z)-update
        R = Ma * (Ya - XA - Ua)
        mu_eff = lam_z * rho_a / (lam_z + rho_a)
        E_new = soft_threshold(R, lam_e / mu_eff[None, :])
        Z_new = (R - E_new) * (rho_a / (lam_z + rho_a))[None, :]

        # duals and residuals
        P = Ma * (XA + E_new + Z_new - Ya)
        cons = Aa - C_new
        Ua = Ua + P
        Va = Va + cons
        prim_sq = np.einsum("ij,ij->j", P, P) + np.einsum(
            "ij,ij->j", cons, cons
        )
        if affine:
            aff_res = Aa.sum(axis=0) - 1.0
            w_aff[act] += aff_res
            prim_sq += aff_res**2
        prim = np.sqrt(prim_sq)
        dEZ = (E_new - Ea) + (Z_new - Za)
        Gd = Xa.T @ dEZ - (C_new - Ca)
        dual = rho_a * np.sqrt(np.einsum("ij,ij->j", Gd, Gd))

        A[:, act], C[:, act] = Aa, C_new
        E[:, act], Z[:, act] = E_new, Z_new
        U[:, act], V[:, act] = Ua, Va
        iterations[act] = it
        prim_final[act] = prim
        dual_final[act] = dual

        if cfg.adapt_rho:
            up = prim > 10.0 * dual
            down = dual > 10.0 * prim
            scale = np.where(up, 2.0, np.where(down, 0.5, 1.0))
            rho[act] *= scale
            inv = 1.0 / scale
            U[:, act] *= inv[None, :]
            V[:, act] *= inv[None, :]
            if affine:
                w_aff[act] *= inv

        done = (prim <= cfg.admm_tol) & (dual <= cfg.admm_tol)
        if done.any():
            converged[act[done]] = True
            act = act[~done]
            if act.size == 0:
                break

    if act.size:
        log.debug(
            "ADMM hit max_iter=%d on %d column(s); worst primal %.3e dual %.3e",
            cfg.admm_max_iter, act.size, prim_final[act].max(),
            dual_final[act].max(),
        )

    state = _SolverState(A=A, C=C, E=E, Z=Z, U=U, V=V, w_aff=w_aff)
    return state, iterations, converged, prim_final, dual_final


def solve_column(X, support, cfg):
    """Solve the sparse self-expression program for one column.

    Parameters
    ----------
    X : (D, N) ndarray
        Fully filled current estimate (dictionary and targets).
    support : ColumnSupport
        Observed rows of the target column.
    cfg : MStepConfig

    Returns
    -------
    c : (N,) coefficient vector, ``c[support.column] == 0`` exactly.
    e, z : vectors on the support rows.
    diagnostics : ColumnDiagnostics
        Non-convergence within ``admm_max_iter`` is reported here, not
        raised; the caller may still proceed with the returned iterate.
    """
    X = np.asarray(X, dtype=np.float64)
    D = X.shape[0]
    mask_col = np.zeros((D, 1), dtype=bool)
    mask_col[support.rows, 0] = True
    state, iters, conv, prim, dual = _admm_columns(
        X, mask_col, [support.column], cfg
    )
    c = state.C[:, 0].copy()
    e = state.E[support.rows, 0].copy()
    z = state.Z[support.rows, 0].copy()
    diag = ColumnDiagnostics(
        iterations=int(iters[0]),
        converged=bool(conv[0]),
        primal_residual=float(prim[0]),
        dual_residual=float(dual[0]),
    )
    return c, e, z, diag


def m_step(X, mask, cfg, warm=None):
    """Solve all column subproblems and assemble (C, E, Z).

    Columns are independent subproblems; the result does not depend on any
    evaluation order.  ``warm`` may carry the state of a previous m-step on
    the same mask to warm-start the solver.

    Returns ``(SelfExpression, MStepInfo)``.
    """
    X = np.asarray(X, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != X.shape:
        raise ValueError("mask shape does not match X")
    N = X.shape[1]
    state, iters, conv, prim, dual = _admm_columns(
        X, mask, np.arange(N), cfg, warm=warm
    )
    C = state.C.copy()
    C[np.arange(N), np.arange(N)] = 0.0
    E = np.where(mask, state.E, 0.0)
    Z = np.where(mask, state.Z, 0.0)
    se = SelfExpression(C=C, E=E, Z=Z)
    info = MStepInfo(
        iterations=iters,
        converged=conv,
        primal_residuals=prim,
        dual_residuals=dual,
        state=state,
    )
    if not info.all_converged:
        log.info(
            "m-step: %d/%d columns flagged non-convergent",
            int((~conv).sum()), N,
        )
    return se, info


def objective(X, mask, se, cfg):
    """Value of ||C||_1 + lambda_e ||E_Omega||_1 + (lambda_z/2) ||Z_Omega||_F^2.

    Feasibility of the self-expression constraint is not folded in; use
    :func:`constraint_residual` for that.
    """
    c_l1 = np.abs(se.C).sum()
    e_l1 = np.abs(se.E[mask]).sum()
    z_sq = float(np.square(se.Z[mask]).sum())
    e_term = cfg.lambda_e * e_l1 if e_l1 > 0 else 0.0
    return float(c_l1 + e_term + 0.5 * cfg.lambda_z * z_sq)


def constraint_residual(X, mask, se):
    """Per-column 2-norm of (X - XC - E - Z) restricted to observed rows."""
    R = np.where(mask, X - X @ se.C - se.E - se.Z, 0.0)
    return np.sqrt(np.einsum("ij,ij->j", R, R))


def default_lambdas(X, mask, alpha_e=DEFAULT_ALPHA_E, alpha_z=DEFAULT_ALPHA_Z):
    """Data-adaptive weights lambda = alpha / mu on zero-filled data.

    ``mu`` is the smallest over columns of the largest absolute inner
    product with any other column.  Raises if that scale is zero (mutually
    orthogonal or zero columns): supply lambdas explicitly in that case.
    """
    X = np.asarray(X, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    Xz = np.where(mask, X, 0.0)
    G = np.abs(Xz.T @ Xz)
    np.fill_diagonal(G, -np.inf)
    if G.shape[0] < 2:
        raise ValueError("need at least two columns to auto-scale lambdas")
    mu = float(G.max(axis=0).min())
    if mu <= 0.0:
        raise ValueError(
            "cannot auto-scale lambdas (columns mutually orthogonal or zero);"
            " supply lambda_e and lambda_z explicitly"
        )
    return alpha_e / mu, alpha_z / mu
