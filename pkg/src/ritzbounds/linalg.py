"""Dense kernels shared by the solvers and the bound evaluators.

Orthonormalization (Euclidean and with a symmetric positive definite
metric), a cyclic Jacobi eigensolver for small projected matrices, Rayleigh
quotients and principal angles.
"""
import math

import numba
import numpy as np
from scipy.linalg import solve_triangular

DROP_TOL = 1e-12
SMALL_EIG_CAP = 512
JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 100
ANGLE_TAU_MIN = 1e-15


class RankDeficiencyError(ValueError):
    """A block lost numerical rank where full rank is required."""


class MetricError(np.linalg.LinAlgError):
    """The metric matrix is not symmetric positive definite."""


class ConvergenceError(RuntimeError):
    """An iterative kernel did not converge."""


def _as_matrix(B, name="B"):
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] == 0 or B.shape[1] == 0:
        raise ValueError(f"{name} must be a nonempty 2-d array, got shape {B.shape}")
    if not np.all(np.isfinite(B)):
        raise ValueError(f"{name} has non-finite entries")
    return B


def _sym_norm(S):
    return float(np.max(np.abs(S))) if S.size else 0.0


def check_symmetric(S, name="S"):
    """Raise ``ValueError`` unless ``|S_ij - S_ji| <= 1e-14 max(1, |S_ij|)``."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"{name} must be square, got shape {S.shape}")
    diff = np.abs(S - S.T)
    if np.any(diff > 1e-14 * np.maximum(1.0, np.abs(S))):
        raise ValueError(f"{name} is not symmetric (max asymmetry {diff.max():.3e})")
    return S


# ---------------------------------------------------------------------------
# Gram-Schmidt
# ---------------------------------------------------------------------------

def block_orthonormalize(W, basis=None, basis_image=None, metric=None, scale=None,
                         drop_tol=DROP_TOL):
    """Orthonormalize a block against a basis and within itself.

    Two passes of block classical Gram-Schmidt against ``basis`` are followed
    by two-pass modified Gram-Schmidt inside the block. Inner products are
    ``x^T M y`` when a metric ``M`` is given.

    Parameters
    ----------
    W : ndarray, shape (n, q)
        Block to orthonormalize. Not modified.
    basis : ndarray, shape (n, r), optional
        Metric-orthonormal columns to project out.
    basis_image : ndarray, shape (n, r), optional
        ``M @ basis``; taken equal to ``basis`` in the Euclidean case.
    metric : callable, optional
        Maps a block ``X`` to ``M @ X``.
    scale : float, optional
        Reference norm for the drop test. Defaults to the largest column
        norm of ``W``.
    drop_tol : float
        Columns whose norm after orthogonalization is below
        ``drop_tol * scale`` are dropped.

    Returns
    -------
    Q : ndarray, shape (n, rank)
    MQ : ndarray, shape (n, rank)
        ``M @ Q`` (``Q`` itself in the Euclidean case).
    """
    W = np.array(W, dtype=float, copy=True)
    n, q = W.shape
    apply_m = metric if metric is not None else (lambda X: X)
    if scale is None:
        MW = apply_m(W)
        norms2 = np.einsum("ij,ij->j", W, MW)
        if metric is not None and np.any(norms2 < 0):
            raise MetricError("metric has a nonpositive direction")
        scale = math.sqrt(float(np.max(norms2))) if q else 0.0
    if basis is not None and basis.shape[1]:
        image = basis if basis_image is None else basis_image
        for _ in range(2):
            W -= basis @ (image.T @ W)
    cols, imgs = [], []
    for j in range(q):
        w = W[:, j].copy()
        for _ in range(2):
            for qc, mc in zip(cols, imgs):
                w -= qc * (mc @ w)
        mw = apply_m(w[:, None])[:, 0]
        nrm2 = float(w @ mw)
        if metric is not None and nrm2 < 0:
            raise MetricError("metric has a nonpositive direction")
        nrm = math.sqrt(max(nrm2, 0.0))
        if nrm <= drop_tol * scale or nrm == 0.0:
            continue
        cols.append(w / nrm)
        imgs.append(mw / nrm)
    if not cols:
        empty = np.zeros((n, 0))
        return empty, empty.copy()
    return np.column_stack(cols), np.column_stack(imgs)


def orthonormalize(B, drop_tol=DROP_TOL):
    """Orthonormal basis of the numerical column span of ``B``.

    Parameters
    ----------
    B : array_like, shape (n, q)
    drop_tol : float
        Relative drop tolerance (see :func:`block_orthonormalize`).

    Returns
    -------
    Q : ndarray, shape (n, rank)
    rank : int

    Examples
    --------
    >>> Q, r = orthonormalize([[1.0, 2.0], [0.0, 0.0], [0.0, 0.0]])
    >>> r
    1
    """
    B = _as_matrix(B)
    if B.shape[1] > B.shape[0]:
        raise ValueError("B has more columns than rows")
    Q, _ = block_orthonormalize(B, drop_tol=drop_tol)
    return Q, Q.shape[1]


def metric_orthonormalize(B, S, drop_tol=DROP_TOL):
    """S-orthonormal basis of the column span of ``B`` (``Q^T S Q = I``).

    Raises
    ------
    MetricError
        If ``S`` has no Cholesky factorization.
    """
    B = _as_matrix(B)
    S = check_symmetric(np.asarray(S, dtype=float))
    if S.shape[0] != B.shape[0]:
        raise ValueError("metric and block dimensions differ")
    if B.shape[1] > B.shape[0]:
        raise ValueError("B has more columns than rows")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise MetricError("metric is not positive definite") from exc
    Q, _ = block_orthonormalize(B, metric=lambda X: S @ X, drop_tol=drop_tol)
    return Q, Q.shape[1]


# ---------------------------------------------------------------------------
# Small symmetric eigenproblems
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _jacobi_kernel(S, tol, max_sweeps):
    # cyclic Jacobi with the Rutishauser update of the rotated entries
    n = S.shape[0]
    A = S.copy()
    V = np.eye(n)
    norm = np.sqrt(np.sum(A * A))
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += A[i, j] * A[i, j]
        if np.sqrt(off) <= tol * norm:
            return A, V, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                sgn = 1.0 if theta >= 0 else -1.0
                t = sgn / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                tau = s / (1.0 + c)
                A[p, p] -= t * apq
                A[q, q] += t * apq
                A[p, q] = 0.0
                A[q, p] = 0.0
                for r in range(n):
                    if r == p or r == q:
                        continue
                    arp = A[r, p]
                    arq = A[r, q]
                    A[r, p] = arp - s * (arq + tau * arp)
                    A[r, q] = arq + s * (arp - tau * arq)
                    A[p, r] = A[r, p]
                    A[q, r] = A[r, q]
                for r in range(n):
                    vp = V[r, p]
                    vq = V[r, q]
                    V[r, p] = vp - s * (vq + tau * vp)
                    V[r, q] = vq + s * (vp - tau * vq)
    return A, V, -1


def sym_eig_small(S, cap=SMALL_EIG_CAP):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi.

    Sweeps run until the off-diagonal Frobenius norm is at most
    ``1e-14 * ||S||_F``.

    Parameters
    ----------
    S : array_like, shape (d, d)
        Symmetric matrix, ``d <= cap``.

    Returns
    -------
    values : ndarray, shape (d,)
        Eigenvalues in descending order.
    vectors : ndarray, shape (d, d)
        Orthonormal eigenvectors, column ``j`` belongs to ``values[j]``.

    Raises
    ------
    ConvergenceError
        After 100 sweeps without convergence.

    Examples
    --------
    >>> sym_eig_small([[2.0, 1.0], [1.0, 2.0]])[0]
    array([3., 1.])
    """
    S = check_symmetric(np.asarray(S, dtype=float))
    d = S.shape[0]
    if d == 0:
        raise ValueError("empty matrix")
    if d > cap:
        raise ValueError(f"dimension {d} exceeds the cap {cap}")
    if not np.all(np.isfinite(S)):
        raise ValueError("S has non-finite entries")
    A, V, sweeps = _jacobi_kernel(np.ascontiguousarray(S), JACOBI_TOL, JACOBI_MAX_SWEEPS)
    if sweeps < 0:
        raise ConvergenceError("Jacobi iteration did not converge in 100 sweeps")
    values = np.diag(A).copy()
    # stable sort keeps eigensolver order on ties
    order = np.argsort(-values, kind="stable")
    return values[order], V[:, order]


def generalized_eig_small(Lp, Sp, cap=SMALL_EIG_CAP):
    """Eigenpairs of the pencil ``Lp v = alpha Sp v`` in ascending order.

    Uses ``Sp = R^T R`` and :func:`sym_eig_small` on ``R^{-T} Lp R^{-1}``.
    The returned vectors are Sp-orthonormal.
    """
    Lp = check_symmetric(np.asarray(Lp, dtype=float), "Lp")
    Sp = check_symmetric(np.asarray(Sp, dtype=float), "Sp")
    if Lp.shape != Sp.shape:
        raise ValueError("pencil matrices differ in shape")
    try:
        C = np.linalg.cholesky(Sp)  # Sp = C C^T, R = C^T
    except np.linalg.LinAlgError as exc:
        raise MetricError("Sp is not positive definite") from exc
    X = solve_triangular(C, Lp, lower=True)
    H = solve_triangular(C, X.T, lower=True)
    H = 0.5 * (H + H.T)
    vals, W = sym_eig_small(H, cap=cap)
    vals, W = vals[::-1], W[:, ::-1]
    vecs = solve_triangular(C.T, W, lower=False)
    return vals.copy(), vecs


# ---------------------------------------------------------------------------
# Rayleigh quotients and angles
# ---------------------------------------------------------------------------

def _apply(apply_A, X):
    if hasattr(apply_A, "apply"):
        return apply_A.apply(X)
    if callable(apply_A):
        return apply_A(X)
    return np.asarray(apply_A, dtype=float) @ X


def rayleigh_quotient(apply_A, v):
    """``(v^T A v) / (v^T v)``.

    ``apply_A`` may be an operator with an ``apply`` method, a callable on
    blocks, or a matrix.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    vv = float(v @ v)
    if vv == 0.0:
        raise ValueError("Rayleigh quotient of the zero vector")
    Av = np.asarray(_apply(apply_A, v[:, None])).reshape(-1)
    return float(v @ Av) / vv


def principal_angle_tan(X, Q):
    """Tangent of the largest principal angle between two column spans.

    Both arguments must have orthonormal columns and equal column count.
    Returns ``math.inf`` when the smallest singular value of ``X^T Q`` is
    at most 1e-15.
    """
    X = _as_matrix(X, "X")
    Q = _as_matrix(Q, "Q")
    if X.shape != Q.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Q.shape}")
    M = X.T @ Q
    G = M.T @ M
    G = 0.5 * (G + G.T)
    lam = sym_eig_small(G)[0]
    tau = math.sqrt(max(float(lam[-1]), 0.0))
    if tau <= ANGLE_TAU_MIN:
        return math.inf
    tau = min(tau, 1.0)
    return math.sqrt(max(1.0 - tau * tau, 0.0)) / tau
