"""Operators the solvers iterate with.

Diagonal and dense symmetric operators, Hermitian pencils with a cached
shift-and-invert factorization, and Chebyshev polynomial filters.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .linalg import MetricError, check_symmetric, generalized_eig_small, SMALL_EIG_CAP

PIVOT_TOL = 1e-13


# ---------------------------------------------------------------------------
# Spectra
# ---------------------------------------------------------------------------

class Spectrum:
    """Eigenvalues ``lambda_1 >= ... >= lambda_n`` (1-based access via ``lam``).

    Parameters
    ----------
    eigenvalues : array_like
        Finite values in descending order (ties allowed), at least two.
    """

    def __init__(self, eigenvalues):
        ev = np.array(eigenvalues, dtype=float).reshape(-1)
        if ev.size < 2:
            raise ValueError("a spectrum needs at least two eigenvalues")
        if not np.all(np.isfinite(ev)):
            raise ValueError("eigenvalues must be finite")
        bad = np.nonzero(np.diff(ev) > 0)[0]
        if bad.size:
            j = int(bad[0]) + 2
            raise ValueError(f"eigenvalues not descending at index {j}")
        ev.setflags(write=False)
        self.eigenvalues = ev

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def lam(self, j: int) -> float:
        """``lambda_j`` for ``1 <= j <= n``."""
        if not 1 <= j <= self.n:
            raise IndexError(f"eigenvalue index {j} outside 1..{self.n}")
        return float(self.eigenvalues[j - 1])

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    def __len__(self):
        return self.n

    def __eq__(self, other):
        return isinstance(other, Spectrum) and np.array_equal(self.eigenvalues, other.eigenvalues)

    def __repr__(self):
        return f"Spectrum(n={self.n}, lambda_1={self.eigenvalues[0]!r}, lambda_n={self.eigenvalues[-1]!r})"


def load_spectrum(path) -> Spectrum:
    """Read a spectrum file: one real per line, descending.

    Blank lines and ``#`` comments are skipped. Errors name the offending
    line.
    """
    values, lines = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                v = float(text)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a real number: {text!r}") from None
            if not math.isfinite(v):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            if values and v > values[-1]:
                raise ValueError(
                    f"{path}:{lineno}: value {v!r} exceeds previous {values[-1]!r} "
                    f"(line {lines[-1]}); eigenvalues must be descending")
            values.append(v)
            lines.append(lineno)
    return Spectrum(values)


def save_spectrum(spectrum: Spectrum, path):
    with open(path, "w") as fh:
        for v in spectrum.eigenvalues:
            fh.write(f"{float(v)!r}\n")


# ---------------------------------------------------------------------------
# Symmetric operators
# ---------------------------------------------------------------------------

class DiagonalOperator:
    """``A = diag(lambda)`` with canonical eigenvectors."""

    kind = "diagonal"

    def __init__(self, spectrum):
        if not isinstance(spectrum, Spectrum):
            spectrum = Spectrum(spectrum)
        self.spectrum = spectrum
        self._d = spectrum.eigenvalues

    @property
    def n(self):
        return self.spectrum.n

    @property
    def norm(self):
        return self.spectrum.norm

    def apply(self, B):
        B = np.asarray(B, dtype=float)
        if B.shape[0] != self.n:
            raise ValueError(f"block has {B.shape[0]} rows, operator has order {self.n}")
        return self._d[:, None] * B if B.ndim == 2 else self._d * B

    def eigenvectors(self, indices):
        """Columns ``x_j`` for the 1-based ``indices``."""
        idx = np.asarray(list(indices), dtype=int)
        X = np.zeros((self.n, idx.size))
        X[idx - 1, np.arange(idx.size)] = 1.0
        return X

    def describe(self):
        return f"diagonal(n={self.n})"


class DenseOperator:
    """Dense symmetric operator; eigenvectors computed lazily for diagnostics."""

    kind = "dense"

    def __init__(self, matrix):
        M = np.array(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("matrix must be square")
        scale = max(float(np.max(np.abs(M))), 1e-300)
        if np.max(np.abs(M - M.T)) > 1e-14 * scale:
            raise ValueError("matrix is not symmetric")
        M = 0.5 * (M + M.T)
        M.setflags(write=False)
        self.matrix = M
        self._eig = None

    @property
    def n(self):
        return self.matrix.shape[0]

    def _decompose(self):
        if self._eig is None:
            w, V = np.linalg.eigh(self.matrix)
            self._eig = (w[::-1].copy(), V[:, ::-1].copy())
        return self._eig

    @property
    def spectrum(self):
        return Spectrum(self._decompose()[0])

    @property
    def norm(self):
        return float(np.max(np.abs(self._decompose()[0])))

    def apply(self, B):
        B = np.asarray(B, dtype=float)
        if B.shape[0] != self.n:
            raise ValueError(f"block has {B.shape[0]} rows, operator has order {self.n}")
        return self.matrix @ B

    def eigenvectors(self, indices):
        idx = np.asarray(list(indices), dtype=int)
        return self._decompose()[1][:, idx - 1]

    def describe(self):
        return f"dense(n={self.n})"


def apply_block(op, B):
    """``A @ B`` for any operator of this module."""
    return op.apply(B)


# ---------------------------------------------------------------------------
# Chebyshev filters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChebyshevFilter:
    """``T_k`` on the interval ``[a, b]`` mapped to ``[-1, 1]``.

    The filter equals 1 at ``b`` and grows monotonically beyond ``b``.
    """

    degree: int
    a: float
    b: float

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 0:
            raise ValueError("filter degree must be a nonnegative integer")
        if not self.b > self.a:
            raise ValueError(f"filter interval is empty: a={self.a}, b={self.b}")

    def mapped(self, alpha):
        return (2.0 * np.asarray(alpha, dtype=float) - self.a - self.b) / (self.b - self.a)

    def value(self, alpha):
        """Scalar filter values by the three-term recurrence."""
        return chebyshev_value(self.degree, self.mapped(alpha))


def chebyshev_value(k: int, x):
    """``T_k(x)`` by the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    t0, t1 = np.ones_like(x), x.copy()
    if k == 0:
        return t0
    for _ in range(k - 1):
        t0, t1 = t1, 2.0 * x * t1 - t0
    return t1


def chebyshev_filter_apply(f: ChebyshevFilter, op, B):
    """``T_k(M) B`` with ``M = (2A - (a+b) I) / (b - a)``."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != op.n:
        raise ValueError("block and operator dimensions differ")
    half = 0.5 * (f.b - f.a)
    mid = 0.5 * (f.a + f.b)

    def M(X):
        return (op.apply(X) - mid * X) / half

    Z0 = B.copy()
    if f.degree == 0:
        return Z0
    Z1 = M(B)
    for _ in range(f.degree - 1):
        Z0, Z1 = Z1, 2.0 * M(Z1) - Z0
    return Z1


def chebyshev_log_value(k: int, x: float) -> float:
    """``log T_k(x)`` for ``x >= 1`` without overflow.

    With ``y = k acosh(x)``, ``log cosh y = y + log((1 + exp(-2y)) / 2)``.
    """
    x = float(x)
    if not x >= 1.0:
        raise ValueError(f"argument {x} below 1")
    if k < 0:
        raise ValueError("degree must be nonnegative")
    y = k * math.acosh(x)
    return y + math.log1p(math.exp(-2.0 * y)) - math.log(2.0)


# ---------------------------------------------------------------------------
# Pencils
# ---------------------------------------------------------------------------

def _min_pivot(lu, ipiv):
    """Smallest |eigenvalue| among the 1x1 / 2x2 blocks of a lower dsytrf factor."""
    n = lu.shape[0]
    k, smallest = 0, math.inf
    while k < n:
        if ipiv[k] > 0:
            smallest = min(smallest, abs(lu[k, k]))
            k += 1
        else:
            D = np.array([[lu[k, k], lu[k + 1, k]], [lu[k + 1, k], lu[k + 1, k + 1]]])
            smallest = min(smallest, float(np.min(np.abs(np.linalg.eigvalsh(D)))))
            k += 2
    return smallest


class HermitianPencil:
    """Pencil ``(L, S)`` with ``S`` positive definite and a shift ``beta``.

    ``L - beta S`` is factored once (symmetric indefinite, Bunch-Kaufman
    pivoting); construction fails when a pivot block is below
    ``1e-13 ||L - beta S||_2``.
    """

    def __init__(self, L, S, beta=0.0):
        L = check_symmetric(np.array(L, dtype=float), "L")
        S = check_symmetric(np.array(S, dtype=float), "S")
        if L.shape != S.shape:
            raise ValueError("L and S differ in shape")
        try:
            self._chol_S = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise MetricError("S is not positive definite") from exc
        self.L, self.S, self.beta = L, S, float(beta)
        for M in (self.L, self.S):
            M.setflags(write=False)
        Lb = L - self.beta * S
        self.L_beta = Lb
        lu, ipiv, info = lapack.dsytrf(Lb, lower=1)
        if info < 0:
            raise ValueError(f"dsytrf argument error {info}")
        scale = float(np.linalg.norm(Lb, 2))
        if info > 0 or _min_pivot(lu, ipiv) <= PIVOT_TOL * scale:
            raise np.linalg.LinAlgError(
                f"L - beta*S is numerically singular at beta={self.beta}")
        self._lu, self._ipiv = lu, ipiv
        self._eig = None

    @property
    def n(self):
        return self.L.shape[0]

    def solve(self, B):
        """``(L - beta S)^{-1} B``."""
        B = np.asarray(B, dtype=float)
        X, info = lapack.dsytrs(self._lu, self._ipiv, B, lower=1)
        if info != 0:
            raise np.linalg.LinAlgError(f"dsytrs failed with info={info}")
        return X

    def metric(self, B):
        return self.S @ B

    def eig(self):
        """Ascending pencil eigenvalues and S-orthonormal eigenvectors."""
        if self._eig is None:
            if self.n <= SMALL_EIG_CAP:
                self._eig = generalized_eig_small(self.L, self.S)
            else:
                from scipy.linalg import eigh
                self._eig = eigh(self.L, self.S)
        return self._eig

    @property
    def alphas(self):
        return self.eig()[0]

    def describe(self):
        return f"pencil(n={self.n}, beta={self.beta!r})"


def shift_invert_apply(P: HermitianPencil, B):
    """``(L - beta S)^{-1} S B`` through the cached factorization."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != P.n:
        raise ValueError("block and pencil dimensions differ")
    return P.solve(P.S @ B)


def pencil_to_standard(P: HermitianPencil) -> DenseOperator:
    """``L_beta^{-1/2} S L_beta^{-1/2}`` realized as ``R^{-T} S R^{-1}``.

    Requires ``L_beta = L - beta S`` positive definite; the eigenvalues of the
    result are ``1 / (alpha_i - beta)``.
    """
    try:
        C = np.linalg.cholesky(P.L_beta)  # L_beta = C C^T, R = C^T
    except np.linalg.LinAlgError as exc:
        raise MetricError("L - beta*S is not positive definite") from exc
    X = solve_triangular(C, P.S, lower=True)
    A = solve_triangular(C, X.T, lower=True)
    return DenseOperator(0.5 * (A + A.T))


def pencil_to_standard_interior(P: HermitianPencil, sign: int = 1) -> DenseOperator:
    """Positive definite reformulation for a shift inside the spectrum.

    With ``M = L_beta S^{-1} L_beta`` returns ``sign * M^{-1/2} L_beta M^{-1/2}``
    (``M^{-1/2}`` through the Cholesky factor of ``M``). Its eigenvalues are
    ``sign / (alpha_i - beta)``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    Lb = P.L_beta
    SinvLb = np.linalg.solve(P.S, Lb)
    M = Lb @ SinvLb
    M = 0.5 * (M + M.T)
    try:
        C = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise MetricError("L_beta S^-1 L_beta is not positive definite") from exc
    X = solve_triangular(C, Lb, lower=True)
    A = solve_triangular(C, X.T, lower=True)
    return DenseOperator(sign * 0.5 * (A + A.T))
