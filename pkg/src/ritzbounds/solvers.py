"""Block eigensolvers with per-step Ritz value recording.

All Krylov-type solvers share one engine parameterized by the operator that
generates new directions, the metric of the inner product and the matrix
used for the Rayleigh-Ritz compression:

=====================  ==================  ========  ============  =========
solver                 generator           metric    compression   targets
=====================  ==================  ========  ============  =========
block Lanczos          A                   I         A             largest
block Davidson         (L - beta S)^-1 S   S         L             smallest
=====================  ==================  ========  ============  =========

Trace layout: with ``k`` inner steps per outer step, an outer step records
the Krylov spaces of degree ``0, ..., k-1``. The last entry of an outer step
is the restart point and doubles as degree 0 of the next outer step, so a run
records ``k + (m-1)(k-1)`` entries.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import (DROP_TOL, MetricError, RankDeficiencyError, block_orthonormalize,
                     sym_eig_small)
from .operators import ChebyshevFilter, HermitianPencil, chebyshev_filter_apply


# ---------------------------------------------------------------------------
# Problem descriptions
# ---------------------------------------------------------------------------

class KrylovProblem:
    """What a block Krylov iteration multiplies, measures and compresses with.

    Parameters
    ----------
    n : int
    generate : callable
        Block map producing the next Krylov directions.
    compress : callable
        Block map ``X -> C X`` defining the projected matrix ``Q^T C Q``.
    metric : callable, optional
        Block map ``X -> M X`` of the inner product; Euclidean if omitted.
    largest : bool
        Whether the wanted Ritz values are the largest (else the smallest).
    locked : ndarray, optional
        Metric-orthonormal columns the iterates are kept orthogonal to.
    norm : float
        Scale used in relative tolerances.
    """

    def __init__(self, n, generate, compress, metric=None, largest=True, locked=None,
                 norm=1.0, description=""):
        self.n = n
        self.generate = generate
        self.compress = compress
        self.metric = metric
        self.largest = largest
        self.norm = float(norm)
        self.description = description
        if locked is None or locked.shape[1] == 0:
            self.locked = np.zeros((n, 0))
            self.locked_image = np.zeros((n, 0))
        else:
            self.locked = np.asarray(locked, dtype=float)
            self.locked_image = metric(self.locked) if metric is not None else self.locked

    def apply_metric(self, X):
        return self.metric(X) if self.metric is not None else X

    @classmethod
    def standard(cls, op):
        return cls(op.n, op.apply, op.apply, norm=op.norm, description=op.describe())

    @classmethod
    def pencil(cls, P: HermitianPencil, locked=None):
        norm = float(np.max(np.abs(P.L)))
        return cls(P.n, lambda X: P.solve(P.S @ X), lambda X: P.L @ X, metric=P.metric,
                   largest=False, locked=locked, norm=norm, description=P.describe())


def as_problem(op):
    if isinstance(op, KrylovProblem):
        return op
    if isinstance(op, HermitianPencil):
        return KrylovProblem.pencil(op)
    return KrylovProblem.standard(op)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass
class BlockKrylovState:
    """Orthonormal Krylov basis with its projected matrix.

    ``image`` holds ``M @ basis`` (the basis itself for the Euclidean
    metric), ``compressed`` holds ``C @ basis`` and ``last`` is the width of
    the most recently appended block.
    """

    basis: np.ndarray
    projected: np.ndarray
    degree: int
    p: int
    image: np.ndarray
    compressed: np.ndarray
    last: int
    stagnated: bool = False


@dataclass
class RitzDecomposition:
    """Ritz values (wanted end first), Ritz vectors and residual norms."""

    values: np.ndarray
    vectors: np.ndarray | None
    residuals: np.ndarray


@dataclass
class IterationTrace:
    """Per-step Ritz snapshots of a solver run.

    Attributes
    ----------
    entries : list of RitzDecomposition
    outer : list of int
        Outer step (1-based) owning each entry; a restart entry belongs to
        the outer step it closes.
    degree : list of int
        Krylov (or filter) degree of each entry within its outer step.
    restarts : list of int
        0-based entry indices where a restart took place.
    meta : dict
    """

    entries: list = field(default_factory=list)
    outer: list = field(default_factory=list)
    degree: list = field(default_factory=list)
    restarts: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    @property
    def values(self):
        """Array of shape (entries, p)."""
        return np.array([e.values for e in self.entries])

    def outer_start(self, s):
        """Entry index holding the starting block of outer step ``s``."""
        return 0 if s == 1 else self.restarts[s - 2]

    def _record(self, ritz, s, c, keep_vectors):
        if not keep_vectors:
            ritz = replace(ritz, vectors=None)
        self.entries.append(ritz)
        self.outer.append(s)
        self.degree.append(c)


@dataclass
class DeflationSet:
    """Locked S-orthonormal eigenvector approximations of a pencil."""

    locked: np.ndarray
    residuals: np.ndarray
    tolerance: float

    @property
    def count(self):
        return self.locked.shape[1]


def make_deflation_set(P: HermitianPencil, V, tolerance=1e-8):
    """Validate and wrap locked vectors.

    Raises ``ValueError`` unless ``V^T S V = I`` to 1e-10 and every column
    has a pencil residual ``||L v - rho(v) S v||`` at most
    ``tolerance * max|L|``.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != P.n:
        raise ValueError("locked block has the wrong shape")
    if V.shape[1]:
        G = V.T @ P.S @ V
        if np.max(np.abs(G - np.eye(V.shape[1]))) > 1e-10:
            raise ValueError("locked vectors are not S-orthonormal")
    rho = np.einsum("ij,ij->j", V, P.L @ V)
    res = np.linalg.norm(P.L @ V - (P.S @ V) * rho, axis=0)
    scale = float(np.max(np.abs(P.L)))
    if np.any(res > tolerance * scale):
        raise ValueError(f"locked residuals {res} exceed the lock tolerance")
    return DeflationSet(V.copy(), res, float(tolerance))


# ---------------------------------------------------------------------------
# Krylov engine
# ---------------------------------------------------------------------------

def _sym(H):
    return 0.5 * (H + H.T)


def _start_block(problem, Y0, p=None):
    Y0 = np.asarray(Y0, dtype=float)
    if Y0.ndim != 2 or Y0.shape[0] != problem.n:
        raise ValueError(f"initial block must have {problem.n} rows")
    if Y0.shape[1] > problem.n:
        raise ValueError("block wider than the problem dimension")
    # each column scaled to unit norm so the drop test measures dependence
    norms = np.linalg.norm(Y0, axis=0)
    if np.any(norms == 0):
        raise RankDeficiencyError("initial block has a zero column")
    Q, MQ = block_orthonormalize(Y0 / norms, basis=problem.locked,
                                 basis_image=problem.locked_image, metric=problem.metric)
    want = Y0.shape[1] if p is None else p
    if Q.shape[1] < want:
        raise RankDeficiencyError(
            f"initial block has numerical rank {Q.shape[1]} < {want}")
    return Q, MQ


def _state_from(problem, Q, MQ, p, CQ=None):
    if CQ is None:
        CQ = problem.compress(Q)
    return BlockKrylovState(basis=Q, projected=_sym(Q.T @ CQ), degree=0, p=p, image=MQ,
                            compressed=CQ, last=Q.shape[1])


def krylov_init(op, Y0) -> BlockKrylovState:
    """Degree-0 state from the orthonormalized initial block.

    Raises
    ------
    RankDeficiencyError
        If ``Y0`` is numerically rank deficient.
    """
    problem = as_problem(op)
    Q, MQ = _start_block(problem, Y0)
    return _state_from(problem, Q, MQ, Q.shape[1])


def krylov_extend(state: BlockKrylovState, op) -> BlockKrylovState:
    """Append the orthonormalized image of the last block.

    Directions that fall below the drop tolerance are removed. When the
    whole block drops, the basis is unchanged, the degree still advances and
    the state is flagged ``stagnated``.
    """
    problem = as_problem(op)
    if state.last == 0:
        return replace(state, degree=state.degree + 1, stagnated=True)
    X = state.basis[:, -state.last:]
    W = problem.generate(X)
    basis = np.hstack([problem.locked, state.basis])
    image = np.hstack([problem.locked_image, state.image])
    Qn, MQn = block_orthonormalize(W, basis=basis, basis_image=image, metric=problem.metric)
    if Qn.shape[1] == 0:
        return replace(state, degree=state.degree + 1, last=0, stagnated=True)
    Cn = problem.compress(Qn)
    cross = state.basis.T @ Cn
    corner = Qn.T @ Cn
    H = np.block([[state.projected, cross], [cross.T, corner]])
    return BlockKrylovState(basis=np.hstack([state.basis, Qn]), projected=_sym(H),
                            degree=state.degree + 1, p=state.p,
                            image=np.hstack([state.image, MQn]),
                            compressed=np.hstack([state.compressed, Cn]),
                            last=Qn.shape[1], stagnated=state.stagnated)


def _ritz_coefficients(state, largest, top):
    dim = state.basis.shape[1]
    if not 1 <= top <= dim:
        raise ValueError(f"requested {top} Ritz pairs from a {dim}-dimensional space")
    vals, V = sym_eig_small(state.projected)
    if largest:
        return vals[:top], V[:, :top]
    return vals[::-1][:top].copy(), V[:, ::-1][:, :top]


def ritz_pairs(state: BlockKrylovState, op, top: int) -> RitzDecomposition:
    """The ``top`` wanted Ritz pairs of the current space.

    Values come largest first for standard operators and smallest first for
    pencils; residuals are ``||C y - theta M y||``.
    """
    problem = as_problem(op)
    vals, V = _ritz_coefficients(state, problem.largest, top)
    Y = state.basis @ V
    R = state.compressed @ V - (state.image @ V) * vals
    return RitzDecomposition(vals, Y, np.linalg.norm(R, axis=0))


def _restart_state(problem, state, p):
    vals, V = _ritz_coefficients(state, problem.largest, p)
    Q = state.basis @ V
    CQ = state.compressed @ V
    return BlockKrylovState(basis=Q, projected=_sym(Q.T @ CQ), degree=0, p=p,
                            image=state.image @ V, compressed=CQ, last=p)


def _check_run_args(p, k, m, n):
    for name, v in (("p", p), ("k", k), ("m", m)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v}")
    if p > n:
        raise ValueError("block size exceeds the dimension")


def _run_restarted(problem, Y0, p, k, m, record, meta):
    _check_run_args(p, k, m, problem.n)
    Q, MQ = _start_block(problem, Y0, p)
    if Q.shape[1] != p:
        raise ValueError(f"initial block must have exactly p={p} columns")
    state = _state_from(problem, Q, MQ, p)
    trace = IterationTrace(meta=dict(meta, p=p, k=k, m=m, degree=k - 1,
                                     operator=problem.description,
                                     largest=problem.largest))
    keep = bool(record)
    trace._record(ritz_pairs(state, problem, p), 1, 0, keep)
    for s in range(1, m + 1):
        if s > 1:
            trace.restarts.append(len(trace) - 1)
            state = _restart_state(problem, state, p)
        for c in range(1, k):
            state = krylov_extend(state, problem)
            trace._record(ritz_pairs(state, problem, p), s, c, keep)
    return trace


def run_restarted_block_lanczos(op, Y0, p, k, m, record=True, meta=None):
    """Restarted block Lanczos with full reorthogonalization.

    Each outer step grows the block Krylov space of the current block to
    degree ``k - 1`` (``k`` recorded inner steps counting the start) and
    restarts from the Ritz vectors of the ``p`` largest Ritz values.

    Parameters
    ----------
    op : operator
        Symmetric operator with ``apply``, ``n`` and ``norm``.
    Y0 : ndarray, shape (n, p)
    p, k, m : int
        Block size, inner steps per outer step, outer steps.
    record : bool
        Keep Ritz vectors in every entry (needed by the bound tracker).

    Returns
    -------
    IterationTrace
    """
    return _run_restarted(KrylovProblem.standard(op), Y0, p, k, m, record, meta or {})


def run_restarted_block_davidson(P: HermitianPencil, Z0, p, k, m, record=True, meta=None,
                                 locked=None):
    """Restarted block Davidson for the smallest pencil eigenvalues.

    The Krylov space of ``(L - beta S)^{-1} S`` is built with S-orthonormal
    columns and compressed with ``L``; restarts keep the Ritz vectors of the
    ``p`` smallest Ritz values. Trace values are ascending.
    """
    return _run_restarted(KrylovProblem.pencil(P, locked), Z0, p, k, m, record, meta or {})


def run_filtered_iteration(op, Y0, p, filt: ChebyshevFilter, m, record=True, meta=None):
    """Block iteration ``Y <- RR[p](f(A) Y)`` with a Chebyshev filter.

    Records the starting block (outer step 0) and each of the ``m``
    filtered iterates.

    Raises
    ------
    RankDeficiencyError
        If ``f(A) Y`` loses rank.
    """
    problem = KrylovProblem.standard(op)
    _check_run_args(p, 1, m, problem.n)
    Q, MQ = _start_block(problem, Y0, p)
    state = _state_from(problem, Q, MQ, p)
    trace = IterationTrace(meta=dict(meta or {}, p=p, m=m, degree=filt.degree,
                                     filter=(filt.degree, filt.a, filt.b),
                                     operator=problem.description, largest=True))
    ritz = ritz_pairs(state, problem, p)
    trace._record(ritz, 0, 0, record)
    for ell in range(1, m + 1):
        W = chebyshev_filter_apply(filt, op, ritz.vectors)
        norms = np.linalg.norm(W, axis=0)
        if np.any(norms == 0) or not np.all(np.isfinite(norms)):
            raise RankDeficiencyError(f"filtered block degenerate at step {ell}")
        Q, MQ = block_orthonormalize(W / norms)
        if Q.shape[1] < p:
            raise RankDeficiencyError(
                f"filtered block has rank {Q.shape[1]} < {p} at step {ell}; "
                "the start block is (numerically) deficient in the wanted eigenvectors")
        state = _state_from(problem, Q, MQ, p)
        ritz = ritz_pairs(state, problem, p)
        trace._record(ritz, ell, filt.degree, record)
    return trace


def run_block_shift_invert(P: HermitianPencil, Z0, p, m, record=True, meta=None, locked=None):
    """Block shift-and-invert iteration ``Z <- RR[p]((L - beta S)^{-1} S Z)``.

    Records the starting block and the ``m`` iterates; values ascending.
    """
    problem = KrylovProblem.pencil(P, locked)
    _check_run_args(p, 1, m, problem.n)
    Q, MQ = _start_block(problem, Z0, p)
    state = _state_from(problem, Q, MQ, p)
    trace = IterationTrace(meta=dict(meta or {}, p=p, m=m, degree=1,
                                     operator=problem.description, largest=False))
    ritz = ritz_pairs(state, problem, p)
    trace._record(ritz, 0, 0, record)
    for ell in range(1, m + 1):
        W = problem.generate(ritz.vectors)
        norms = np.sqrt(np.einsum("ij,ij->j", W, problem.apply_metric(W)))
        Q, MQ = block_orthonormalize(W / norms, basis=problem.locked,
                                     basis_image=problem.locked_image, metric=problem.metric)
        if Q.shape[1] < p:
            raise RankDeficiencyError(f"shift-invert block lost rank at step {ell}")
        state = _state_from(problem, Q, MQ, p)
        ritz = ritz_pairs(state, problem, p)
        trace._record(ritz, ell, 1, record)
    return trace


def deflate_and_continue(P: HermitianPencil, D: DeflationSet, Z0, p, solver="davidson",
                         k=2, m=1, record=True, meta=None):
    """Run a pencil solver in the S-orthogonal complement of locked vectors.

    Parameters
    ----------
    solver : {"davidson", "shift-invert"}
    k : int
        Inner steps per outer step (Davidson only).
    """
    meta = dict(meta or {}, locked_count=D.count)
    if solver == "davidson":
        return run_restarted_block_davidson(P, Z0, p, k, m, record, meta, locked=D.locked)
    if solver == "shift-invert":
        return run_block_shift_invert(P, Z0, p, m, record, meta, locked=D.locked)
    raise ValueError(f"unknown solver {solver!r}")


__all__ = [
    "KrylovProblem", "BlockKrylovState", "RitzDecomposition", "IterationTrace",
    "DeflationSet", "make_deflation_set", "krylov_init", "krylov_extend", "ritz_pairs",
    "run_restarted_block_lanczos", "run_restarted_block_davidson", "run_filtered_iteration",
    "run_block_shift_invert", "deflate_and_continue", "MetricError", "DROP_TOL",
]
