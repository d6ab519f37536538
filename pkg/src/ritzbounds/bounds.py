"""Angle-free Ritz value bounds and the per-step bound tracker.

Every bound contracts the gap-relative error measure

    (a - psi) / (psi - b),     b < psi <= a,

of a Ritz value ``psi`` by a squared Chebyshev convergence factor. Factors
are carried as natural logarithms since products of many steps underflow
double precision.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import (RankDeficiencyError, orthonormalize, principal_angle_tan,
                     sym_eig_small)
from .operators import Spectrum, chebyshev_log_value

REL_TOL = 1e-14
NULL_SV_TOL = 1e-10


class AssumptionError(ValueError):
    """An ordering assumption of a bound does not hold."""


# ---------------------------------------------------------------------------
# Error measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorMeasure:
    a: float
    b: float
    value: float


def measure(a: float, b: float, psi: float) -> ErrorMeasure:
    """``(a - psi) / (psi - b)`` for ``b < psi <= a``.

    Examples
    --------
    >>> measure(2.0, 1.0, 1.2).value
    3.9999999999999996
    """
    if not b < a:
        raise ValueError(f"need b < a, got a={a}, b={b}")
    if not (b < psi <= a):
        raise AssumptionError(f"psi={psi!r} outside ({b!r}, {a!r}]")
    return ErrorMeasure(a, b, (a - psi) / (psi - b))


def _clamped_measure(a, b, psi):
    # psi >= a: the bound already places psi at or above a
    if psi >= a:
        return 0.0
    return (a - psi) / (psi - b)


def error_from_measure_bound(a: float, b: float, B: float) -> float:
    """Largest ``a - psi`` compatible with ``(a - psi)/(psi - b) <= B``."""
    if B < 0:
        raise ValueError("measure bound must be nonnegative")
    if math.isinf(B):
        return a - b
    return B * (a - b) / (1.0 + B)


def _log_abs_error(target, a, b, log_B):
    """``log10`` of ``(target - a) + B (a - b)/(1 + B)`` with ``B = exp(log_B)``."""
    if log_B == -math.inf:
        log_tail = -math.inf
    else:
        # log(B/(1+B)) = -log(1 + 1/B)
        log_tail = math.log(a - b) - _log1pexp(-log_B)
    head = target - a
    if head == 0.0:
        return log_tail / math.log(10.0)
    total = head + math.exp(log_tail)
    return math.log10(total) if total > 0 else -math.inf


def _log1pexp(x):
    if x > 35:
        return x
    return math.log1p(math.exp(x))


# ---------------------------------------------------------------------------
# Parameters and factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundParams:
    """Indices of a bound: Ritz index ``i``, block size ``p``, skip index ``t``,
    Chebyshev degree ``k`` and number of outer steps ``m``."""

    i: int
    p: int
    t: int
    k: int
    m: int = 1

    def __post_init__(self):
        for name in ("i", "p", "t", "k", "m"):
            v = getattr(self, name)
            if int(v) != v:
                raise ValueError(f"{name} must be an integer")
        if not 1 <= self.i <= self.p:
            raise ValueError(f"need 1 <= i <= p, got i={self.i}, p={self.p}")
        if self.t < 1:
            raise ValueError("t must be positive")
        if self.k < 0:
            raise ValueError("degree k must be nonnegative")
        if self.m < 0:
            raise ValueError("m must be nonnegative")


@dataclass(frozen=True)
class BoundFactor:
    """``log`` of the squared convergence factor and its provenance."""

    log_value: float
    mode: str
    params: BoundParams
    target_index: int
    vacuous: bool = False

    @property
    def value(self):
        return math.exp(self.log_value)


def _gap_tol(x, y):
    return REL_TOL * max(abs(x), abs(y), 1e-300)


def sigma_factor(spec: Spectrum, params: BoundParams, target_index: int | None = None,
                 mode: str = "nonconsecutive") -> BoundFactor:
    """Squared Chebyshev convergence factor raised to the power ``m``.

    ``log_value = -2 m log T_k(1 + 2 (lam_a - lam_{t+1}) / (lam_{t+1} - lam_n))``
    with ``a = t - p + i`` (nonconsecutive) or ``a = t`` (consecutive) unless
    ``target_index`` is given.

    Raises
    ------
    ValueError
        If ``lam_{t+1} = lam_n`` (empty filter interval).
    AssumptionError
        If ``lam_target < lam_{t+1}``.
    """
    n = spec.n
    t = params.t
    if not 1 <= t <= n - 1:
        raise AssumptionError(f"t={t} outside 1..{n - 1}")
    if target_index is None:
        if mode == "nonconsecutive":
            target_index = t - params.p + params.i
        elif mode == "consecutive":
            target_index = t
        else:
            raise ValueError(f"unknown mode {mode!r}")
    lt1, ln = spec.lam(t + 1), spec.lam(n)
    if lt1 - ln <= _gap_tol(lt1, ln):
        raise ValueError(f"filter interval [lam_n, lam_{t + 1}] is empty")
    la = spec.lam(target_index)
    gap = la - lt1
    if gap < -_gap_tol(la, lt1):
        raise AssumptionError(f"lam_{target_index} < lam_{t + 1}")
    if gap <= _gap_tol(la, lt1):
        return BoundFactor(0.0, mode, params, target_index, vacuous=True)
    x = 1.0 + 2.0 * gap / (lt1 - ln)
    return BoundFactor(-2.0 * params.m * chebyshev_log_value(params.k, x), mode, params,
                       target_index)


def t_index_select(spec: Spectrum, psi: float, floor: int, with_tie: bool = False):
    """Skip index ``t >= floor`` with ``lam_{t+1} < psi <= lam_t``.

    Comparisons use a relative tolerance of 1e-14; ``psi`` equal to an
    eigenvalue counts as not yet past it. If ``psi > lam_floor`` the result
    is ``floor``.

    Raises
    ------
    AssumptionError
        If ``psi <= lam_n``.
    """
    lam = spec.eigenvalues
    tol = REL_TOL * np.maximum(np.abs(lam), abs(psi))
    at_or_above = lam >= psi - tol
    count = int(np.count_nonzero(at_or_above))
    if count >= spec.n:
        raise AssumptionError(f"psi={psi!r} is not above lam_n={lam[-1]!r}")
    t = max(count, int(floor))
    if with_tie:
        tie = bool(np.any(np.abs(lam - psi) <= tol))
        return t, tie
    return t


# ---------------------------------------------------------------------------
# Bound values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundValue:
    """Bound ``exp(log_value)`` on the measure with reference pair ``(a, b)``.

    A flagged value carries ``nan`` and the reason in ``flag``.
    """

    log_value: float
    a: float
    b: float
    theorem: str
    t: int | None = None
    flag: str | None = None
    vacuous: bool = False
    baseline_measure: float = math.nan

    @property
    def value(self):
        return math.nan if self.flag else math.exp(self.log_value)

    def abs_error(self, target):
        """Upper bound on ``target - psi`` implied by the measure bound."""
        if self.flag:
            return math.nan
        return (target - self.a) + error_from_measure_bound(self.a, self.b, self.value)

    def log10_abs_error(self, target):
        if self.flag:
            return math.nan
        return _log_abs_error(target, self.a, self.b, self.log_value)


def _flagged(theorem, reason, a=math.nan, b=math.nan, t=None):
    return BoundValue(math.nan, a, b, theorem, t=t, flag=reason)


def _combine(factor: BoundFactor, a, b, baseline, theorem, t):
    if not baseline > b:
        return _flagged(theorem, "assumption", a, b, t)
    meas = _clamped_measure(a, b, baseline)
    log_meas = math.log(meas) if meas > 0 else -math.inf
    return BoundValue(factor.log_value + log_meas, a, b, theorem, t=t,
                      vacuous=factor.vacuous, baseline_measure=meas)


def bound_step_nonconsecutive(spec: Spectrum, params: BoundParams, baseline_psi_p: float,
                              eta_tilde: float | None = None) -> BoundValue:
    """Bound on ``(lam_{t-p+i} - psi_i') / (psi_i' - lam_{t+1})``.

    The baseline measure uses ``eta_tilde`` (smallest Ritz value in an
    i-dimensional subspace orthogonal to the skipped eigenvectors) when
    given, else ``baseline_psi_p``. Requires ``psi_p > lam_{t+1}``.
    """
    theorem = "nonconsecutive-eta" if eta_tilde is not None else "nonconsecutive"
    if params.m != 1:
        theorem = "multistep-" + theorem
    n, t, p, i = spec.n, params.t, params.p, params.i
    if not p <= t <= n - 1:
        return _flagged(theorem, "index", t=t)
    a, b = spec.lam(t - p + i), spec.lam(t + 1)
    if not baseline_psi_p > b:
        return _flagged(theorem, "assumption", a, b, t)
    if eta_tilde is not None and not eta_tilde > b:
        return _flagged(theorem, "assumption", a, b, t)
    try:
        factor = sigma_factor(spec, params, mode="nonconsecutive")
    except (AssumptionError, ValueError) as exc:
        return _flagged(theorem, "interval" if "empty" in str(exc) else "assumption", a, b, t)
    base = eta_tilde if eta_tilde is not None else baseline_psi_p
    return _combine(factor, a, b, base, theorem, t)


def bound_step_consecutive(spec: Spectrum, params: BoundParams,
                           baseline_psi_i: float) -> BoundValue:
    """Bound on ``(lam_t - psi_i') / (psi_i' - lam_{t+1})``.

    Requires ``psi_i > lam_{t+1}`` and ``i <= t <= n - p + i - 1``.
    """
    theorem = "consecutive" if params.m == 1 else "multistep-consecutive"
    n, t, p, i = spec.n, params.t, params.p, params.i
    if not i <= t <= n - p + i - 1:
        return _flagged(theorem, "index", t=t)
    a, b = spec.lam(t), spec.lam(t + 1)
    if not baseline_psi_i > b:
        return _flagged(theorem, "assumption", a, b, t)
    try:
        factor = sigma_factor(spec, params, mode="consecutive")
    except (AssumptionError, ValueError) as exc:
        return _flagged(theorem, "interval" if "empty" in str(exc) else "assumption", a, b, t)
    return _combine(factor, a, b, baseline_psi_i, theorem, t)


def bound_multistep(spec: Spectrum, params: BoundParams, baseline: float,
                    mode: str = "nonconsecutive", eta_tilde: float | None = None) -> BoundValue:
    """Bound after ``params.m`` outer steps of degree ``params.k``.

    Same as the single-step bounds with the factor raised to ``m``;
    ``baseline`` is ``psi_p`` (nonconsecutive) or ``psi_i`` (consecutive) at
    the anchor.
    """
    if mode == "nonconsecutive":
        return bound_step_nonconsecutive(spec, params, baseline, eta_tilde)
    if mode == "consecutive":
        return bound_step_consecutive(spec, params, baseline)
    raise ValueError(f"unknown mode {mode!r}")


def bound_classical(spec: Spectrum, p: int, k: int, baseline_psi_p: float, m: int = 1):
    """Classical bound for the p-th Ritz value, written out directly.

    ``(lam_p - psi_p') / (psi_p' - lam_{p+1}) <= T_k(x)^{-2m} (lam_p - psi_p) / (psi_p - lam_{p+1})``
    with ``x = 1 + 2 (lam_p - lam_{p+1}) / (lam_{p+1} - lam_n)``. Returns the
    natural log of the bound.
    """
    lp, lp1, ln = spec.lam(p), spec.lam(p + 1), spec.lam(spec.n)
    x = 1.0 + 2.0 * (lp - lp1) / (lp1 - ln)
    log_factor = -2.0 * m * chebyshev_log_value(k, x)
    meas = _clamped_measure(lp, lp1, baseline_psi_p)
    return log_factor + (math.log(meas) if meas > 0 else -math.inf)


# ---------------------------------------------------------------------------
# Subspace constructions
# ---------------------------------------------------------------------------

def intersection_subspace(Y, op, skip, i: int) -> np.ndarray:
    """Orthonormal ``i``-dimensional subspace of ``span(Y)`` orthogonal to
    the eigenvectors ``x_j``, ``j`` in ``skip`` (1-based).

    The nullspace of ``X_skip^T Y`` comes from the eigen-decomposition of
    its Gram matrix: singular values below 1e-10 count as zero, and the
    ``p - len(skip)`` smallest always do (the constraint has that many fewer
    rows than columns). A
    nullspace larger than ``i`` is reduced to the span of its ``i`` largest
    Ritz vectors.

    Raises
    ------
    RankDeficiencyError
        If the nullspace has dimension below ``i``.
    """
    Y = np.asarray(Y, dtype=float)
    p = Y.shape[1]
    skip = list(skip)
    if skip:
        C = op.eigenvectors(skip).T @ Y
        G = C.T @ C
        vals, V = sym_eig_small(0.5 * (G + G.T))
        sv = np.sqrt(np.maximum(vals, 0.0))
        # a (p - i) x p constraint has nullity >= p - len(skip) exactly, while
        # the Gram route lifts zero singular values to about sqrt(eps)
        nullity = max(int(np.count_nonzero(sv < NULL_SV_TOL)), p - len(skip))
        N = V[:, p - nullity:] if nullity else V[:, :0]
    else:
        N = np.eye(p)
    r = N.shape[1]
    if r < i:
        raise RankDeficiencyError(f"intersection has dimension {r} < {i}")
    Z = Y @ N
    if r > i:
        H = Z.T @ op.apply(Z)
        _, W = sym_eig_small(0.5 * (H + H.T))
        Z = Z @ W[:, :i]
    Z, rank = orthonormalize(Z)
    if rank < i:
        raise RankDeficiencyError(f"intersection basis lost rank ({rank} < {i})")
    return Z


def smallest_ritz_value(op, Z) -> float:
    H = Z.T @ op.apply(Z)
    return float(sym_eig_small(0.5 * (H + H.T))[0][-1])


def angle_subspace(Y, X, i):
    """``Y (X^T Y)^{-1} [e_1 .. e_i]``, orthonormalized; ``None`` if singular."""
    M = X.T @ Y
    G = M.T @ M
    smallest = float(sym_eig_small(0.5 * (G + G.T))[0][-1])
    if math.sqrt(max(smallest, 0.0)) <= 1e-15:
        return None
    E = np.eye(M.shape[0])[:, :i]
    Q, rank = orthonormalize(Y @ np.linalg.solve(M, E))
    return Q if rank == i else None


def angle_tangent(op, Y, i, p):
    """``tan`` of the angle between ``span{x_1..x_i}`` and the angle subspace."""
    X = op.eigenvectors(range(1, p + 1))
    Q = angle_subspace(Y, X, i)
    if Q is None:
        return math.inf
    return principal_angle_tan(X[:, :i], Q)


def bound_angle_dependent(op, Y, params: BoundParams, degree_budget, tan_value=None):
    """Angle-dependent bound on ``(lam_i - psi_i) / (psi_i - lam_n)``.

    Parameters
    ----------
    op : operator with ``spectrum`` and ``eigenvectors``
    Y : ndarray, shape (n, p)
        Orthonormal basis of the anchor subspace.
    params : BoundParams
        ``i``, ``p`` and the per-outer-step degree ``k`` (``t`` unused).
    degree_budget : tuple (c, s)
        Degree ``c`` reached inside outer step ``s``; the factor is
        ``[T_c(x) T_k(x)^(s-1)]^-2`` with
        ``x = 1 + 2 (lam_i - lam_{p+1}) / (lam_{p+1} - lam_n)``.
    tan_value : float, optional
        Precomputed tangent.
    """
    spec = op.spectrum
    i, p, k = params.i, params.p, params.k
    c, s = degree_budget
    n = spec.n
    a, b = spec.lam(i), spec.lam(n)
    theorem = "angle"
    if tan_value is None:
        tan_value = angle_tangent(op, Y, i, p)
    if math.isinf(tan_value):
        return _flagged(theorem, "infinite-angle", a, b)
    lp1 = spec.lam(p + 1)
    if lp1 - b <= _gap_tol(lp1, b):
        return _flagged(theorem, "interval", a, b)
    gap = a - lp1
    vacuous = gap <= _gap_tol(a, lp1)
    if vacuous:
        log_factor = 0.0
    else:
        x = 1.0 + 2.0 * gap / (lp1 - b)
        log_factor = -2.0 * chebyshev_log_value(c, x) - 2.0 * (s - 1) * chebyshev_log_value(k, x)
    log_tan2 = 2.0 * math.log(tan_value) if tan_value > 0 else -math.inf
    return BoundValue(log_factor + log_tan2, a, b, theorem, vacuous=vacuous,
                      baseline_measure=tan_value ** 2)


# ---------------------------------------------------------------------------
# Pencil bounds
# ---------------------------------------------------------------------------

def _pencil_factor_log(alpha, beta, lo, i_idx, p1_idx, k, m, variant):
    ai, ap1, an = alpha[i_idx - 1], alpha[p1_idx - 1], alpha[-1]
    if variant == "bsib":
        return 2.0 * m * (math.log(ai - beta) - math.log(ap1 - beta))
    mu_i, mu_p1, mu_n = 1.0 / (ai - beta), 1.0 / (ap1 - beta), 1.0 / (an - beta)
    x = 1.0 + 2.0 * (mu_i - mu_p1) / (mu_p1 - mu_n)
    return -2.0 * m * chebyshev_log_value(k, x)


def _pencil_bound(alpha, beta, c, params: BoundParams, baseline_theta_p, variant):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(np.diff(alpha) < 0):
        raise ValueError("pencil eigenvalues must be ascending")
    if variant not in ("bsib", "irblb"):
        raise ValueError(f"unknown variant {variant!r}")
    i, p, k, m = params.i, params.p, params.k, params.m
    n = alpha.size
    if not beta < alpha[c]:
        raise ValueError(f"shift {beta} not below alpha_{c + 1} = {alpha[c]}")
    if c + p + 1 > n:
        raise ValueError("block too large for the remaining spectrum")
    theorem = ("deflated-" if c else "") + ("shift-invert-power" if variant == "bsib"
                                            else "shift-invert-krylov")
    ai, ap1 = float(alpha[c + i - 1]), float(alpha[c + p])
    # measure in negated variables: a = -alpha_{c+i}, b = -alpha_{c+p+1}
    a, b = -ai, -ap1
    if ap1 - ai <= _gap_tol(ai, ap1):
        return BoundValue(0.0 if baseline_theta_p < ap1 else math.nan, a, b, theorem,
                          t=p, vacuous=True,
                          flag=None if baseline_theta_p < ap1 else "assumption")
    if variant == "irblb" and float(alpha[-1]) - ap1 <= _gap_tol(ap1, alpha[-1]):
        return _flagged(theorem, "interval", a, b, p)
    log_factor = _pencil_factor_log(alpha, beta, c, c + i, c + p + 1, k, m, variant)
    return _combine(BoundFactor(log_factor, variant, params, c + i), a, b,
                    -float(baseline_theta_p), theorem, p)


def shift_invert_bound(alpha, beta, params: BoundParams, baseline_theta_p,
                       variant="irblb") -> BoundValue:
    """Bound on ``(theta_i - alpha_i) / (alpha_{p+1} - theta_i)`` for pencils.

    ``variant="bsib"``: power iteration, factor
    ``((alpha_i - beta)/(alpha_{p+1} - beta))^(2m)``. ``variant="irblb"``:
    restarted Krylov iteration of degree ``k``, Chebyshev factor in the
    transformed eigenvalues ``(alpha - beta)^-1``. ``alpha`` is ascending.

    The returned value lives on negated variables (``a = -alpha_i``,
    ``b = -alpha_{p+1}``) so ``abs_error(-alpha_i)`` bounds ``theta_i - alpha_i``.
    """
    return _pencil_bound(alpha, beta, 0, params, baseline_theta_p, variant)


def deflation_bound(alpha, c: int, beta, params: BoundParams, baseline_theta_p,
                    variant="irblb") -> BoundValue:
    """Pencil bound after locking ``c`` eigenvectors (indices shifted by ``c``).

    Requires ``beta < alpha_{c+1}``.
    """
    return _pencil_bound(alpha, beta, int(c), params, baseline_theta_p, variant)


# ---------------------------------------------------------------------------
# Tracker
# ---------------------------------------------------------------------------

@dataclass
class BoundCurve:
    """Per-step error bounds for a set of Ritz indices.

    ``log10_error[e, j]`` bounds ``log10(target_j - psi_j)`` at trace entry
    ``e`` (``nan`` where flagged, ``-inf`` for a zero bound); ``t`` and
    ``theorem`` record the active skip index and bound; ``flags`` gives the
    failure reason of flagged entries.
    """

    which: str
    indices: list
    log10_error: np.ndarray
    log_measure: np.ndarray
    t: np.ndarray
    theorem: np.ndarray
    flags: np.ndarray
    anchors: list = field(default_factory=list)

    @property
    def error(self):
        return np.power(10.0, self.log10_error)


@dataclass
class _Anchor:
    entry: int
    t: int | None
    baseline: float | None
    baseline_psi_p: float | None
    flag: str | None = None
    level: int = 0
    degree: int = 0


def _make_anchor(op, trace, e, i, which, p):
    spec = op.spectrum
    vals = trace.entries[e].values
    ref = vals[p - 1] if which == "B1" else vals[i - 1]
    floor = p if which == "B1" else i
    try:
        t = t_index_select(spec, float(ref), floor)
    except AssumptionError:
        return _Anchor(e, None, None, None, flag="assumption")
    if which == "B1":
        skip = range(t - p + i + 1, t + 1)
        if not skip:
            # the intersection is the whole anchor space: eta_i = psi_i
            return _Anchor(e, t, float(vals[i - 1]), float(vals[p - 1]))
        vecs = trace.entries[e].vectors
        if vecs is None:
            raise ValueError("trace was recorded without Ritz vectors")
        try:
            Z = intersection_subspace(vecs, op, skip, i)
        except RankDeficiencyError:
            return _Anchor(e, t, None, float(vals[p - 1]), flag="rank")
        eta = smallest_ritz_value(op, Z)
        return _Anchor(e, t, eta, float(vals[p - 1]))
    return _Anchor(e, t, float(vals[i - 1]), float(vals[p - 1]))


def _anchor_bound(spec, anchor, which, i, p, k, m):
    theorem = "nonconsecutive-eta" if which == "B1" else "consecutive"
    if anchor.flag:
        return _flagged(theorem, anchor.flag, t=anchor.t)
    params = BoundParams(i=i, p=p, t=anchor.t, k=k, m=m)
    if which == "B1":
        return bound_step_nonconsecutive(spec, params, anchor.baseline_psi_p, anchor.baseline)
    return bound_step_consecutive(spec, params, anchor.baseline)


def _ref_t(op, trace, e, i, which, p):
    vals = trace.entries[e].values
    ref = vals[p - 1] if which == "B1" else vals[i - 1]
    try:
        return t_index_select(op.spectrum, float(ref), p if which == "B1" else i)
    except AssumptionError:
        return None


def bound_tracker_run(op, trace, which: str, indices=None) -> BoundCurve:
    """Walk a restarted block Lanczos trace and emit bound curves.

    ``which`` is ``"B1"`` (nonconsecutive bound with the intersection-based
    baseline), ``"B2"`` (consecutive bound anchored on ``psi_i``) or
    ``"B3"`` (angle-dependent bound anchored at the starting block).

    Entries closing an outer step that is followed by a restart use the
    multi-step bound from the outer anchor; all other entries use the
    single-step bound from the inner anchor with the degree reached since
    the anchor. An anchor moves to the current Ritz subspace when its Ritz
    value has passed a further eigenvalue (``t`` decreases); the bound of
    that entry still uses the old anchor.
    """
    if which not in ("B1", "B2", "B3"):
        raise ValueError(f"unknown bound {which!r}")
    spec = op.spectrum
    meta = trace.meta
    p = meta["p"]
    d = meta["degree"]
    if indices is None:
        indices = list(range(1, p + 1))
    E, I = len(trace), len(indices)
    log10_err = np.full((E, I), np.nan)
    log_meas = np.full((E, I), np.nan)
    t_arr = np.full((E, I), -1, dtype=int)
    theo = np.full((E, I), "", dtype=object)
    flags = np.full((E, I), "", dtype=object)
    anchors = []
    restarts = set(trace.restarts)

    def store(e, j, bv, i):
        theo[e, j] = bv.theorem
        if bv.t is not None:
            t_arr[e, j] = bv.t
        if bv.flag:
            flags[e, j] = bv.flag
            return
        log_meas[e, j] = bv.log_value
        log10_err[e, j] = bv.log10_abs_error(spec.lam(i))

    for j, i in enumerate(indices):
        if not 1 <= i <= p:
            raise ValueError(f"Ritz index {i} outside 1..{p}")
        if which == "B3":
            Y0 = trace.entries[0].vectors
            tan_value = angle_tangent(op, Y0, i, p)
            for e in range(E):
                bv = bound_angle_dependent(op, Y0, BoundParams(i=i, p=p, t=p, k=d),
                                           (trace.degree[e], trace.outer[e]), tan_value)
                store(e, j, bv, i)
            continue
        inner = _make_anchor(op, trace, 0, i, which, p)
        outer = inner
        anchors.append((i, 0, "start", inner.t))
        for e in range(E):
            s, c = trace.outer[e], trace.degree[e]
            if e in restarts:
                bv = _anchor_bound(spec, outer, which, i, p, d, s - outer.level)
                if not bv.flag:
                    bv = _retag(bv, "multistep-")
            else:
                bv = _anchor_bound(spec, inner, which, i, p, c - inner.degree, 1)
            store(e, j, bv, i)
            t_now = _ref_t(op, trace, e, i, which, p)
            if e in restarts:
                inner = _make_anchor(op, trace, e, i, which, p)
                inner.degree = 0
                if outer.flag or (t_now is not None and outer.t is not None and t_now < outer.t):
                    outer = _make_anchor(op, trace, e, i, which, p)
                    outer.level = s
                    anchors.append((i, e, "outer", outer.t))
            elif inner.flag or (t_now is not None and inner.t is not None and t_now < inner.t):
                inner = _make_anchor(op, trace, e, i, which, p)
                inner.degree = c
                anchors.append((i, e, "inner", inner.t))
    return BoundCurve(which, list(indices), log10_err, log_meas, t_arr, theo, flags, anchors)


def _retag(bv: BoundValue, prefix):
    if bv.theorem.startswith(prefix):
        return bv
    return BoundValue(bv.log_value, bv.a, bv.b, prefix + bv.theorem, bv.t, bv.flag,
                      bv.vacuous, bv.baseline_measure)


def pencil_tracker_run(alpha, beta, trace, indices=None, locked_count=0) -> BoundCurve:
    """Bound curves for shift-and-invert, Davidson and deflated traces.

    Power-iteration traces (``meta["k"]`` absent) use the power bound with
    ``m`` counted from the first step whose ``theta_p`` lies below
    ``alpha_{c+p+1}``. Krylov traces use the multi-step Chebyshev bound at
    restart entries and the single-step bound at the degree reached inside
    each outer step; an anchor violating ``theta_p < alpha_{c+p+1}`` moves to
    the first later entry that satisfies it.
    """
    alpha = np.asarray(alpha, dtype=float)
    meta = trace.meta
    p = meta["p"]
    c0 = int(locked_count)
    power = "k" not in meta
    d = meta["degree"]
    if indices is None:
        indices = list(range(1, p + 1))
    E, I = len(trace), len(indices)
    log10_err = np.full((E, I), np.nan)
    log_meas = np.full((E, I), np.nan)
    t_arr = np.full((E, I), -1, dtype=int)
    theo = np.full((E, I), "", dtype=object)
    flags = np.full((E, I), "", dtype=object)
    restarts = set(trace.restarts)
    ap1 = alpha[c0 + p]

    def ok(e):
        return trace.entries[e].values[p - 1] < ap1

    def bound(i, k, m, e_anchor):
        params = BoundParams(i=i, p=p, t=p, k=k, m=m)
        return deflation_bound(alpha, c0, beta, params, trace.entries[e_anchor].values[p - 1],
                               "bsib" if power else "irblb")

    for j, i in enumerate(indices):
        target = -float(alpha[c0 + i - 1])
        inner_e, inner_deg, outer_e, outer_level = 0, 0, 0, 0
        for e in range(E):
            if power:
                a_ok = ok(outer_e)
                bv = bound(i, 1, e - outer_e, outer_e) if a_ok else None
            elif e in restarts:
                a_ok = ok(outer_e)
                bv = bound(i, d, trace.outer[e] - outer_level, outer_e) if a_ok else None
                if bv is not None and not bv.flag:
                    bv = _retag(bv, "multistep-")
            else:
                a_ok = ok(inner_e)
                bv = bound(i, trace.degree[e] - inner_deg, 1, inner_e) if a_ok else None
            if bv is None:
                flags[e, j] = "assumption"
            else:
                theo[e, j] = bv.theorem
                t_arr[e, j] = p
                if bv.flag:
                    flags[e, j] = bv.flag
                else:
                    log_meas[e, j] = bv.log_value
                    log10_err[e, j] = bv.log10_abs_error(target)
            if power:
                if not ok(outer_e) and ok(e):
                    outer_e = e
            elif e in restarts:
                inner_e, inner_deg = e, 0
                if not ok(outer_e):
                    outer_e, outer_level = e, trace.outer[e]
            elif not ok(inner_e) and ok(e):
                inner_e, inner_deg = e, trace.degree[e]
    return BoundCurve("pencil", list(indices), log10_err, log_meas, t_arr, theo, flags, [])
