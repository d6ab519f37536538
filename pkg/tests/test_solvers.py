import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ritzbounds.linalg import RankDeficiencyError
from ritzbounds.operators import (ChebyshevFilter, DenseOperator, DiagonalOperator,
                                  HermitianPencil, pencil_to_standard)
from ritzbounds.rng import random_block, trial_seed
from ritzbounds.lab import spectrum_example1
from ritzbounds.solvers import (deflate_and_continue, krylov_extend, krylov_init,
                                make_deflation_set, ritz_pairs, run_block_shift_invert,
                                run_filtered_iteration, run_restarted_block_davidson,
                                run_restarted_block_lanczos)


def _orth(K):
    U, s, _ = np.linalg.svd(K, full_matrices=False)
    return U[:, s > 1e-13 * s[0]]


def _krylov_rr(A, Y, degree):
    """Rayleigh-Ritz on the explicitly assembled block Krylov basis."""
    blocks = [Y / np.linalg.norm(Y, axis=0)]
    for _ in range(degree):
        W = A @ blocks[-1]
        blocks.append(W / np.linalg.norm(W, axis=0))
    U = _orth(np.hstack(blocks))
    vals, V = np.linalg.eigh(U.T @ A @ U)
    return vals[::-1], (U @ V)[:, ::-1]


def _restarted_oracle(A, Y, p, k, m):
    rows = []
    for s in range(m):
        for c in range(0 if s == 0 else 1, k):
            vals, vecs = _krylov_rr(A, Y, c)
            rows.append(vals[:p])
        Y = vecs[:, :p]
    return np.array(rows)


# --- Krylov states --------------------------------------------------------

def test_init_invariant_start():
    op = DiagonalOperator([4.0, 3.0, 2.0, 1.0])
    st_ = krylov_init(op, np.eye(4)[:, :2])
    np.testing.assert_allclose(st_.projected, np.diag([4.0, 3.0]), atol=1e-15)


def test_init_random_orthonormal():
    st_ = krylov_init(DiagonalOperator(np.arange(6.0, 0, -1)), random_block(6, 2, 1))
    np.testing.assert_allclose(st_.basis.T @ st_.basis, np.eye(2), atol=1e-12)


def test_init_duplicate_column():
    Y = np.ones((5, 2))
    with pytest.raises(RankDeficiencyError):
        krylov_init(DiagonalOperator(np.arange(5.0, 0, -1)), Y)


def test_extend_invariant_stagnates():
    op = DiagonalOperator([4.0, 3.0, 2.0, 1.0])
    s0 = krylov_init(op, np.eye(4)[:, :2])
    s1 = krylov_extend(s0, op)
    assert s1.stagnated
    assert s1.basis.shape[1] == 2
    assert s1.degree == 1


def test_extend_two_by_two_oracle():
    A = np.diag([4.0, 3.0, 2.0, 1.0])
    v = np.full((4, 1), 0.5)
    st_ = krylov_extend(krylov_init(DiagonalOperator(np.diag(A)), v), DiagonalOperator(np.diag(A)))
    K = np.hstack([v, A @ v])
    # explicit 2x2 generalized problem on [v, Av]
    G, H = K.T @ K, K.T @ A @ K
    want = np.sort(np.linalg.eigvals(np.linalg.solve(G, H)).real)[::-1]
    got = ritz_pairs(st_, DiagonalOperator(np.diag(A)), 2).values
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_extend_dimension_count():
    op = DiagonalOperator(np.linspace(3, 0, 20))
    st_ = krylov_init(op, random_block(20, 2, 3))
    for _ in range(2):
        st_ = krylov_extend(st_, op)
    assert st_.basis.shape[1] == 6
    np.testing.assert_allclose(st_.basis.T @ st_.basis, np.eye(6), atol=1e-10)
    np.testing.assert_allclose(st_.projected, st_.basis.T @ op.apply(st_.basis),
                               atol=1e-10 * op.norm)


def test_ritz_pairs_invariant_and_top():
    op = DiagonalOperator([5.0, 4.0, 1.0])
    r = ritz_pairs(krylov_init(op, np.eye(3)[:, :2]), op, 2)
    np.testing.assert_allclose(r.values, [5.0, 4.0])
    assert np.all(r.residuals <= 1e-12)
    r1 = ritz_pairs(krylov_init(DiagonalOperator([2.0, 1.0]), np.eye(2)),
                    DiagonalOperator([2.0, 1.0]), 1)
    assert r1.values[0] == 2.0
    with pytest.raises(ValueError):
        ritz_pairs(krylov_init(op, np.eye(3)[:, :2]), op, 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 5), st.integers(0, 2**32 - 1))
def test_ritz_pairs_brute_force(p, degree, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(p * (degree + 1) + 1, 60))
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = (Q * rng.uniform(-1, 1, n)) @ Q.T
    A = 0.5 * (A + A.T)
    op = DenseOperator(A)
    Y = rng.standard_normal((n, p))
    st_ = krylov_init(op, Y)
    for _ in range(degree):
        st_ = krylov_extend(st_, op)
    r = ritz_pairs(st_, op, p)
    want, _ = _krylov_rr(A, Y, degree)
    np.testing.assert_allclose(r.values, want[:p], atol=1e-8 * np.abs(A).max())
    np.testing.assert_allclose(r.vectors.T @ r.vectors, np.eye(p), atol=1e-10)
    res = np.linalg.norm(A @ r.vectors - r.vectors * r.values, axis=0)
    np.testing.assert_allclose(r.residuals, res, atol=1e-10 * np.linalg.norm(A, 2))


# --- restarted block Lanczos ----------------------------------------------

def test_lanczos_trace_layout():
    op = DiagonalOperator(spectrum_example1(90))
    tr = run_restarted_block_lanczos(op, random_block(90, 3, 0), 3, 4, 6)
    assert len(tr) == 19
    assert tr.restarts == [3, 6, 9, 12, 15]
    assert tr.degree[:7] == [0, 1, 2, 3, 1, 2, 3]
    assert tr.outer[:7] == [1, 1, 1, 1, 2, 2, 2]
    assert tr.meta["degree"] == 3 and tr.meta["p"] == 3


def test_lanczos_invariant_fixed_point():
    op = DiagonalOperator([5.0, 4.0, 3.0, 2.0, 1.0])
    tr = run_restarted_block_lanczos(op, np.eye(5)[:, :2], 2, 3, 2)
    np.testing.assert_allclose(tr.values, np.tile([5.0, 4.0], (len(tr), 1)), atol=1e-14)


def test_lanczos_matches_restarted_oracle():
    A = np.diag(np.arange(6.0, 0, -1))
    Y0 = random_block(6, 2, 42)
    tr = run_restarted_block_lanczos(DiagonalOperator(np.diag(A)), Y0, 2, 3, 2)
    want = _restarted_oracle(A, Y0, 2, 3, 2)
    np.testing.assert_allclose(tr.values, want, rtol=1e-8)


def test_lanczos_example1_converges():
    op = DiagonalOperator(spectrum_example1())
    tr = run_restarted_block_lanczos(op, random_block(900, 3, 1), 3, 15, 1)
    psi1 = tr.values[:, 0]
    assert np.all(np.diff(psi1) >= -1e-12 * op.norm)
    assert psi1[-1] <= 2.0 + 1e-14
    assert 2.0 - psi1[-1] < 1e-6


@pytest.mark.parametrize("k,m", [(4, 6), (3, 10), (15, 2)])
def test_inner_monotonicity(k, m):
    op = DiagonalOperator(spectrum_example1(60))
    for j in range(10):
        tr = run_restarted_block_lanczos(op, random_block(60, 3, trial_seed(9, j)), 3, k, m)
        assert np.all(np.diff(tr.values, axis=0) >= -1e-12 * op.norm)


def test_lanczos_rejects_bad_args():
    op = DiagonalOperator([3.0, 2.0, 1.0])
    with pytest.raises(ValueError):
        run_restarted_block_lanczos(op, np.eye(3)[:, :2], 2, 0, 1)
    with pytest.raises(ValueError):
        run_restarted_block_lanczos(op, np.eye(3)[:, :2], 3, 2, 1)


# --- filtered iteration ---------------------------------------------------

def test_filter_degree_zero_constant():
    op = DiagonalOperator(spectrum_example1(30))
    tr = run_filtered_iteration(op, random_block(30, 3, 2), 3, ChebyshevFilter(0, 0.0, 1.0), 3)
    np.testing.assert_allclose(tr.values, np.tile(tr.values[0], (4, 1)), rtol=1e-13)


def test_filter_invariant_constant():
    lam = spectrum_example1(30)
    op = DiagonalOperator(lam)
    tr = run_filtered_iteration(op, np.eye(30)[:, :3], 3,
                                ChebyshevFilter(5, lam.lam(30), lam.lam(4)), 2)
    np.testing.assert_allclose(tr.values, np.tile([2.0, 1.6, 1.4], (3, 1)), atol=1e-13)


def test_filter_never_beats_lanczos():
    spec = spectrum_example1()
    op = DiagonalOperator(spec)
    filt = ChebyshevFilter(14, spec.lam(900), spec.lam(4))
    for j in range(50):
        Y0 = random_block(900, 3, trial_seed(0, j))
        ft = run_filtered_iteration(op, Y0, 3, filt, 1)
        lt = run_restarted_block_lanczos(op, Y0, 3, 15, 1, record=False)
        assert np.all(ft.values[-1] <= lt.values[-1] + 1e-10 * op.norm)


def test_filter_rank_collapse():
    # a start block with no component along the wanted space beyond one direction
    op = DiagonalOperator([3.0, 2.0, 1.0, 0.5])
    Y0 = np.zeros((4, 2))
    Y0[0, 0] = 1.0
    Y0[0, 1], Y0[1, 1] = 1.0, 1e-300
    with pytest.raises(RankDeficiencyError):
        run_filtered_iteration(op, Y0, 2, ChebyshevFilter(40, 0.5, 1.0), 3)


# --- pencils --------------------------------------------------------------

ALPHA6 = np.arange(1.0, 7.0)


def _transformed_power(alpha, beta, Z0, m):
    A = np.diag(1.0 / (alpha - beta))
    Q, _ = np.linalg.qr(np.sqrt(alpha - beta)[:, None] * Z0)
    out = []
    for _ in range(m + 1):
        out.append(np.linalg.eigvalsh(Q.T @ A @ Q)[::-1])
        Q, _ = np.linalg.qr(A @ Q)
    return np.array(out)


def test_shift_invert_constant_on_eigenvectors():
    P = HermitianPencil(np.diag(ALPHA6), np.eye(6))
    tr = run_block_shift_invert(P, np.eye(6)[:, :2], 2, 4)
    np.testing.assert_allclose(tr.values, np.tile([1.0, 2.0], (5, 1)), atol=1e-14)


def test_shift_invert_power_twin():
    P = HermitianPencil(np.diag(ALPHA6), np.eye(6), 0.0)
    Z0 = random_block(6, 2, 4)
    tr = run_block_shift_invert(P, Z0, 2, 5)
    np.testing.assert_allclose(1.0 / tr.values, _transformed_power(ALPHA6, 0.0, Z0, 5),
                               rtol=1e-9)


@pytest.mark.parametrize("beta", [0.0, 0.5, -2.0])
def test_davidson_lanczos_twin(beta):
    P = HermitianPencil(np.diag(ALPHA6 * 1.5), np.eye(6), beta)
    Z0 = random_block(6, 2, 5)
    td = run_restarted_block_davidson(P, Z0, 2, 2, 3)
    tl = run_restarted_block_lanczos(pencil_to_standard(P),
                                     np.sqrt(ALPHA6 * 1.5 - beta)[:, None] * Z0, 2, 2, 3)
    np.testing.assert_allclose(1.0 / (td.values - beta), tl.values, rtol=1e-9)


def test_triangle_shift_invert_davidson_lanczos():
    # all three trajectories live on the same standard operator under psi = 1/(theta - beta)
    alpha = np.array([1.0, 1.3, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0])
    beta = 0.4
    P = HermitianPencil(np.diag(alpha), np.eye(8), beta)
    A = pencil_to_standard(P)
    Y0 = random_block(8, 2, 6)
    Z0 = Y0 / np.sqrt(alpha - beta)[:, None]
    si = run_block_shift_invert(P, Z0, 2, 4)
    dv = run_restarted_block_davidson(P, Z0, 2, 3, 3)
    lz = run_restarted_block_lanczos(A, Y0, 2, 3, 3)
    power = []
    Q, _ = np.linalg.qr(Y0)
    for _ in range(5):
        power.append(np.linalg.eigvalsh(Q.T @ A.matrix @ Q)[::-1])
        Q, _ = np.linalg.qr(A.matrix @ Q)
    np.testing.assert_allclose(1.0 / (si.values - beta), power, rtol=1e-9)
    np.testing.assert_allclose(1.0 / (dv.values - beta), lz.values, rtol=1e-9)


def test_davidson_invariant_constant():
    P = HermitianPencil(np.diag(ALPHA6), np.eye(6))
    tr = run_restarted_block_davidson(P, np.eye(6)[:, :2], 2, 3, 2)
    np.testing.assert_allclose(tr.values, np.tile([1.0, 2.0], (len(tr), 1)), atol=1e-14)


def test_davidson_values_ascending_and_nonincreasing():
    rng = np.random.default_rng(7)
    M = rng.standard_normal((10, 10))
    L = M @ M.T + np.eye(10)
    P = HermitianPencil(L, np.eye(10) + 0.1 * np.diag(rng.uniform(size=10)))
    tr = run_restarted_block_davidson(P, rng.standard_normal((10, 2)), 2, 3, 3)
    V = tr.values
    assert np.all(np.diff(V, axis=1) >= 0)
    assert np.all(np.diff(V, axis=0) <= 1e-12 * np.abs(L).max())


# --- deflation ------------------------------------------------------------

def test_deflation_set_validation():
    P = HermitianPencil(np.diag(ALPHA6), np.eye(6))
    D = make_deflation_set(P, np.eye(6)[:, :2])
    assert D.count == 2
    with pytest.raises(ValueError):
        make_deflation_set(P, 2 * np.eye(6)[:, :2])
    with pytest.raises(ValueError):
        make_deflation_set(P, np.ones((6, 1)) / np.sqrt(6))


def test_deflation_reduced_twin():
    alpha = np.array([0.5, 0.8, 1.0, 1.3, 2.0, 2.5, 3.0, 3.5, 4.0, 6.0])
    c = 2
    P = HermitianPencil(np.diag(alpha), np.eye(10), 0.1)
    D = make_deflation_set(P, np.eye(10)[:, :c])
    Z0 = random_block(10, 2, 8)
    tr = deflate_and_continue(P, D, Z0, 2, "davidson", k=3, m=3)
    red = HermitianPencil(np.diag(alpha[c:]), np.eye(10 - c), 0.1)
    tw = run_restarted_block_davidson(red, Z0[c:], 2, 3, 3)
    np.testing.assert_allclose(tr.values, tw.values, rtol=1e-9)
    assert np.all(tr.values >= alpha[c] - 1e-12)
    for ent in tr.entries:
        np.testing.assert_allclose(D.locked.T @ ent.vectors, 0, atol=1e-12)


def test_deflation_shift_invert_reduced_twin():
    alpha = np.array([0.5, 0.8, 1.0, 1.3, 2.0, 2.5, 3.0])
    P = HermitianPencil(np.diag(alpha), np.eye(7))
    D = make_deflation_set(P, np.eye(7)[:, :2])
    Z0 = random_block(7, 2, 9)
    tr = deflate_and_continue(P, D, Z0, 2, "shift-invert", m=4)
    tw = run_block_shift_invert(HermitianPencil(np.diag(alpha[2:]), np.eye(5)), Z0[2:], 2, 4)
    np.testing.assert_allclose(tr.values, tw.values, rtol=1e-9)


def test_deflation_c0_identical():
    P = HermitianPencil(np.diag(ALPHA6), np.eye(6))
    D = make_deflation_set(P, np.zeros((6, 0)))
    Z0 = random_block(6, 2, 10)
    a = deflate_and_continue(P, D, Z0, 2, "davidson", k=3, m=2)
    b = run_restarted_block_davidson(P, Z0, 2, 3, 2)
    np.testing.assert_array_equal(a.values, b.values)


def test_deflation_unknown_solver():
    P = HermitianPencil(np.diag(ALPHA6), np.eye(6))
    D = make_deflation_set(P, np.eye(6)[:, :1])
    with pytest.raises(ValueError):
        deflate_and_continue(P, D, random_block(6, 2, 0), 2, "lobpcg")
