import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoqri.dense_core import qr_orthonormal, unfold_core
from hoqri.errors import DiagnosticError, ShapeError
from hoqri.kernels import ttmc_core, ttmctc_matrix
from hoqri.manifold import (
    GradientReport,
    grad_norm_sq,
    grad_norm_sq_raw,
    interlacing_check,
    project_tangent,
    riemannian_grad,
    subspace_distance,
)
from hoqri.sparse_tensor import SparseTensor

from conftest import random_instance, random_orthonormal

E1 = np.array([[1.0], [0.0]])
E2 = np.array([[0.0], [1.0]])


def stationary_state(x=3.0):
    """Single nonzero at the origin with indicator factors: an exact stationary point."""
    X = SparseTensor([[0, 0, 0]], [x], (2, 2, 2))
    U = [E1.copy() for _ in range(3)]
    G = ttmc_core(X, U)
    return X, U, ttmctc_matrix(X, U, 0), unfold_core(G, 0)


def random_state(rng, n=0, dims=(8, 7, 6), ranks=(3, 2, 2), nnz=40):
    X, U = random_instance(rng, dims, ranks, nnz)
    G = ttmc_core(X, U)
    return U[n], ttmctc_matrix(X, U, n), unfold_core(G, n)


def _skew_residual(U, V):
    M = U.T @ V
    return np.max(np.abs(M + M.T))


class TestProjectTangent:
    def test_point_projects_to_zero(self, rng):
        U = random_orthonormal(rng, 6, 2)
        assert np.max(np.abs(project_tangent(U, U))) <= 1e-15

    def test_already_tangent(self):
        assert np.array_equal(project_tangent(E1, E2), E2)

    def test_idempotent(self, rng):
        U = qr_orthonormal(rng.standard_normal((10, 3)))
        A = rng.standard_normal((10, 3))
        P = project_tangent(U, A)
        assert np.max(np.abs(project_tangent(U, P) - P)) <= 1e-11

    def test_tangent(self, rng):
        U = qr_orthonormal(rng.standard_normal((10, 3)))
        V = project_tangent(U, rng.standard_normal((10, 3)) * 100)
        assert _skew_residual(U, V) <= 1e-10

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            project_tangent(np.eye(3)[:, :2], np.ones((3, 3)))

    @settings(max_examples=100, deadline=None)
    @given(rows=st.integers(1, 20), cols=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
    def test_tangency_and_idempotence(self, rows, cols, seed):
        cols = min(rows, cols)
        rng = np.random.default_rng(seed)
        U = qr_orthonormal(rng.standard_normal((rows, cols)))
        A = rng.standard_normal((rows, cols))
        V = project_tangent(U, A)
        assert _skew_residual(U, V) <= 1e-10
        assert np.max(np.abs(project_tangent(U, V) - V)) <= 1e-11


class TestRiemannianGrad:
    def test_stationary_point(self):
        _, U, A, Gn = stationary_state()
        assert np.array_equal(A, [[9.0], [0.0]])
        assert not np.any(riemannian_grad(U[0], A, Gn))

    def test_zero(self):
        assert not np.any(riemannian_grad(np.eye(3)[:, :2], np.zeros((3, 2)), np.zeros((2, 4))))

    @pytest.mark.parametrize("n", [0, 1, 2])
    def test_equals_projected_euclidean_gradient(self, rng, n):
        U, A, Gn = random_state(rng, n)
        direct = project_tangent(U, 2.0 * A)
        assert np.max(np.abs(riemannian_grad(U, A, Gn) - direct)) <= 1e-10

    def test_core_rows_must_match(self, rng):
        with pytest.raises(ShapeError):
            riemannian_grad(np.eye(3)[:, :2], np.zeros((3, 2)), np.zeros((3, 4)))


class TestGradNormSq:
    def test_stationary_point(self):
        _, _, A, Gn = stationary_state()
        assert grad_norm_sq(A, Gn) == 0.0

    def test_zero(self):
        assert grad_norm_sq(np.zeros((4, 2)), np.zeros((2, 3))) == 0.0

    def test_matches_direct_norm(self, rng):
        for n in range(3):
            U, A, Gn = random_state(rng, n)
            direct = np.sum(riemannian_grad(U, A, Gn) ** 2)
            assert grad_norm_sq(A, Gn) == pytest.approx(direct, rel=1e-9)
            assert grad_norm_sq(A, Gn) == pytest.approx(np.sum(project_tangent(U, 2 * A) ** 2), rel=1e-9)

    def test_tiny_negative_clamped(self):
        # ||A||^2 slightly below ||G G^T||^2 from rounding
        A = np.array([[1.0]])
        Gn = np.array([[1.0 + 1e-13]])
        assert grad_norm_sq_raw(A, Gn) < 0
        assert grad_norm_sq(A, Gn) == 0.0

    def test_below_tolerance_is_reported_as_zero(self):
        A = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 2e-6]])
        Gn = np.array([[1.0], [0.0]])
        assert 0 < grad_norm_sq_raw(A, Gn) <= 1e-10
        assert grad_norm_sq(A, Gn) == 0.0

    def test_large_negative_raises(self):
        # A cannot be smaller than U G G^T for orthonormal U; this signals a broken state.
        with pytest.raises(DiagnosticError):
            grad_norm_sq(np.array([[1.0]]), np.array([[2.0]]))

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 2))
    def test_property_direct_norm(self, seed, n):
        rng = np.random.default_rng(seed)
        U, A, Gn = random_state(rng, n, dims=(6, 5, 4), ranks=(2, 2, 3), nnz=25)
        direct = float(np.sum(project_tangent(U, 2.0 * A) ** 2))
        got = grad_norm_sq(A, Gn)
        if direct <= 1e-10:
            assert got == 0.0
        else:
            assert got == pytest.approx(direct, rel=1e-9, abs=1e-10)


class TestSubspaceDistance:
    def test_self(self, rng):
        U = random_orthonormal(rng, 9, 3)
        assert subspace_distance(U, U) <= 1e-12

    def test_orthogonal_lines(self):
        assert subspace_distance(E1, E2) == pytest.approx(2.0, abs=1e-15)

    def test_rotation_invariant(self, rng):
        U = random_orthonormal(rng, 12, 4)
        Q = random_orthonormal(rng, 4, 4)
        assert subspace_distance(U, U @ Q) <= 1e-10

    def test_matches_procrustes(self, rng):
        U = random_orthonormal(rng, 10, 3)
        V = random_orthonormal(rng, 10, 3)
        # Orthogonal Procrustes: Q = W Z^T from the SVD of V^T U = W S Z^T.
        W, _, Zt = np.linalg.svd(V.T @ U)
        best = np.sum((U - V @ (W @ Zt)) ** 2)
        assert subspace_distance(U, V) == pytest.approx(best, abs=1e-10)

    def test_bounded(self, rng):
        U = random_orthonormal(rng, 10, 3)
        V = random_orthonormal(rng, 10, 3)
        assert 0.0 <= subspace_distance(U, V) <= 2 * 3 + 1e-12

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            subspace_distance(random_orthonormal(rng, 5, 2), random_orthonormal(rng, 5, 3))

    def test_squared_form_is_not_a_metric(self):
        # Lines at 0, 45 and 90 degrees: 2 > 2 * (2 - sqrt 2).
        u = np.array([[1.0], [0.0]])
        v = np.array([[1.0], [1.0]]) / np.sqrt(2)
        w = np.array([[0.0], [1.0]])
        d = subspace_distance
        assert d(u, w) > d(u, v) + d(v, w) + 0.5
        assert np.sqrt(d(u, w)) <= np.sqrt(d(u, v)) + np.sqrt(d(v, w))

    @settings(max_examples=100, deadline=None)
    @given(rows=st.integers(2, 20), cols=st.integers(1, 5), seed=st.integers(0, 2**32 - 1))
    def test_symmetry_and_root_triangle(self, rows, cols, seed):
        cols = min(rows, cols)
        rng = np.random.default_rng(seed)
        U, V, W = (random_orthonormal(rng, rows, cols) for _ in range(3))
        d = subspace_distance
        assert d(U, V) == pytest.approx(d(V, U), abs=1e-10)
        # rounding of order 1e-15 in d becomes order 1e-8 after the root
        assert np.sqrt(d(U, W)) <= np.sqrt(d(U, V)) + np.sqrt(d(V, W)) + 1e-7

    def test_triangle_on_tall_random_triples(self, rng):
        # In the regime the solvers live in (I >> K), random triples are
        # close to mutually orthogonal and the squared form behaves.
        for _ in range(200):
            U, V, W = (random_orthonormal(rng, 40, 3) for _ in range(3))
            assert subspace_distance(U, W) <= subspace_distance(U, V) + subspace_distance(V, W) + 1e-9


class TestInterlacing:
    def test_zero(self):
        rep = interlacing_check(np.zeros((4, 2)), np.zeros((2, 3)))
        assert rep.sigma.tolist() == [0.0, 0.0]
        assert rep.lam.tolist() == [0.0, 0.0]

    def test_stationary_equality(self):
        _, _, A, Gn = stationary_state(3.0)
        rep = interlacing_check(A, Gn)
        assert rep.sigma[0] == pytest.approx(9.0, abs=1e-12)
        assert rep.lam[0] == pytest.approx(9.0, abs=1e-12)
        assert rep.margin == pytest.approx(0.0, abs=1e-12)

    def test_random_states(self, rng):
        for _ in range(50):
            dims = tuple(rng.integers(3, 9, size=3))
            ranks = tuple(int(rng.integers(1, min(d, 3) + 1)) for d in dims)
            X, U = random_instance(rng, dims, ranks, int(rng.integers(5, 60)))
            G = ttmc_core(X, U)
            for n in range(3):
                rep = interlacing_check(ttmctc_matrix(X, U, n), unfold_core(G, n))
                assert rep.margin >= -1e-9
                assert np.all(np.diff(rep.sigma) <= 1e-12)
                assert np.all(np.diff(rep.lam) <= 1e-12)

    def test_violation_raises(self):
        with pytest.raises(DiagnosticError):
            interlacing_check(np.array([[1.0], [0.0]]), np.array([[2.0]]))


def test_gradient_report_totals(rng):
    report = GradientReport()
    for n in range(3):
        U, A, Gn = random_state(rng, n)
        report.add(A, Gn)
    assert report.total_norm_sq == pytest.approx(sum(report.per_mode_norm_sq))
    assert all(g >= 0 for g in report.per_mode_norm_sq)
    assert len(report.sigma) == len(report.lam) == 3
