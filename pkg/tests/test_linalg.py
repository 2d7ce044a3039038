import numpy as np
import pytest

from dcflow.fem import assemble_stiffness, build_mesh
from dcflow.linalg import (
    CsrMatrix,
    IterativeSolveError,
    SingularSystemError,
    solve_general,
    solve_spd,
    spmv,
)


def five_point_matrix(m):
    return build_mesh(m).stiffness()


class TestSpmv:
    def test_identity(self):
        a = CsrMatrix.identity(3)
        np.testing.assert_array_equal(spmv(a, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_zero_matrix(self):
        a = CsrMatrix.from_coo(4, 4, [], [], [])
        np.testing.assert_array_equal(spmv(a, np.ones(4)), np.zeros(4))

    def test_stencil_annihilates_constants_in_full_interior(self):
        # on a 4x4-cell grid, rows of vertices whose whole stencil is interior
        # sum to zero, so a constant vector maps to 0 there
        mesh = build_mesh(4)
        a = mesh.stiffness()
        y = spmv(a, np.ones(mesh.n_interior))
        # interior vertex (2,2) has all neighbors interior
        center = mesh.interior_map[2 * 5 + 2]
        assert abs(y[center]) < 1e-14

    def test_against_dense_oracle_on_grid(self):
        mesh = build_mesh(4)
        a = mesh.stiffness()
        dense = a.to_dense()
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.standard_normal(mesh.n_interior)
            np.testing.assert_allclose(spmv(a, x), dense @ x, rtol=1e-14, atol=1e-14)

    def test_dimension_mismatch(self):
        a = CsrMatrix.identity(3)
        with pytest.raises(ValueError):
            spmv(a, np.ones(4))

    def test_linearity(self):
        rng = np.random.default_rng(5)
        a = CsrMatrix.from_dense(rng.standard_normal((8, 8)))
        x, y = rng.standard_normal(8), rng.standard_normal(8)
        lhs = spmv(a, 2.5 * x - 1.25 * y)
        rhs = 2.5 * spmv(a, x) - 1.25 * spmv(a, y)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


class TestSolveSpd:
    def test_identity(self):
        a = CsrMatrix.identity(5)
        b = np.arange(5.0)
        np.testing.assert_allclose(solve_spd(a, b, tol=1e-12), b, atol=1e-12)

    def test_diagonal(self):
        a = CsrMatrix.diagonal([2.0, 4.0])
        np.testing.assert_allclose(solve_spd(a, [2.0, 8.0], tol=1e-14), [1.0, 2.0], atol=1e-13)

    def test_stiffness_matches_dense_cholesky_oracle(self):
        a = five_point_matrix(4)
        rng = np.random.default_rng(1)
        b = rng.standard_normal(a.n_rows)
        dense = a.to_dense()
        ell = np.linalg.cholesky(dense)
        expected = np.linalg.solve(ell.T, np.linalg.solve(ell, b))
        x = solve_spd(a, b, tol=1e-13)
        assert np.linalg.norm(x - expected) < 1e-10

    def test_roundtrip_property_random_spd(self):
        # residual contract over 100 random SPD instances of size <= 64
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(1, 65))
            g = rng.standard_normal((n, n))
            a = CsrMatrix.from_dense(g @ g.T + n * np.eye(n), symmetric=True)
            b = rng.standard_normal(n)
            x = solve_spd(a, b, tol=1e-10)
            assert np.linalg.norm(spmv(a, x) - b) <= 1e-10 * max(np.linalg.norm(b), 1.0)

    def test_zero_rhs(self):
        a = five_point_matrix(3)
        x = solve_spd(a, np.zeros(a.n_rows), tol=1e-12)
        np.testing.assert_array_equal(x, np.zeros(a.n_rows))

    def test_nonconvergence_reports_residual(self):
        a = five_point_matrix(4)
        b = np.ones(a.n_rows)
        with pytest.raises(IterativeSolveError) as info:
            solve_spd(a, b, tol=1e-14, max_iter=2)
        assert info.value.residual > 0

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            solve_spd(CsrMatrix.identity(2), np.ones(2), tol=0.0)


class TestSolveGeneral:
    def test_permutation(self):
        a = CsrMatrix.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(solve_general(a, [3.0, 5.0]), [5.0, 3.0], atol=1e-14)

    def test_upper_triangular_back_substitution(self):
        dense = np.triu(np.arange(1.0, 17.0).reshape(4, 4)) + 4 * np.eye(4)
        a = CsrMatrix.from_dense(dense)
        b = np.array([1.0, -2.0, 3.0, 0.5])
        np.testing.assert_allclose(solve_general(a, b), np.linalg.solve(dense, b),
                                   rtol=1e-12, atol=1e-13)

    def test_singular_raises(self):
        a = CsrMatrix.from_dense(np.array([[1.0, 2.0], [2.0, 4.0]]))
        with pytest.raises(SingularSystemError):
            solve_general(a, [1.0, 1.0])

    def test_newton_style_saddle_matches_dense_lu(self):
        # assembled saddle system on the m=4 mesh against a dense LU oracle
        mesh = build_mesh(4)
        k = mesh.stiffness().to_dense()
        mm = mesh.mass().to_dense()
        v = mesh.n_interior
        dense = np.block([[k, 0.3 * mm], [-mm, k]])
        a = CsrMatrix.from_dense(dense)
        rng = np.random.default_rng(9)
        b = rng.standard_normal(2 * v)
        x = solve_general(a, b)
        assert np.linalg.norm(x - np.linalg.solve(dense, b)) < 1e-9


class TestCsrMatrix:
    def test_symmetric_flag_honesty(self):
        rng = np.random.default_rng(2)
        g = rng.standard_normal((10, 10))
        a = CsrMatrix.from_dense(g @ g.T, symmetric=True)
        x, y = rng.standard_normal(10), rng.standard_normal(10)
        lhs = float(spmv(a, x) @ y)
        rhs = float(x @ spmv(a, y))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)

    def test_symmetric_flag_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            CsrMatrix.from_dense(np.array([[1.0, 2.0], [0.0, 1.0]]), symmetric=True)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            CsrMatrix.from_coo(1, 1, [0], [0], [np.inf])

    def test_duplicate_coo_entries_summed(self):
        a = CsrMatrix.from_coo(2, 2, [0, 0, 1], [1, 1, 0], [1.0, 2.0, 4.0])
        np.testing.assert_array_equal(a.to_dense(), [[0.0, 3.0], [4.0, 0.0]])

    def test_transpose_roundtrip(self):
        rng = np.random.default_rng(4)
        a = CsrMatrix.from_dense(rng.standard_normal((5, 3)))
        np.testing.assert_array_equal(a.transpose().to_dense(), a.to_dense().T)
        x = rng.standard_normal(5)
        np.testing.assert_allclose(a.rmatvec(x), a.to_dense().T @ x, rtol=1e-14, atol=1e-14)
