"""Symmetric pencil eigensolver against a determinant-root oracle,
plus projector and Cholesky invariants."""

import math

import numpy as np
import pytest

from conftest import det_root_refine
from vwbound.errors import (
    DegeneratePencil,
    EmptyPositiveSubspace,
    NotPositiveDefinite,
)
from vwbound.pencil import (
    SymmetricPencil,
    cholesky_spd,
    lambda_extremes,
    lambda_minus_plus,
    solve_pencil,
    spectral_projectors,
)


def random_spd(rng, n):
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


def random_sym(rng, n):
    m = rng.standard_normal((n, n))
    return 0.5 * (m + m.T)


class TestCholesky:
    def test_reconstructs(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 5, 8):
            b = random_spd(rng, n)
            low = cholesky_spd(b)
            assert np.allclose(low @ low.T, b, atol=1e-10 * n)
            assert np.allclose(low, np.tril(low))

    def test_reports_failing_pivot(self):
        # leading 2x2 block is fine; pivot 2 (0-based) goes negative
        b = np.diag([1.0, 2.0, -3.0, 4.0])
        with pytest.raises(NotPositiveDefinite) as info:
            cholesky_spd(b)
        assert info.value.pivot == 2

    def test_semidefinite_rejected(self):
        b = np.array([[1.0, 1.0], [1.0, 1.0]])  # rank 1
        with pytest.raises(NotPositiveDefinite):
            cholesky_spd(b)


class TestSolvePencil:
    def test_against_determinant_roots(self):
        rng = np.random.default_rng(20260826)
        for trial in range(100):
            n = int(rng.integers(2, 9))
            b = random_spd(rng, n)
            c = random_sym(rng, n)
            eig = solve_pencil(SymmetricPencil(c=c, b=b))
            assert eig.values.shape == (n,)
            assert np.all(np.diff(eig.values) >= 0)
            for lam in eig.values:
                refined = det_root_refine(c, b, lam)
                assert abs(refined - lam) <= 1e-8 * max(1.0, abs(lam))

    def test_residuals_and_b_orthonormality(self):
        rng = np.random.default_rng(7)
        for n in (2, 4, 8):
            b = random_spd(rng, n)
            c = random_sym(rng, n)
            eig = solve_pencil(SymmetricPencil(c=c, b=b))
            for k in range(n):
                v = eig.vectors[:, k]
                res = c @ v - eig.values[k] * (b @ v)
                assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(c @ v + 1e-30)
            gram = eig.vectors.T @ b @ eig.vectors
            assert np.allclose(gram, np.eye(n), atol=1e-10)

    def test_diagonal_closed_form(self):
        c = np.diag([3.0, -2.0])
        b = np.diag([1.0, 4.0])
        eig = solve_pencil(SymmetricPencil(c=c, b=b))
        assert np.allclose(eig.values, [-0.5, 3.0], atol=1e-14)

    def test_lambda_extremes(self):
        c = np.diag([5.0, -1.0, 2.0])
        b = np.eye(3)
        lo, hi = lambda_extremes(SymmetricPencil(c=c, b=b))
        assert lo == pytest.approx(-1.0, abs=1e-13)
        assert hi == pytest.approx(5.0, abs=1e-13)


class TestProjectors:
    def test_invariants_random(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = int(rng.integers(2, 7))
            c = random_sym(rng, n)
            if np.min(np.abs(np.linalg.eigvalsh(c))) < 1e-3:
                continue  # keep clearly nondegenerate
            proj = spectral_projectors(c)
            p, q = proj.p_plus, proj.p_minus
            assert np.allclose(p @ p, p, atol=1e-11)
            assert np.allclose(q @ q, q, atol=1e-11)
            assert np.allclose(p @ q, 0.0, atol=1e-11)
            assert np.allclose(p + q, np.eye(n), atol=1e-11)
            assert proj.n_plus + proj.n_minus == n
            # C commutes with its spectral projectors
            assert np.allclose(p @ c, c @ p, atol=1e-10)

    def test_signature_counts(self):
        proj = spectral_projectors(np.diag([4.0, -1.0]))
        assert proj.n_plus == 1 and proj.n_minus == 1
        assert np.allclose(proj.p_plus, np.diag([1.0, 0.0]))
        assert proj.eigs_plus[0] == pytest.approx(4.0)

    def test_degenerate_detected(self):
        with pytest.raises(DegeneratePencil):
            spectral_projectors(np.diag([1.0, 0.0]))

    def test_signed_parts(self):
        from vwbound.pencil import signed_parts

        c = np.diag([2.0, -3.0])
        proj = spectral_projectors(c)
        c_plus, c_minus = signed_parts(c, proj)
        assert np.allclose(c_plus, np.diag([2.0, 0.0]))
        assert np.allclose(c_minus, np.diag([0.0, -3.0]))
        assert np.allclose(c_plus + c_minus, c)


class TestLambdaMinusPlus:
    def test_diagonal_cases(self):
        # (C, B) compressed onto the positive C-subspace
        c = np.diag([1.0, -1.0])
        proj = spectral_projectors(c)
        val = lambda_minus_plus(SymmetricPencil(c=c, b=np.eye(2)), proj)
        assert val == pytest.approx(1.0, abs=1e-13)

        c = np.diag([4.0, -1.0])
        proj = spectral_projectors(c)
        val = lambda_minus_plus(
            SymmetricPencil(c=c, b=np.diag([2.0, 1.0])), proj
        )
        assert val == pytest.approx(2.0, abs=1e-13)

    def test_multidimensional_positive_part(self):
        c = np.diag([3.0, 1.0, -1.0])
        proj = spectral_projectors(c)
        val = lambda_minus_plus(SymmetricPencil(c=c, b=np.eye(3)), proj)
        assert val == pytest.approx(1.0, abs=1e-13)

    def test_empty_positive_subspace(self):
        from vwbound.pencil import ProjectorPair

        negative_definite = ProjectorPair(
            p_plus=np.zeros((2, 2)),
            p_minus=np.eye(2),
            n_plus=0,
            n_minus=2,
            basis_plus=np.zeros((2, 0)),
            basis_minus=np.eye(2),
            eigs_plus=np.zeros(0),
            eigs_minus=np.array([-1.0, -2.0]),
        )
        with pytest.raises(EmptyPositiveSubspace):
            lambda_minus_plus(
                SymmetricPencil(c=np.eye(2), b=np.eye(2)), negative_definite
            )
