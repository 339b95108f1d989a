"""Symmetric matrix pencils C - lambda B with positive definite B.

Characteristic values and B-orthonormal characteristic vectors are the
spectral raw material for everything downstream: rate extremes of the
quadratic pair, the positive/negative splitting of the guiding matrix, and
the disks the shooting stage launches from.

The solve route is a Cholesky reduction ``B = L L^T`` (our own, so a
failing pivot index can be reported) followed by a symmetric
eigendecomposition of ``L^-1 C L^-T``; characteristic vectors map back
through ``L^-T`` and are exactly B-orthonormal up to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DegeneratePencil,
    EmptyPositiveSubspace,
    NotPositiveDefinite,
)

__all__ = [
    "SymmetricPencil",
    "PencilEigen",
    "ProjectorPair",
    "cholesky_spd",
    "solve_pencil",
    "lambda_extremes",
    "spectral_projectors",
    "signed_parts",
    "lambda_minus_plus",
]

_SYM_TOL = 1e-10


def _check_symmetric(a: np.ndarray, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    scale = 1.0 + float(np.max(np.abs(a)))
    if float(np.max(np.abs(a - a.T))) > _SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


@dataclass
class SymmetricPencil:
    """The pair (C, B); both symmetric, B positive definite.

    Positive definiteness of B is established lazily by the Cholesky step
    of :func:`solve_pencil`; construction only enforces symmetry so that a
    degenerate B produces the informative pivot error, not a generic one.
    """

    c: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.c = _check_symmetric(self.c, "C")
        self.b = _check_symmetric(self.b, "B")
        if self.c.shape != self.b.shape:
            raise ValueError("C and B must have equal shape")

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass
class PencilEigen:
    """Characteristic values (ascending) and B-orthonormal vectors
    (columns of ``vectors``, aligned with ``values``)."""

    values: np.ndarray
    vectors: np.ndarray


def cholesky_spd(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises
    ------
    NotPositiveDefinite
        With the index and value of the first nonpositive pivot.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if not (d > 0.0) or not np.isfinite(d):
            raise NotPositiveDefinite(j, float(d))
        low[j, j] = math.sqrt(d)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[
                j, j
            ]
    return low


def solve_pencil(pencil: SymmetricPencil) -> PencilEigen:
    """All characteristic values and vectors of ``C - lambda B``.

    The vectors ``v_i`` satisfy ``<B v_i, v_j> = delta_ij`` and
    ``C v_i = lambda_i B v_i`` up to roundoff.
    """
    low = cholesky_spd(pencil.b)
    tmp = solve_triangular(low, pencil.c, lower=True, check_finite=False)
    reduced = solve_triangular(low, tmp.T, lower=True, check_finite=False).T
    reduced = 0.5 * (reduced + reduced.T)
    values, u = np.linalg.eigh(reduced)
    vectors = solve_triangular(low.T, u, lower=False, check_finite=False)
    return PencilEigen(values=values, vectors=vectors)


def lambda_extremes(pencil: SymmetricPencil) -> tuple[float, float]:
    """(smallest, largest) characteristic value of the pencil."""
    values = solve_pencil(pencil).values
    return float(values[0]), float(values[-1])


@dataclass
class ProjectorPair:
    """Orthogonal projectors onto the positive and negative eigenspaces of
    a symmetric nondegenerate matrix, plus orthonormal bases of both."""

    p_plus: np.ndarray
    p_minus: np.ndarray
    n_plus: int
    n_minus: int
    basis_plus: np.ndarray = field(repr=False, default=None)
    basis_minus: np.ndarray = field(repr=False, default=None)
    eigs_plus: np.ndarray = field(repr=False, default=None)
    eigs_minus: np.ndarray = field(repr=False, default=None)


def spectral_projectors(c: np.ndarray, degeneracy_rtol: float = 1e-10) -> ProjectorPair:
    """Split R^n into the positive/negative eigenspaces of symmetric ``c``.

    Raises
    ------
    DegeneratePencil
        If some eigenvalue lies inside the band
        ``degeneracy_rtol * ||c||_2`` around zero — the splitting would
        then be numerically meaningless.
    """
    c = _check_symmetric(c, "C")
    values, u = np.linalg.eigh(c)
    norm2 = float(np.max(np.abs(values))) if values.size else 0.0
    band = degeneracy_rtol * norm2
    if norm2 == 0.0 or bool(np.any(np.abs(values) <= band)):
        raise DegeneratePencil(
            f"eigenvalue inside the degeneracy band {band:.3e} around zero"
        )
    pos = values > 0.0
    neg = ~pos
    u_pos = u[:, pos]
    u_neg = u[:, neg]
    return ProjectorPair(
        p_plus=u_pos @ u_pos.T,
        p_minus=u_neg @ u_neg.T,
        n_plus=int(np.count_nonzero(pos)),
        n_minus=int(np.count_nonzero(neg)),
        basis_plus=u_pos,
        basis_minus=u_neg,
        eigs_plus=values[pos],
        eigs_minus=values[neg],
    )


def signed_parts(
    c: np.ndarray, proj: ProjectorPair
) -> tuple[np.ndarray, np.ndarray]:
    """``(C_plus, C_minus)`` with ``C_+= P_+ C P_+`` positive
    semidefinite and ``C_- = P_- C P_-`` negative semidefinite."""
    c = np.asarray(c, dtype=float)
    c_plus = proj.p_plus @ c @ proj.p_plus
    c_minus = proj.p_minus @ c @ proj.p_minus
    return 0.5 * (c_plus + c_plus.T), 0.5 * (c_minus + c_minus.T)


def lambda_minus_plus(pencil: SymmetricPencil, proj: ProjectorPair) -> float:
    """Smallest characteristic value of the pencil restricted to the
    positive subspace of C.

    With ``V`` an orthonormal basis of that subspace this is the smallest
    characteristic value of the compressed pair
    ``(V^T C V, V^T B V)``; it bounds W from below against V on the
    positive subspace and so controls the entry disks.

    Raises
    ------
    EmptyPositiveSubspace
        If the positive subspace is trivial.
    """
    if proj.n_plus == 0:
        raise EmptyPositiveSubspace("C has no positive eigenvalues")
    basis = proj.basis_plus
    c_r = basis.T @ pencil.c @ basis
    b_r = basis.T @ pencil.b @ basis
    restricted = SymmetricPencil(c=c_r, b=b_r)
    return float(solve_pencil(restricted).values[0])
