"""Dirac and Pauli operators in three dimensions and their supersymmetric link.

Spinor fields store components in consecutive blocks of ``n**3`` values, so an
operator with matrix coefficient ``M`` acting through a scalar lattice
operator ``S`` is ``kron(M, S)``.

With the convention ``grad_A = grad - iA`` used for the Schrodinger operator,
``(alpha . (p - A))^2 = (p - A)^2 - sigma . curl A`` blockwise, so the Pauli
operator assembled here is ``H_{A,0} - sigma . curl A``; the opposite sign of
the coupling corresponds to the opposite charge convention.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidSpec, UnsupportedDimension
from .lattice import Field, GridSpec
from .operators import MagneticSpec, central_difference, schrodinger
from .sparsekit import (SolverCfg, SparseOperator, arnoldi_shift_invert, dense_oracle,
                        lanczos_lowest)


@dataclass(frozen=True)
class CliffordSet:
    """Pauli matrices ``sigma[0..2]`` and Dirac matrices ``alpha[0..3]`` (``alpha[0]`` the mass matrix)."""

    sigma: np.ndarray
    alpha: np.ndarray

    @classmethod
    def standard(cls) -> "CliffordSet":
        s1 = np.array([[0, 1], [1, 0]], dtype=complex)
        s2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
        s3 = np.array([[1, 0], [0, -1]], dtype=complex)
        z = np.zeros((2, 2), dtype=complex)
        eye = np.eye(2, dtype=complex)
        alpha0 = np.block([[eye, z], [z, -eye]])
        alphas = [np.block([[z, s], [s, z]]) for s in (s1, s2, s3)]
        return cls(np.stack([s1, s2, s3]), np.stack([alpha0] + alphas))

    def anticommutator_defect(self) -> float:
        """Largest entry of ``{a_j, a_k} - 2 delta_jk I`` over both families."""
        worst = 0.0
        for mats in (self.sigma, self.alpha):
            eye = np.eye(mats.shape[1])
            for j in range(len(mats)):
                for k in range(len(mats)):
                    ac = mats[j] @ mats[k] + mats[k] @ mats[j]
                    worst = max(worst, float(np.max(np.abs(ac - 2 * (j == k) * eye))))
        return worst

    def hermitian_defect(self) -> float:
        return float(max(np.max(np.abs(m - m.conj().T)) for m in (*self.sigma, *self.alpha)))


CLIFFORD = CliffordSet.standard()


def _require3(grid: GridSpec):
    if grid.d != 3:
        raise UnsupportedDimension(f"relativistic operators are assembled for d = 3, got {grid.d}")


def _momenta(grid: GridSpec, A: Optional[MagneticSpec]):
    Avals = A.sample(grid) if A is not None else np.zeros((3, grid.size))
    return [(-1j * central_difference(grid, j) - sp.diags(Avals[j])).tocsr() for j in range(3)]


def dirac_operator(grid: GridSpec, A: Optional[MagneticSpec] = None, m: float = 0.0) -> SparseOperator:
    """``sum_j alpha_j (p_j - A_j) + m alpha_0`` with central-difference momenta."""
    _require3(grid)
    if m < 0:
        raise InvalidSpec("mass must be non-negative")
    D = sp.kron(CLIFFORD.alpha[0], sp.identity(grid.size) * m, format="csr")
    for j, pj in enumerate(_momenta(grid, A)):
        D = D + sp.kron(CLIFFORD.alpha[j + 1], pj, format="csr")
    return SparseOperator(D.tocsr(), hermitian=True)


def spin_coupling(grid: GridSpec, A: Optional[MagneticSpec]) -> sp.csr_matrix:
    """``sigma . curl A``, diagonal in space."""
    _require3(grid)
    if A is None:
        return sp.csr_matrix((2 * grid.size, 2 * grid.size), dtype=complex)
    B = A.curl(grid)
    out = sp.csr_matrix((2 * grid.size, 2 * grid.size), dtype=complex)
    for k in range(3):
        out = out + sp.kron(CLIFFORD.sigma[k], sp.diags(B[k]), format="csr")
    return out.tocsr()


def pauli_operator(grid: GridSpec, A: Optional[MagneticSpec] = None,
                   stencil: str = "compact") -> SparseOperator:
    """Pauli operator ``(p - A)^2 I_2 - sigma . curl A``.

    ``stencil="compact"`` uses the assembled magnetic Schrodinger operator;
    ``"central"`` uses ``sum_j (p_j - A_j)^2`` built from the same central
    momenta as the Dirac operator (the wide stencil).
    """
    _require3(grid)
    if stencil == "compact":
        scalar = schrodinger(grid, magnetic=A).matrix
    elif stencil == "central":
        scalar = sum(pj @ pj for pj in _momenta(grid, A))
    else:
        raise InvalidSpec(f"stencil must be 'compact' or 'central', got {stencil!r}")
    P = sp.kron(np.eye(2), scalar, format="csr") - spin_coupling(grid, A)
    return SparseOperator(P.tocsr(), hermitian=True)


def _block_pauli(grid, A, m, stencil="compact"):
    P = pauli_operator(grid, A, stencil).matrix
    return sp.kron(np.eye(2), P, format="csr") + m ** 2 * sp.identity(4 * grid.size)


def supersymmetry_residual(grid: GridSpec, A: Optional[MagneticSpec], m: float,
                           psi: Field) -> float:
    """``||D^2 psi - diag(P + m^2, P + m^2) psi|| / ||psi||`` for a 4-spinor ``psi``."""
    _require3(grid)
    if psi.spinor_dim != 4 or psi.grid != grid:
        raise InvalidSpec("psi must be a 4-spinor on the same grid")
    D = dirac_operator(grid, A, m).matrix
    u = psi.values
    r = D @ (D @ u) - _block_pauli(grid, A, m) @ u
    return float(np.linalg.norm(r) / np.linalg.norm(u))


def refinement_slope(hs: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of ``log value`` against ``log h``."""
    return float(np.polyfit(np.log(hs), np.log(values), 1)[0])


@dataclass
class SpectralRelation:
    """Squared Dirac spectrum against the Pauli spectrum shifted by ``m^2``.

    ``mismatch[i]`` is the distance from ``mu_i + m^2`` to the spectrum of
    ``D^2`` and ``bound[i]`` the residual ``||(D^2 - diag(P + m^2)) Phi_i||`` of
    the Pauli eigenvector; for Hermitian ``D^2`` the first never exceeds the
    second.
    """

    pauli_values: np.ndarray
    mismatch: np.ndarray
    bound: np.ndarray
    max_mismatch: float
    max_bound: float

    @property
    def consistent(self) -> bool:
        return bool(np.all(self.mismatch <= self.bound * (1 + 1e-9) + 1e-9))

    def to_dict(self) -> dict:
        return {"max_mismatch": self.max_mismatch, "max_bound": self.max_bound,
                "consistent": self.consistent}


def spectral_relation_check(grid: GridSpec, A: Optional[MagneticSpec], m: float,
                            k: Optional[int] = None, stencil: str = "compact",
                            cfg: Optional[SolverCfg] = None) -> SpectralRelation:
    """Compare ``sigma(D)^2`` with ``sigma(P) + m^2``.

    Small grids use the dense oracle for both operators (``k`` lowest Pauli
    eigenvalues when given, else all).  Larger grids use Lanczos for the ``k``
    lowest Pauli pairs and shift-invert on ``D^2`` at each ``mu_i + m^2``; the
    bottom of the squared central-difference Dirac spectrum is crowded with
    doubler modes, so only the eigenvalue nearest the target is meaningful.
    """
    _require3(grid)
    P = pauli_operator(grid, A, stencil)
    D = dirac_operator(grid, A, m)
    D2 = SparseOperator((D.matrix @ D.matrix).tocsr(), hermitian=True)
    if 4 * grid.size <= 4096:
        dvals = dense_oracle(D).values.real ** 2
        pres = dense_oracle(P)
        count = len(pres) if k is None else k
        mu, vecs = pres.values.real[:count], pres.vectors[:, :count]
    else:
        if k is None:
            raise InvalidSpec("k is required beyond the dense regime")
        pres = lanczos_lowest(P, k, cfg)
        mu, vecs = pres.values.real, pres.vectors
        dvals = np.array([arnoldi_shift_invert(D2, mu_i + m ** 2, 1, cfg).values[0].real
                          for mu_i in mu])
    B = _block_pauli(grid, A, m, stencil)
    mismatch, bound = [], []
    zeros = np.zeros(2 * grid.size, dtype=complex)
    for i in range(len(mu)):
        v = np.concatenate([vecs[:, i], zeros])
        bound.append(float(np.linalg.norm(D2.matrix @ v - B @ v) / np.linalg.norm(v)))
        mismatch.append(float(np.min(np.abs(dvals - (mu[i] + m ** 2)))))
    mismatch, bound = np.array(mismatch), np.array(bound)
    return SpectralRelation(mu, mismatch, bound, float(mismatch.max()), float(bound.max()))
