"""Finite-difference assembly of the Schrodinger-type operators.

Conventions
-----------
* ``-Delta`` is the compact (2d+1)-point stencil.  At a Dirichlet face the
  ghost value is the negative mirror of the first node (the wall sits
  half a cell outside the last node), at the Robin face ``x_d = 0`` it is
  eliminated from ``-d psi/dx_d + alpha psi = 0`` using the face-averaged
  value.
* ``p_j = -i D_j`` with ``D_j`` the central difference and zero ghosts.
* ``(p - A)^2 = -Delta - sum_j (p_j A_j + A_j p_j) + |A|^2``, i.e. the
  square of the momentum is always the compact stencil while cross terms use
  the central momentum.
* The edge gradient ``G_j`` maps nodes to the ``n + 1`` cell faces along axis
  ``j``; with Dirichlet walls ``sum_j G_j^T G_j = -Delta`` exactly, so
  ``||G psi||^2 = (psi, -Delta psi)`` at the discrete level.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.fft import dstn, idstn

from .errors import InvalidSpec, ShapeError
from .lattice import HALF, Field, GridSpec
from .sparsekit import SparseOperator

ArrayOrFn = Union[None, float, np.ndarray, Callable]


def _sample(spec: ArrayOrFn, grid: GridSpec, dtype=float) -> np.ndarray:
    if spec is None:
        return np.zeros(grid.size, dtype=dtype)
    if callable(spec):
        vals = np.asarray(spec(grid.coords), dtype=dtype)
    else:
        vals = np.asarray(spec, dtype=dtype)
    if vals.ndim == 0:
        vals = np.full(grid.size, vals, dtype=dtype)
    return vals


@dataclass(frozen=True)
class PotentialSpec:
    """``V = V1 + i V2``; each part is a callable of the coordinate table,
    an array of node values, a constant, or ``None`` for zero."""

    real: ArrayOrFn = None
    imag: ArrayOrFn = None

    def real_part(self, grid: GridSpec) -> np.ndarray:
        v = _sample(self.real, grid)
        _check_nodes(v, grid, "Re V")
        return v

    def imag_part(self, grid: GridSpec) -> np.ndarray:
        v = _sample(self.imag, grid)
        _check_nodes(v, grid, "Im V")
        return v

    def sample(self, grid: GridSpec) -> np.ndarray:
        return self.real_part(grid) + 1j * self.imag_part(grid)

    def x_grad_real(self, grid: GridSpec) -> np.ndarray:
        """``x . grad V1`` at the nodes.

        Closures are differenced at the half-cell points ``x +- (h/2) e_j``
        (the compact central difference, which never straddles a node
        singularity); node arrays fall back to :func:`x_dot_grad`.
        """
        if callable(self.real):
            x = grid.coords
            out = np.zeros(grid.size)
            for j in range(grid.d):
                e = np.zeros(grid.d)
                e[j] = 0.5 * grid.h
                diff = _eval(self.real, x + e) - _eval(self.real, x - e)
                out += x[:, j] * diff / grid.h
            _check_nodes(out, grid, "x . grad V")
            return out
        return x_dot_grad(grid, self.real_part(grid))

    def is_real(self, grid: GridSpec) -> bool:
        return self.imag is None or not np.any(self.imag_part(grid))

    def __add__(self, other: "PotentialSpec") -> "PotentialSpec":
        return PotentialSpec(_add(self.real, other.real), _add(self.imag, other.imag))


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return lambda x: _eval(a, x) + _eval(b, x)


def _eval(spec, coords):
    if callable(spec):
        return np.asarray(spec(coords), dtype=float)
    vals = np.asarray(spec, dtype=float)
    return np.full(len(coords), vals) if vals.ndim == 0 else vals


def _check_nodes(v, grid, what):
    if v.shape != (grid.size,):
        raise ShapeError(f"{what}: expected {grid.size} node values, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidSpec(f"{what} is not finite at every node")


@dataclass(frozen=True)
class MagneticSpec:
    """Vector potential ``A`` (callable returning shape ``(d, N)`` or array)."""

    A: Union[np.ndarray, Callable]

    def sample(self, grid: GridSpec) -> np.ndarray:
        vals = np.asarray(self.A(grid.coords) if callable(self.A) else self.A, dtype=float)
        if vals.shape != (grid.d, grid.size):
            raise ShapeError(f"A: expected shape {(grid.d, grid.size)}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidSpec("A is not finite at every node")
        return vals

    def tensor(self, grid: GridSpec) -> np.ndarray:
        """``B[j, k] = d_j A_k - d_k A_j`` by central differences, shape (d, d, N)."""
        A = self.sample(grid)
        dA = np.stack([np.stack([central_gradient(grid, A[k], j) for k in range(grid.d)])
                       for j in range(grid.d)])
        return dA - dA.transpose(1, 0, 2)

    def curl(self, grid: GridSpec) -> np.ndarray:
        if grid.d != 3:
            raise InvalidSpec("curl A is only defined for d = 3")
        B = self.tensor(grid)
        return np.stack([B[1, 2], B[2, 0], B[0, 1]])

    def strength(self, grid: GridSpec) -> np.ndarray:
        """Pointwise operator norm of the antisymmetric tensor ``B``."""
        B = self.tensor(grid)
        if grid.d == 1:
            return np.zeros(grid.size)
        if grid.d == 2:
            return np.abs(B[0, 1])
        return np.sqrt(B[1, 2] ** 2 + B[2, 0] ** 2 + B[0, 1] ** 2)

    def gauge_shift(self, grad_chi: Callable) -> "MagneticSpec":
        """The gauge-equivalent potential ``A + grad chi``."""
        base = self.A
        return MagneticSpec(lambda x: _eval_vec(base, x) + np.asarray(grad_chi(x), dtype=float))


def _eval_vec(spec, coords):
    return np.asarray(spec(coords) if callable(spec) else spec, dtype=float)


@dataclass(frozen=True)
class BoundarySpec:
    kind: str = "dirichlet"
    alpha: ArrayOrFn = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "robin"):
            raise InvalidSpec(f"boundary kind must be 'dirichlet' or 'robin', got {self.kind!r}")

    def face_alpha(self, grid: GridSpec) -> np.ndarray:
        """Robin coefficient on the face nodes (ordered like the lateral grid)."""
        face = face_coords(grid)
        a = self.alpha
        if callable(a):
            vals = np.asarray(a(face), dtype=complex)
        else:
            vals = np.asarray(0.0 if a is None else a, dtype=complex)
        if vals.ndim == 0:
            vals = np.full(len(face), vals)
        if vals.shape != (len(face),):
            raise ShapeError(f"alpha: expected {len(face)} face values, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidSpec("Robin coefficient must be finite")
        return vals


def face_coords(grid: GridSpec) -> np.ndarray:
    """Lateral coordinates of the face ``x_d = 0``, shape ``(n**(d-1), d-1)``."""
    if grid.d == 1:
        return np.zeros((1, 0))
    axes = [grid.axis(j) for j in range(grid.d - 1)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# -- potential and vector-potential builders ---------------------------------

def coulomb(charge: float = 1.0) -> PotentialSpec:
    return PotentialSpec(real=lambda x: -charge / np.linalg.norm(x, axis=1))


def harmonic(coefficient: float = 1.0) -> PotentialSpec:
    return PotentialSpec(real=lambda x: coefficient * np.sum(x ** 2, axis=1))


def gaussian(amplitude: float = 1.0, width: float = 1.0, imaginary: bool = False) -> PotentialSpec:
    fn = lambda x: amplitude * np.exp(-np.sum(x ** 2, axis=1) / width ** 2)  # noqa: E731
    return PotentialSpec(imag=fn) if imaginary else PotentialSpec(real=fn)


def inverse_square(beta: float = 1.0) -> PotentialSpec:
    return PotentialSpec(real=lambda x: beta / np.sum(x ** 2, axis=1))


def constant(value: float = 0.0) -> PotentialSpec:
    return PotentialSpec(real=value)


def constant_field(B) -> MagneticSpec:
    """Symmetric-gauge potential of a constant field.

    ``B`` is a scalar (``B_12`` in d = 2) or a 3-vector (d = 3).
    """
    B = np.atleast_1d(np.asarray(B, dtype=float))
    if B.size == 1:
        b = float(B[0])
        return MagneticSpec(lambda x: 0.5 * b * np.stack([-x[:, 1], x[:, 0]]))
    if B.size != 3:
        raise InvalidSpec("constant field needs a scalar (d=2) or a 3-vector (d=3)")
    return MagneticSpec(lambda x: 0.5 * np.cross(B, x).T)


def gaussian_vortex(strength: float = 1.0, width: float = 1.0) -> MagneticSpec:
    """``A = s exp(-|x|^2/w^2) (-x_2, x_1, 0, ...)``: a localized swirl."""
    def A(x):
        g = strength * np.exp(-np.sum(x ** 2, axis=1) / width ** 2)
        out = np.zeros((x.shape[1], len(x)))
        out[0] = -g * x[:, 1]
        out[1] = g * x[:, 0]
        return out
    return MagneticSpec(A)


# -- one-dimensional stencils and tensor-product embedding -------------------

def _central1(n: int, h: float) -> sp.csr_matrix:
    off = np.ones(n - 1) / (2 * h)
    return sp.diags([-off, off], [-1, 1], format="csr")


def _second1(n: int, h: float, left_ghost: complex = -1.0, right_ghost: complex = -1.0):
    """Compact ``-d^2/dx^2``; ghosts are ``ghost_ratio * first_node``."""
    diag = np.full(n, 2.0, dtype=complex)
    diag[0] -= left_ghost
    diag[-1] -= right_ghost
    off = -np.ones(n - 1)
    m = sp.diags([off, diag, off], [-1, 0, 1], format="csr") / h ** 2
    if np.all(diag.imag == 0):
        m = m.real.tocsr()
    return m


def _edge1(n: int, h: float) -> sp.csr_matrix:
    """Face differences with mirrored Dirichlet ghosts: ``G^T G = -d^2/dx^2``."""
    rows = np.concatenate([[0], np.arange(1, n), np.arange(1, n), [n]])
    cols = np.concatenate([[0], np.arange(0, n - 1), np.arange(1, n), [n - 1]])
    s = np.sqrt(2.0)
    vals = np.concatenate([[s], -np.ones(n - 1), np.ones(n - 1), [-s]]) / h
    return sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))


def _average1(n: int) -> sp.csr_matrix:
    """Face averages; the mirrored ghost makes the wall value zero."""
    rows = np.concatenate([np.arange(1, n), np.arange(1, n)])
    cols = np.concatenate([np.arange(0, n - 1), np.arange(1, n)])
    return sp.csr_matrix((np.full(2 * (n - 1), 0.5), (rows, cols)), shape=(n + 1, n))


def _embed(grid: GridSpec, j: int, m1) -> sp.csr_matrix:
    left = sp.identity(grid.n ** j, format="csr")
    right = sp.identity(grid.n ** (grid.d - 1 - j), format="csr")
    return sp.kron(sp.kron(left, m1), right, format="csr")


def _check_axis(grid: GridSpec, j: int):
    if not 0 <= j < grid.d:
        raise InvalidSpec(f"axis {j} out of range for d={grid.d}")


def central_difference(grid: GridSpec, j: int) -> sp.csr_matrix:
    """Real antisymmetric central difference along axis ``j`` (zero ghosts)."""
    _check_axis(grid, j)
    return _embed(grid, j, _central1(grid.n, grid.h))


def central_gradient(grid: GridSpec, values: np.ndarray, j: int) -> np.ndarray:
    """Central difference of sampled node values, second order at the walls."""
    arr = np.asarray(values).reshape(grid.shape)
    return np.gradient(arr, grid.h, axis=j, edge_order=2).ravel()


def x_dot_grad(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """``x . grad f`` for a sampled scalar field."""
    return sum(grid.coords[:, j] * central_gradient(grid, values, j) for j in range(grid.d))


def momentum(grid: GridSpec, j: int) -> SparseOperator:
    """``p_j = -i d/dx_j`` by central differences; Hermitian."""
    return SparseOperator(-1j * central_difference(grid, j), hermitian=True)


def edge_gradient(grid: GridSpec, j: int) -> sp.csr_matrix:
    """Node-to-face differences along axis ``j`` (Dirichlet walls)."""
    _check_axis(grid, j)
    return _embed_faces(grid, j, _edge1(grid.n, grid.h))


def edge_average(grid: GridSpec, j: int) -> sp.csr_matrix:
    _check_axis(grid, j)
    return _embed_faces(grid, j, _average1(grid.n))


def _embed_faces(grid, j, m1):
    return _embed(grid, j, m1)


def face_points(grid: GridSpec, j: int) -> np.ndarray:
    """Coordinates of the faces reached by :func:`edge_gradient` along ``j``."""
    axes = [grid.axis(k) for k in range(grid.d)]
    axes[j] = grid.edges(j)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _robin_ratio(alpha: np.ndarray, h: float) -> np.ndarray:
    """Ghost/first-node ratio from ``-(g1 - g0)/h + alpha (g1 + g0)/2 = 0``."""
    a = 0.5 * alpha * h
    if np.any(np.abs(1.0 + a) < 1e-12):
        raise InvalidSpec("Robin coefficient makes the ghost elimination singular (alpha h = -2)")
    return (1.0 - a) / (1.0 + a)


def laplacian(grid: GridSpec, bc: Optional[BoundarySpec] = None) -> SparseOperator:
    """``-Delta`` with Dirichlet walls, optionally a Robin face at ``x_d = 0``."""
    bc = bc or BoundarySpec()
    if bc.kind == "robin" and grid.geometry != HALF:
        raise InvalidSpec("Robin conditions need a half-box grid")
    total = None
    for j in range(grid.d):
        term = _embed(grid, j, _second1(grid.n, grid.h))
        total = term if total is None else total + term
    if bc.kind == "robin":
        ratio = _robin_ratio(bc.face_alpha(grid), grid.h)
        # face nodes: index 0 along the last axis; replace the mirrored ghost
        face_idx = np.arange(grid.size).reshape(grid.shape)[..., 0].ravel()
        corr = np.zeros(grid.size, dtype=complex)
        corr[face_idx] = (-1.0 - ratio) / grid.h ** 2
        total = total + sp.diags(corr)
        hermitian = bool(np.all(np.imag(bc.face_alpha(grid)) == 0))
        if hermitian:
            total = total.real
        return SparseOperator(total.tocsr(), hermitian=hermitian)
    return SparseOperator(total.tocsr(), hermitian=True)


def schrodinger(grid: GridSpec, magnetic: Optional[MagneticSpec] = None,
                potential: Optional[PotentialSpec] = None,
                bc: Optional[BoundarySpec] = None) -> SparseOperator:
    """``H_{A,V} = (p - A)^2 + V`` with symmetrized magnetic cross terms."""
    lap = laplacian(grid, bc)
    H = lap.matrix.astype(complex)
    hermitian = lap.hermitian
    if magnetic is not None:
        A = magnetic.sample(grid)
        for j in range(grid.d):
            P = -1j * central_difference(grid, j)
            Aj = sp.diags(A[j])
            H = H - (P @ Aj + Aj @ P) + sp.diags(A[j] ** 2)
    if potential is not None:
        V = potential.sample(grid)
        H = H + sp.diags(V)
        hermitian = hermitian and not np.any(V.imag)
    H = H.tocsr()
    if not np.any(H.data.imag):
        H = H.real.tocsr()
    return SparseOperator(H, hermitian=hermitian)


def dilation_generator(grid: GridSpec, magnetic: Optional[MagneticSpec] = None) -> SparseOperator:
    """``T = (x . p_A + p_A . x) / 2`` with the central (magnetic) momentum."""
    T = sp.csr_matrix((grid.size, grid.size), dtype=complex)
    A = magnetic.sample(grid) if magnetic is not None else None
    for j in range(grid.d):
        P = -1j * central_difference(grid, j)
        if A is not None:
            P = P - sp.diags(A[j])
        X = sp.diags(grid.coords[:, j])
        T = T + 0.5 * (X @ P + P @ X)
    return SparseOperator(T.tocsr(), hermitian=True)


def commutator_apply(H: SparseOperator, T: SparseOperator, psi):
    """``i (H T - T H) psi`` from four products, never forming ``HT``."""
    if H.dim != T.dim:
        raise ShapeError(f"operator dimensions differ: {H.dim} vs {T.dim}")
    x = psi.values if isinstance(psi, Field) else np.asarray(psi)
    if x.shape[0] != H.dim:
        raise ShapeError(f"dimension mismatch: operator {H.dim}, field {x.shape[0]}")
    out = 1j * (H.matrix @ (T.matrix @ x) - T.matrix @ (H.matrix @ x))
    return psi.with_values(out) if isinstance(psi, Field) else out


class DirichletSpectralSolver:
    """Exact solves with the Dirichlet ``-Delta`` by sine-transform diagonalization.

    The cell-centered Dirichlet stencil is diagonalized by the type-II sine
    transform on every axis; its eigenvalues are
    ``(4/h^2) sin^2(pi k / (2n))``, ``k = 1..n``, summed over axes.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        k = np.arange(1, grid.n + 1)
        e1 = (4.0 / grid.h ** 2) * np.sin(np.pi * k / (2 * grid.n)) ** 2
        E = np.zeros(grid.shape)
        for j in range(grid.d):
            shape = [1] * grid.d
            shape[j] = grid.n
            E = E + e1.reshape(shape)
        self.eigenvalues = E

    def distance(self, lam: complex) -> float:
        return float(np.min(np.abs(self.eigenvalues - lam)))

    def solve(self, rhs: np.ndarray, lam: complex = 0.0) -> np.ndarray:
        """``(-Delta - lam)^{-1} rhs`` for node-value arrays."""
        g = self.grid
        b = np.asarray(rhs).reshape(g.shape)
        axes = tuple(range(g.d))
        if np.iscomplexobj(b) or np.iscomplexobj(lam):
            re = dstn(b.real, type=2, norm="ortho", axes=axes)
            im = dstn(b.imag, type=2, norm="ortho", axes=axes)
            coef = (re + 1j * im) / (self.eigenvalues - lam)
            out = (idstn(coef.real, type=2, norm="ortho", axes=axes)
                   + 1j * idstn(coef.imag, type=2, norm="ortho", axes=axes))
        else:
            coef = dstn(b, type=2, norm="ortho", axes=axes) / (self.eigenvalues - lam)
            out = idstn(coef, type=2, norm="ortho", axes=axes)
        return out.ravel()
