"""Sparse operators and the Krylov machinery that acts on them.

Storage and the plain linear solves lean on :mod:`scipy.sparse`; the
eigensolvers are a restarted Krylov-Schur iteration written here, with full
reorthogonalization.  Every eigenpair leaves this module with its residual
recomputed by one extra product against the original operator.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidSpec, ShapeError, SolverFailure
from .lattice import Field

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """CSR matrix plus a Hermiticity hint."""

    matrix: sp.csr_matrix
    hermitian: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise ShapeError(f"operator must be square, got {m.shape}")
        m.sum_duplicates()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def indptr(self):
        return self.matrix.indptr

    @property
    def indices(self):
        return self.matrix.indices

    @property
    def data(self):
        return self.matrix.data

    def adjoint(self) -> "SparseOperator":
        return SparseOperator(self.matrix.conj().T.tocsr(), self.hermitian)

    def hermitian_defect(self) -> float:
        """``max|A - A*| / max|A|``."""
        diff = self.matrix - self.matrix.conj().T
        top = abs(self.matrix).max() if self.matrix.nnz else 0.0
        if top == 0:
            return 0.0
        return float(abs(diff).max() / top) if diff.nnz else 0.0

    def check_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermitian_defect() <= tol

    def __matmul__(self, v):
        return matvec(self, v)


@dataclass
class SolverCfg:
    tol: float = 1e-8
    maxiter: int = 2000
    shift: complex = 0.0
    subspace: int = 40
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise InvalidSpec("solver tolerance must be positive")
        if self.subspace < 2:
            raise InvalidSpec("subspace size must be at least 2")


@dataclass
class EigenResult:
    """Eigenpairs sorted by real part; ``vectors`` holds them as columns."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int = 0
    converged: bool = True
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    def field(self, i: int, grid, spinor_dim: int = 1) -> Field:
        return Field(grid, self.vectors[:, i], spinor_dim)


def _raw(v):
    return v.values if isinstance(v, Field) else np.asarray(v)


def _like(template, values):
    return template.with_values(values) if isinstance(template, Field) else values


def matvec(A: SparseOperator, v):
    x = _raw(v)
    if x.shape[0] != A.dim:
        raise ShapeError(f"dimension mismatch: operator {A.dim}, vector {x.shape[0]}")
    return _like(v, A.matrix @ x)


def solve(A: SparseOperator, b, cfg: Optional[SolverCfg] = None,
          method: str = "auto", positive_definite: bool = False):
    """Solve ``A x = b`` to relative residual ``cfg.tol``.

    ``method="auto"`` picks conjugate gradients when the operator is flagged
    Hermitian and the caller asserts positive definiteness, BiCGSTAB
    otherwise.  ``"direct"`` uses a sparse LU factorization.
    """
    cfg = cfg or SolverCfg()
    rhs = _raw(b)
    if rhs.shape[0] != A.dim:
        raise ShapeError(f"dimension mismatch: operator {A.dim}, rhs {rhs.shape[0]}")
    if not np.all(np.isfinite(rhs)):
        raise InvalidSpec("right-hand side must be finite")
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0:
        return _like(b, np.zeros_like(rhs, dtype=np.result_type(rhs, A.matrix.dtype)))
    if method == "auto":
        method = "cg" if (A.hermitian and positive_definite) else "bicgstab"
    if method == "direct":
        x = factorize(A).solve(rhs)
    elif method in ("cg", "bicgstab"):
        routine = spla.cg if method == "cg" else spla.bicgstab
        x, info = routine(A.matrix, rhs, rtol=cfg.tol, atol=0.0, maxiter=cfg.maxiter)
        if info != 0 or not np.all(np.isfinite(x)):
            res = _relres(A.matrix, x, rhs, bnorm)
            raise SolverFailure(f"{method} did not converge (info={info})", res)
    else:
        raise InvalidSpec(f"unknown solve method {method!r}")
    res = _relres(A.matrix, x, rhs, bnorm)
    # the Krylov solvers test a recursively updated residual; confirm it
    if not res <= max(cfg.tol, 1e-12) * 10:
        raise SolverFailure(f"{method} residual {res:.3e} above tolerance {cfg.tol:.1e}", res)
    return _like(b, x)


def _relres(M, x, rhs, bnorm):
    if not np.all(np.isfinite(x)):
        return float("inf")
    return float(np.linalg.norm(M @ x - rhs) / bnorm)


class Factorization:
    """Sparse LU of a square matrix with residual-checked solves."""

    def __init__(self, matrix, tol: float = 1e-8):
        self.matrix = sp.csc_matrix(matrix)
        self.tol = tol
        try:
            self._lu = spla.splu(self.matrix)
        except RuntimeError as exc:
            raise SolverFailure(f"factorization failed: {exc}") from exc

    def solve(self, rhs, trans: str = "N"):
        rhs = np.asarray(rhs)
        if np.iscomplexobj(rhs) and not np.iscomplexobj(self.matrix.data):
            x = (self._lu.solve(np.ascontiguousarray(rhs.real), trans=trans)
                 + 1j * self._lu.solve(np.ascontiguousarray(rhs.imag), trans=trans))
        else:
            x = self._lu.solve(rhs, trans=trans)
        M = self.matrix if trans == "N" else self.matrix.conj().T
        bnorm = np.linalg.norm(rhs)
        res = _relres(M, x, rhs, bnorm) if bnorm else 0.0
        if not res <= self.tol:
            raise SolverFailure(f"direct solve residual {res:.3e} above {self.tol:.1e}", res)
        return x


def factorize(A, tol: float = 1e-8) -> Factorization:
    return Factorization(A.matrix if isinstance(A, SparseOperator) else A, tol)


def _start_vector(dim, dtype, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    if np.issubdtype(dtype, np.complexfloating):
        v = v + 1j * rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(dtype)


def krylov_schur(apply: Callable, dim: int, k: int, key: Callable,
                 hermitian: bool, cfg: SolverCfg, dtype=complex):
    """Restarted Krylov-Schur for the ``k`` Ritz pairs minimizing ``key``.

    Keeps ``V`` (orthonormal basis, one column ahead) and ``W = apply(V)`` so
    Ritz residuals ``||W s - theta V s||`` are exact for the projected pairs.
    Returns ``(theta, Y, residuals, iterations, converged)`` for the wanted
    pairs, ordered by ``key``.
    """
    k = min(k, dim)
    m = min(max(cfg.subspace, k + 2), dim)
    if m <= k:
        # tiny problems: one full-space projection is exact
        m = dim
    V = np.zeros((dim, m + 1), dtype=dtype)
    W = np.zeros((dim, m), dtype=dtype)
    V[:, 0] = _start_vector(dim, dtype, cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    p = 0
    matvecs = 0
    theta = Y = res = None
    converged = False
    max_restarts = max(1, cfg.maxiter // max(1, m - k))
    for _ in range(max_restarts):
        for j in range(p, m):
            w = apply(V[:, j])
            matvecs += 1
            W[:, j] = w
            basis = V[:, : j + 1]
            r = w - basis @ (basis.conj().T @ w)
            r -= basis @ (basis.conj().T @ r)
            beta = np.linalg.norm(r)
            if beta <= 1e-13 * max(1.0, np.linalg.norm(w)):
                # invariant subspace reached; continue with a fresh direction
                for _attempt in range(5):
                    r = rng.standard_normal(dim).astype(dtype)
                    r -= basis @ (basis.conj().T @ r)
                    r -= basis @ (basis.conj().T @ r)
                    beta = np.linalg.norm(r)
                    if beta > 1e-8:
                        break
            V[:, j + 1] = r / beta if beta > 0 else 0.0
        H = V[:, :m].conj().T @ W[:, :m]
        if hermitian:
            H = 0.5 * (H + H.conj().T)
            evals, S = np.linalg.eigh(H)
        else:
            evals, S = np.linalg.eig(H)
        order = np.argsort([key(z) for z in evals], kind="stable")
        want = order[:k]
        theta = evals[want]
        Y = V[:, :m] @ S[:, want]
        AY = W[:, :m] @ S[:, want]
        nrm = np.linalg.norm(Y, axis=0)
        Y = Y / nrm
        AY = AY / nrm
        res = np.linalg.norm(AY - Y * theta, axis=0)
        scale = max(np.max(np.abs(evals)), np.finfo(float).tiny)
        if np.all(res <= cfg.tol * scale) or m == dim:
            converged = bool(np.all(res <= cfg.tol * scale))
            break
        keep = min(m - 1, k + max(1, (m - k) // 2))
        if hermitian:
            Q = S[:, order[:keep]]
        else:
            T, Q, sdim = _ordered_schur(H, evals, order[:keep])
            Q = Q[:, :sdim]
            keep = sdim
        Vk = V[:, :m] @ Q
        Wk = W[:, :m] @ Q
        last = V[:, m].copy()
        V[:, :keep] = Vk
        W[:, :keep] = Wk
        V[:, keep] = last
        p = keep
    return theta, Y, res, matvecs, converged


def _ordered_schur(H, evals, wanted_idx):
    """Complex Schur form with the wanted eigenvalues leading."""
    chosen = evals[wanted_idx]

    def select(z):
        return bool(np.min(np.abs(chosen - z)) <= 1e-10 * max(1.0, abs(z)))

    T, Q, sdim = scipy.linalg.schur(H.astype(complex), output="complex", sort=select)
    if sdim == 0:
        sdim = len(wanted_idx)
    return T, Q, sdim


def _finish(values, vectors, apply_original, iterations, converged, meta=None):
    """Sort by real part and recompute residuals against the original map."""
    order = np.lexsort((np.imag(values), np.real(values)))
    values = np.asarray(values)[order]
    vectors = np.asarray(vectors)[:, order]
    vectors = vectors / np.linalg.norm(vectors, axis=0)
    residuals = np.array([
        np.linalg.norm(apply_original(vectors[:, i]) - values[i] * vectors[:, i])
        for i in range(len(values))
    ])
    return EigenResult(values, vectors, residuals, iterations, converged, meta or {})


def lanczos(apply, k: int, cfg: Optional[SolverCfg] = None, which: str = "lowest",
            dim: Optional[int] = None, dtype=None) -> EigenResult:
    """Extreme eigenpairs of a Hermitian map (operator or callable).

    ``which`` is ``"lowest"`` or ``"highest"``.  Values come back real.
    """
    cfg = cfg or SolverCfg()
    if isinstance(apply, SparseOperator):
        mat = apply.matrix
        dim = apply.dim
        dtype = dtype or np.result_type(mat.dtype, np.float64)
        fn = lambda v: mat @ v  # noqa: E731
    else:
        if dim is None:
            raise InvalidSpec("dimension required for a callable operator")
        fn = apply
        dtype = dtype or complex
    sign = 1.0 if which == "lowest" else -1.0
    if which not in ("lowest", "highest"):
        raise InvalidSpec(f"which must be 'lowest' or 'highest', got {which!r}")
    theta, Y, _, its, ok = krylov_schur(fn, dim, k, lambda z: sign * z.real, True, cfg, dtype)
    if not ok:
        logger.warning("Lanczos: %d wanted pairs not converged after %d products", k, its)
    return _finish(theta.real, Y, fn, its, ok, {"method": "lanczos", "which": which})


def lanczos_lowest(A: SparseOperator, k: int, cfg: Optional[SolverCfg] = None) -> EigenResult:
    if not A.hermitian:
        raise InvalidSpec("lanczos_lowest needs an operator flagged Hermitian")
    return lanczos(A, k, cfg, "lowest")


def arnoldi_shift_invert(A: SparseOperator, shift: complex, k: int,
                         cfg: Optional[SolverCfg] = None, solver=None) -> EigenResult:
    """The ``k`` eigenpairs of ``A`` nearest ``shift``.

    Arnoldi runs on ``(A - shift)^{-1}``; inner solves use a sparse LU unless
    ``solver`` (a callable ``rhs -> x``) is given.  Failures of the inner
    solve propagate as :class:`SolverFailure`.
    """
    cfg = cfg or SolverCfg()
    shifted = A.matrix - shift * sp.identity(A.dim, format="csr")
    if solver is None:
        solver = factorize(shifted, tol=max(cfg.tol, 1e-10)).solve
    mat = A.matrix
    theta, Y, _, its, ok = krylov_schur(
        solver, A.dim, k, lambda z: -abs(z), False, cfg, complex)
    with np.errstate(divide="ignore"):
        values = shift + 1.0 / theta
    return _finish(values, Y, lambda v: mat @ v, its, ok,
                   {"method": "arnoldi_shift_invert", "shift": complex(shift)})


@dataclass
class NormEstimate:
    """Largest singular value estimate from power iteration.

    ``value`` is always a lower bound of the true norm; ``converged`` false
    means only the lower-bound reading is justified.
    """

    value: float
    converged: bool
    iterations: int

    def __float__(self):
        return float(self.value)


def opnorm(apply_m: Callable, apply_madj: Callable, dim: int,
           cfg: Optional[SolverCfg] = None, dtype=complex) -> NormEstimate:
    """Power iteration on ``M* M`` from a seeded start vector."""
    cfg = cfg or SolverCfg()
    v = _start_vector(dim, dtype, cfg.seed)
    history = []
    best = 0.0
    for it in range(1, cfg.maxiter + 1):
        mv = apply_m(v)
        est = float(np.linalg.norm(mv))
        best = max(best, est)
        history.append(est)
        u = apply_madj(mv)
        un = np.linalg.norm(u)
        if un == 0:
            return NormEstimate(best, True, it)
        v = u / un
        if len(history) >= 4:
            recent = history[-4:]
            if all(abs(b - a) <= cfg.tol * max(b, 1e-300) for a, b in zip(recent, recent[1:])):
                return NormEstimate(best, True, it)
    return NormEstimate(best, False, cfg.maxiter)


def dense_oracle(A: SparseOperator) -> EigenResult:
    """Full spectrum by dense reduction; refuses dimensions above 4096."""
    if A.dim > DENSE_LIMIT:
        raise InvalidSpec(f"dense oracle refused: dimension {A.dim} > {DENSE_LIMIT}")
    M = A.matrix.toarray()
    if A.hermitian:
        vals, vecs = np.linalg.eigh(M)
    else:
        vals, vecs = np.linalg.eig(M)
    return _finish(vals, vecs, lambda v: M @ v, 0, True, {"method": "dense"})
