"""Classical and quantum time evolution for the virial and dispersion checks.

The classical part integrates Newton's law with velocity Verlet and logs the
dilation observable ``T_0(t) = x(t) . p(t)``.  The quantum part propagates
with the Cayley (Crank-Nicolson) map, which is unitary for Hermitian ``H``,
using one sparse LU factorization for the whole run.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import InvalidSpec
from .lattice import FULL, Field, GridSpec
from .sparsekit import SparseOperator, factorize


# -- classical -------------------------------------------------------------------

@dataclass(frozen=True)
class ClassicalState:
    x: np.ndarray
    p: np.ndarray
    m: float = 1.0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if x.shape != p.shape or x.ndim != 1:
            raise InvalidSpec("x and p must be vectors of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise InvalidSpec("state must be finite")
        if not self.m > 0:
            raise InvalidSpec("mass must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class ClassicalPotential:
    """``V(x)`` and its gradient for a single point ``x``; ``radius`` bounds the domain."""

    value: Callable
    gradient: Callable
    radius: float = np.inf


def classical_harmonic(k: float = 1.0) -> ClassicalPotential:
    """``V = k |x|^2``."""
    return ClassicalPotential(lambda x: k * float(x @ x), lambda x: 2 * k * x)


def classical_free() -> ClassicalPotential:
    return ClassicalPotential(lambda x: 0.0, lambda x: np.zeros_like(x))


def repulsive_root(c: float = 2.0) -> ClassicalPotential:
    """``V = -c sqrt(1 + |x|^2)``; ``-x . grad V = c |x|^2 / sqrt(1 + |x|^2)``."""
    return ClassicalPotential(lambda x: -c * np.sqrt(1 + x @ x),
                              lambda x: -c * x / np.sqrt(1 + x @ x))


@dataclass
class EvolverCfg:
    dt: float
    steps: int
    scheme: str = "verlet"

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidSpec("dt must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidSpec("steps must be a positive integer")
        if self.scheme not in ("verlet", "cayley"):
            raise InvalidSpec(f"scheme must be 'verlet' or 'cayley', got {self.scheme!r}")

    @property
    def total_time(self) -> float:
        return self.dt * self.steps


@dataclass
class TrajectoryLog:
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    T0: np.ndarray
    H: np.ndarray
    x_grad_V: np.ndarray
    m: float
    dt: float
    truncated: bool = False

    @property
    def kinetic(self) -> np.ndarray:
        return np.sum(self.p ** 2, axis=1) / (2 * self.m)


def integrate_classical(state: ClassicalState, V: ClassicalPotential,
                        cfg: EvolverCfg) -> TrajectoryLog:
    """Velocity Verlet for ``x' = p/m``, ``p' = -grad V``.

    The run stops early, with ``truncated`` set, once ``|x|`` leaves
    ``V.radius``; the log then ends at the last sample inside.
    """
    if cfg.scheme != "verlet":
        raise InvalidSpec("classical runs use the velocity-Verlet scheme")
    x, p, m, dt = state.x.copy(), state.p.copy(), state.m, cfg.dt
    xs, ps = [x.copy()], [p.copy()]
    force = -np.asarray(V.gradient(x), dtype=float)
    truncated = False
    for _ in range(cfg.steps):
        p_half = p + 0.5 * dt * force
        x_new = x + dt * p_half / m
        if not np.linalg.norm(x_new) <= V.radius:
            truncated = True
            break
        x = x_new
        force = -np.asarray(V.gradient(x), dtype=float)
        p = p_half + 0.5 * dt * force
        xs.append(x.copy())
        ps.append(p.copy())
    X, P = np.array(xs), np.array(ps)
    grads = np.array([V.gradient(xi) for xi in X])
    energy = np.sum(P ** 2, axis=1) / (2 * m) + np.array([V.value(xi) for xi in X])
    return TrajectoryLog(np.arange(len(X)) * dt, X, P, np.sum(X * P, axis=1), energy,
                         np.sum(X * grads, axis=1), m, dt, truncated)


def classical_virial_residual(log: TrajectoryLog) -> float:
    """``max |dT_0/dt - (2 H_0 - x . grad V)|`` over interior samples (centered differences)."""
    if len(log.t) < 3:
        raise InvalidSpec("need at least three samples")
    dT = (log.T0[2:] - log.T0[:-2]) / (2 * log.dt)
    rhs = 2 * log.kinetic[1:-1] - log.x_grad_V[1:-1]
    return float(np.max(np.abs(dT - rhs)))


class Propagation(str, enum.Enum):
    PROPAGATES = "PROPAGATES"
    HYPOTHESIS_VIOLATED = "HYPOTHESIS_VIOLATED"
    FAILS = "FAILS"
    INCONCLUSIVE = "INCONCLUSIVE"


def propagation_check(log: TrajectoryLog, a: float, tol: Optional[float] = None) -> Propagation:
    """Check ``T_0(t) >= T_0(0) + a t - tol`` given ``-x . grad V >= a`` along the run.

    ``tol`` defaults to ``10 dt^2``.  The statement is a finite-horizon
    surrogate of the propagation theorem, which concerns ``t -> infinity``.
    """
    if a <= 0:
        return Propagation.INCONCLUSIVE
    if np.min(-log.x_grad_V) < a:
        return Propagation.HYPOTHESIS_VIOLATED
    tol = 10 * log.dt ** 2 if tol is None else tol
    ok = np.all(log.T0 >= log.T0[0] + a * log.t - tol)
    return Propagation.PROPAGATES if ok else Propagation.FAILS


# -- quantum -------------------------------------------------------------------------

@dataclass
class QuantumTrajectory:
    """Sampled states of a Cayley run (every ``stride`` steps)."""

    times: np.ndarray
    states: list
    dt: float
    aborted: bool = False
    message: str = ""
    norms: np.ndarray = field(default_factory=lambda: np.zeros(0))


def outer_shell_mask(grid: GridSpec, fraction: float = 0.1) -> np.ndarray:
    """Nodes within ``fraction`` of the box half-width from a wall."""
    x = grid.coords.copy()
    if grid.geometry != FULL:
        x[:, -1] -= grid.L
    return np.max(np.abs(x), axis=1) > (1.0 - fraction) * grid.L


def evolve_quantum(H: SparseOperator, psi0: Field, cfg: EvolverCfg, stride: int = 1,
                   guard: bool = True, mass_limit: float = 0.01) -> QuantumTrajectory:
    """Propagate ``i psi' = H psi`` with ``psi <- (1 - i dt H/2)(1 + i dt H/2)^{-1} psi``.

    Parameters
    ----------
    H : SparseOperator
        Hermitian Hamiltonian on ``psi0.grid``.
    psi0 : Field
        Initial state.
    cfg : EvolverCfg
        Step size and count; ``scheme`` must be ``"cayley"``.
    stride : int
        Keep every ``stride``-th state (the first and last are always kept).
    guard : bool
        Abort, with ``aborted`` set, once the fraction ``mass_limit`` of the
        norm reaches the outer 10% shell of the box.

    Returns
    -------
    QuantumTrajectory
    """
    if cfg.scheme != "cayley":
        raise InvalidSpec("quantum runs use the Cayley scheme")
    if not H.hermitian:
        raise InvalidSpec("the Cayley scheme is unitary only for Hermitian H")
    if H.dim != psi0.values.size:
        raise InvalidSpec("operator and state dimensions differ")
    eye = sp.identity(H.dim, format="csc", dtype=complex)
    half = 0.5j * cfg.dt * H.matrix
    lu = factorize((eye + half).tocsc(), tol=1e-10)
    explicit = (eye - half).tocsr()
    shell = np.tile(outer_shell_mask(psi0.grid), psi0.spinor_dim)
    u = psi0.values.copy()
    norm0 = np.vdot(u, u).real
    times, states, norms = [0.0], [psi0], [np.sqrt(norm0 * psi0.grid.cell_volume)]
    aborted, msg = False, ""
    for k in range(1, cfg.steps + 1):
        u = lu.solve(explicit @ u)
        if guard and np.vdot(u[shell], u[shell]).real >= mass_limit * norm0:
            aborted, msg = True, f"boundary contamination at step {k}"
        if k % stride == 0 or k == cfg.steps or aborted:
            times.append(k * cfg.dt)
            states.append(psi0.with_values(u))
            norms.append(np.sqrt(np.vdot(u, u).real * psi0.grid.cell_volume))
        if aborted:
            break
    return QuantumTrajectory(np.array(times), states, cfg.dt * stride, aborted, msg,
                             np.array(norms))


def expectation(A, psi: Field) -> complex:
    mat = A.matrix if isinstance(A, SparseOperator) else A
    u = psi.values
    return complex(np.vdot(u, mat @ u) * psi.grid.cell_volume)


def expectation_evolution_residual(H: SparseOperator, T: SparseOperator,
                                   traj: QuantumTrajectory) -> float:
    """``max |d<T>/dt - <i[H, T]>|`` over interior samples (centered differences).

    Samples must be equally spaced; the spacing is ``traj.dt``.
    """
    if len(traj.states) < 3:
        raise InvalidSpec("need at least three samples")
    vals = np.array([expectation(T, s).real for s in traj.states])
    deriv = (vals[2:] - vals[:-2]) / (2 * traj.dt)
    comm = []
    for s in traj.states[1:-1]:
        u = s.values
        w = 1j * (H.matrix @ (T.matrix @ u) - T.matrix @ (H.matrix @ u))
        comm.append(np.vdot(u, w).real * s.grid.cell_volume)
    return float(np.max(np.abs(deriv - np.array(comm))))


def dispersion_second_differences(traj: QuantumTrajectory) -> np.ndarray:
    """Second time-differences of ``<|x|^2/4>`` at interior samples."""
    g = traj.states[0].grid
    q = 0.25 * np.sum(g.coords ** 2, axis=1)
    vals = np.array([np.sum(q * np.abs(s.values) ** 2) * g.cell_volume for s in traj.states])
    return (vals[2:] - 2 * vals[1:-1] + vals[:-2]) / traj.dt ** 2
