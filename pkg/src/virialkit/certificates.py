"""Discrete constants of the functional inequalities and absence-of-eigenvalue verdicts.

All integral conditions share one quantifier pattern,
``int w |psi|^2 <= b int |grad psi|^2`` for every admissible ``psi``.  On the
lattice the best constant is the largest eigenvalue of the pencil
``W psi = mu K psi`` with ``W = diag(w)`` and ``K`` the (magnetic) stiffness
matrix; it is computed as the top eigenvalue of the symmetric map
``W^{1/2} K^{-1} W^{1/2}`` with a Lanczos iteration.
"""
from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InvalidSpec, NotApplicable
from .lattice import FULL, HALF, Field, GridSpec
from .operators import (BoundarySpec, DirichletSpectralSolver, MagneticSpec, PotentialSpec,
                        face_coords, schrodinger, x_dot_grad)
from .sparsekit import SolverCfg, factorize, lanczos, solve

TRUNCATION_CAVEAT = "discrete estimate on truncated domain"
CRITICALITY = ("criticality of the Laplacian in dimensions d = 1, 2: no inequality "
               "H_0 >= |V| holds for V != 0")
DIRECT_LIMIT = 40_000


class ConditionId(str, enum.Enum):
    REPULSIVE = "REPULSIVE"
    REPULSIVE_INT = "REPULSIVE_INT"
    SMALL_ELECTRIC = "SMALL_ELECTRIC"
    SMALL_MAGNETIC = "SMALL_MAGNETIC"
    SUBORDINATE = "SUBORDINATE"
    SMALL_IMAGINARY = "SMALL_IMAGINARY"
    DIRAC_MAGNETIC = "DIRAC_MAGNETIC"
    ROBIN_REPULSIVE = "ROBIN_REPULSIVE"

    def threshold(self, d: int) -> float:
        """The strict upper bound on the constant; 0 for the pointwise conditions."""
        return {
            "REPULSIVE": 0.0,
            "REPULSIVE_INT": 2.0,
            "SMALL_ELECTRIC": 2.0 / (d + 2),
            "SMALL_MAGNETIC": 1.0,
            "SUBORDINATE": 1.0,
            "SMALL_IMAGINARY": 0.5,
            "DIRAC_MAGNETIC": 1.0 / 14.0,
            "ROBIN_REPULSIVE": 0.0,
        }[self.value]


class CertVerdict(str, enum.Enum):
    CERTIFIED_ABSENCE = "CERTIFIED_ABSENCE"
    NOT_CERTIFIED = "NOT_CERTIFIED"
    NOT_APPLICABLE = "NOT_APPLICABLE"


REGULARITY = {
    ConditionId.REPULSIVE: "V in W^{1,p}_loc",
    ConditionId.REPULSIVE_INT: "V in W^{1,p}_loc",
    ConditionId.SMALL_MAGNETIC: "A in W^{1,2p}_loc",
    ConditionId.DIRAC_MAGNETIC: "A in W^{1,3}_loc",
    ConditionId.ROBIN_REPULSIVE: "alpha in W^{1,inf}_loc",
}


@dataclass
class Certificate:
    condition: ConditionId
    constants: dict
    threshold: float
    verdict: CertVerdict
    caveats: list = field(default_factory=list)
    assumed_flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition.value,
            "constants": {k: float(v) for k, v in self.constants.items()},
            "threshold": float(self.threshold),
            "verdict": self.verdict.value,
            "caveats": list(self.caveats),
            "assumed_flags": dict(self.assumed_flags),
        }


# -- constants -------------------------------------------------------------------

def _stiffness_inverse(grid: GridSpec, gradient, cfg: SolverCfg):
    if gradient is None or (isinstance(gradient, str) and gradient == "plain"):
        dst = DirichletSpectralSolver(grid)
        return dst.solve, False
    if not isinstance(gradient, MagneticSpec):
        raise InvalidSpec("gradient must be 'plain' or a MagneticSpec")
    K = schrodinger(grid, magnetic=gradient)
    if grid.size <= DIRECT_LIMIT:
        return factorize(K.matrix, tol=1e-10).solve, True
    inner_cfg = SolverCfg(tol=min(cfg.tol, 1e-10), maxiter=20 * grid.size)
    return (lambda b: solve(K, b, inner_cfg, method="cg", positive_definite=True)), True


def smallness_constant(weight: Union[Field, np.ndarray], grid: GridSpec,
                       gradient: Union[str, MagneticSpec] = "plain",
                       cfg: Optional[SolverCfg] = None) -> float:
    """Best discrete ``b`` with ``int w |psi|^2 <= b int |grad psi|^2``.

    Parameters
    ----------
    weight : Field or array
        Non-negative node weight ``w``.
    grid : GridSpec
        Grid with Dirichlet walls (full or half box).
    gradient : "plain" or MagneticSpec
        Use ``|grad psi|^2`` or the magnetic ``|grad_A psi|^2`` on the right.
    cfg : SolverCfg, optional
        Lanczos tolerance and seed.

    Returns
    -------
    float
        The largest eigenvalue of ``W psi = mu K psi``.
    """
    cfg = cfg or SolverCfg(tol=1e-9, subspace=30)
    w = np.asarray(weight.values if isinstance(weight, Field) else weight)
    if np.iscomplexobj(w):
        if np.any(np.abs(w.imag) > 1e-14 * max(np.max(np.abs(w)), 1.0)):
            raise InvalidSpec("weight must be real")
        w = w.real
    w = w.astype(float)
    if w.shape != (grid.size,):
        raise InvalidSpec(f"weight needs {grid.size} node values, got {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidSpec("weight must be finite and non-negative")
    if not np.any(w):
        return 0.0
    kinv, is_complex = _stiffness_inverse(grid, gradient, cfg)
    s = np.sqrt(w)
    dtype = complex if is_complex else float
    res = lanczos(lambda v: s * kinv(s * v), 1, cfg, which="highest", dim=grid.size, dtype=dtype)
    return float(res.values[-1])


def hardy_constant(grid: GridSpec, cfg: Optional[SolverCfg] = None) -> float:
    """Smallest discrete Rayleigh quotient ``int |grad psi|^2 / int |psi|^2/|x|^2``.

    The continuum value is ``((d-2)/2)^2``.  Raises :class:`NotApplicable`
    for ``d < 3`` where the constant degenerates.
    """
    if grid.d < 3:
        raise NotApplicable(f"Hardy constant ((d-2)/2)^2 degenerates for d = {grid.d}")
    if grid.geometry != FULL:
        raise InvalidSpec("the Hardy constant is computed on full-box grids")
    return 1.0 / smallness_constant(grid.radius ** -2, grid, "plain", cfg)


# -- pointwise conditions ----------------------------------------------------------

@dataclass(frozen=True)
class PointwiseResult:
    ok: bool
    max_violation: float

    def __bool__(self):
        return self.ok


def check_pointwise(grid: GridSpec, values, pattern: str, tol: float = 1e-10) -> PointwiseResult:
    """Check a pointwise sign condition at every node.

    ``pattern`` is one of

    * ``"repulsive"``: ``x . grad V <= 0`` (``values`` a PotentialSpec or real node values);
    * ``"repulsive_part_hardy"``: ``(x . grad V)_+ <= 2 ((d-2)/2)^2 / |x|^2``, a pointwise
      sufficient condition for the integral repulsivity condition through the
      Hardy inequality (d >= 3);
    * ``"robin"``: ``alpha >= 0`` and ``x' . grad' alpha <= 0`` on the face
      ``x_d = 0`` (``values`` holds the face values of ``alpha``, ``x'`` the
      lateral variables).

    The tolerance is relative to the largest magnitude involved.
    """
    if pattern in ("repulsive", "repulsive_part_hardy"):
        if isinstance(values, PotentialSpec):
            xg = values.x_grad_real(grid)
        else:
            xg = x_dot_grad(grid, np.asarray(values, dtype=float))
        if pattern == "repulsive":
            excess = xg
        else:
            if grid.d < 3:
                raise NotApplicable(CRITICALITY)
            bound = 2.0 * ((grid.d - 2) / 2.0) ** 2 / grid.radius ** 2
            excess = np.maximum(xg, 0.0) - bound
            xg = np.concatenate([xg, bound])
        scale = max(float(np.max(np.abs(xg))), 1.0)
        worst = float(np.max(excess))
        return PointwiseResult(worst <= tol * scale, max(worst, 0.0))
    if pattern == "robin":
        alpha = np.asarray(values)
        if np.iscomplexobj(alpha):
            if np.any(alpha.imag != 0):
                raise InvalidSpec("the Robin repulsivity condition is stated for real alpha")
            alpha = alpha.real
        face = face_coords(grid)
        if alpha.shape != (len(face),):
            raise InvalidSpec(f"alpha needs {len(face)} face values, got {alpha.shape}")
        xga = np.zeros_like(alpha, dtype=float)
        if grid.d > 1:
            lateral = alpha.reshape((grid.n,) * (grid.d - 1))
            for j in range(grid.d - 1):
                xga += face[:, j] * np.gradient(lateral, grid.h, axis=j, edge_order=2).ravel()
        scale = max(float(np.max(np.abs(alpha))), float(np.max(np.abs(xga))), 1.0)
        worst = max(float(np.max(-alpha)), float(np.max(xga)))
        return PointwiseResult(worst <= tol * scale, max(worst, 0.0))
    raise InvalidSpec(f"unknown pointwise pattern {pattern!r}")


# -- certification -----------------------------------------------------------------

@dataclass(frozen=True)
class Problem:
    """Operator class plus fields: ``kind`` is schrodinger, dirac or robin."""

    grid: GridSpec
    potential: Optional[PotentialSpec] = None
    magnetic: Optional[MagneticSpec] = None
    boundary: Optional[BoundarySpec] = None
    kind: str = "schrodinger"
    assumed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("schrodinger", "dirac", "robin"):
            raise InvalidSpec(f"unknown operator kind {self.kind!r}")
        if self.kind == "robin" and (self.boundary is None or self.boundary.kind != "robin"):
            raise InvalidSpec("a Robin problem needs a Robin boundary spec")


def _na(cond, d, reason, flags):
    return Certificate(cond, {}, cond.threshold(d), CertVerdict.NOT_APPLICABLE,
                       [TRUNCATION_CAVEAT, reason], flags)


def _decide(cond, d, constants, main, margin, caveats, flags, extra_ok=True):
    thr = cond.threshold(d)
    ok = main <= (1.0 - margin) * thr and extra_ok
    if not ok and main < thr and extra_ok:
        caveats = caveats + [f"constant below threshold but within the {margin:.0%} margin"]
    verdict = CertVerdict.CERTIFIED_ABSENCE if ok else CertVerdict.NOT_CERTIFIED
    return Certificate(cond, constants, thr, verdict, [TRUNCATION_CAVEAT] + caveats, flags)


def _certify_one(problem: Problem, cond: ConditionId, margin: float, cfg) -> Certificate:
    g = problem.grid
    d = g.d
    V = problem.potential
    A = problem.magnetic
    reg = REGULARITY.get(cond)
    flags = {reg: bool(problem.assumed.get(reg, False))} if reg else {}
    caveats = [f"regularity '{reg}' is assumed, not verified"] if reg else []

    electric = cond in (ConditionId.REPULSIVE, ConditionId.REPULSIVE_INT,
                        ConditionId.SMALL_ELECTRIC, ConditionId.SUBORDINATE,
                        ConditionId.SMALL_IMAGINARY)
    if electric:
        if problem.kind != "schrodinger" or A is not None:
            return _na(cond, d, "condition concerns H_{0,V} without magnetic field", flags)
        if V is None:
            V = PotentialSpec()
        if g.geometry != FULL:
            return _na(cond, d, "condition is stated on the whole space", flags)
    if cond in (ConditionId.REPULSIVE, ConditionId.REPULSIVE_INT, ConditionId.SMALL_ELECTRIC):
        if not V.is_real(g):
            return _na(cond, d, "condition concerns real (self-adjoint) potentials", flags)

    if cond == ConditionId.REPULSIVE:
        pw = check_pointwise(g, V, "repulsive")
        return _decide(cond, d, {"max_x_grad_V": float(np.max(V.x_grad_real(g)))},
                       0.0, 0.0, caveats + ["pointwise condition checked at nodes only"], flags,
                       extra_ok=pw.ok)
    if cond == ConditionId.REPULSIVE_INT:
        w = np.maximum(V.x_grad_real(g), 0.0)
        if d < 3 and np.any(w > 0):
            return _na(cond, d, CRITICALITY, flags)
        b = smallness_constant(w, g, "plain", cfg)
        return _decide(cond, d, {"b": b}, b, margin, caveats, flags)
    if cond == ConditionId.SMALL_ELECTRIC:
        Vn = V.sample(g)
        if d < 3 and np.any(Vn != 0):
            return _na(cond, d, CRITICALITY, flags)
        b1 = smallness_constant(np.abs(Vn), g, "plain", cfg)
        b2 = smallness_constant(g.radius ** 2 * np.abs(Vn) ** 2, g, "plain", cfg)
        b = max(b1, np.sqrt(b2))
        return _decide(cond, d, {"b1": b1, "b2": b2, "b": b}, b, margin, caveats, flags)
    if cond == ConditionId.SUBORDINATE:
        w = np.abs(V.real_part(g)) + np.abs(V.imag_part(g))
        if d < 3 and np.any(w > 0):
            return _na(cond, d, CRITICALITY, flags)
        b = smallness_constant(w, g, "plain", cfg)
        return _decide(cond, d, {"b": b}, b, margin, caveats, flags)
    if cond == ConditionId.SMALL_IMAGINARY:
        if d < 3:
            return _na(cond, d, "condition requires d >= 3", flags)
        if np.any(V.real_part(g) != 0):
            return _na(cond, d, "condition requires Re V = 0", flags)
        b2 = smallness_constant(g.radius ** 2 * V.imag_part(g) ** 2, g, "plain", cfg)
        b = float(np.sqrt(b2))
        sub = _certify_one(problem, ConditionId.SUBORDINATE, margin, cfg)
        sub_ok = sub.verdict == CertVerdict.CERTIFIED_ABSENCE
        cav = caveats + ([] if sub_ok else ["SUBORDINATE does not pass; both are required"])
        return _decide(cond, d, {"b": b, "subordinate_b": sub.constants.get("b", np.nan)},
                       b, margin, cav, flags, extra_ok=sub_ok)
    if cond in (ConditionId.SMALL_MAGNETIC, ConditionId.DIRAC_MAGNETIC):
        if A is None:
            return _na(cond, d, "condition needs a magnetic field", flags)
        if cond == ConditionId.DIRAC_MAGNETIC and d != 3:
            return _na(cond, d, "the Dirac result is stated for d = 3", flags)
        if cond == ConditionId.SMALL_MAGNETIC and problem.kind != "schrodinger":
            return _na(cond, d, "condition concerns H_{A,0}", flags)
        if d < 2:
            return _na(cond, d, "no magnetic field in d = 1", flags)
        if V is not None and np.any(V.sample(g) != 0):
            return _na(cond, d, "condition concerns purely magnetic operators", flags)
        w = g.radius ** 2 * A.strength(g) ** 2
        b2 = smallness_constant(w, g, A, cfg)
        b = float(np.sqrt(b2))
        return _decide(cond, d, {"b": b}, b, margin, caveats, flags)
    if cond == ConditionId.ROBIN_REPULSIVE:
        bc = problem.boundary
        if g.geometry != HALF or bc is None or bc.kind != "robin":
            return _na(cond, d, "condition concerns the Robin Laplacian on a half-box", flags)
        if V is not None or A is not None:
            return _na(cond, d, "condition concerns the bare Robin Laplacian", flags)
        alpha = bc.face_alpha(g)
        if np.any(alpha.imag != 0):
            return _na(cond, d, "condition is stated for real alpha", flags)
        pw = check_pointwise(g, alpha.real, "robin")
        return _decide(cond, d, {"min_alpha": float(np.min(alpha.real)),
                                 "max_violation": pw.max_violation},
                       0.0, 0.0, caveats + ["pointwise condition checked at face nodes only",
                                            "x . grad alpha uses the lateral face variables"],
                       flags, extra_ok=pw.ok)
    raise InvalidSpec(f"unknown condition {cond!r}")


def certify(problem: Problem, conditions: Sequence, margin: float = 0.05,
            cfg: Optional[SolverCfg] = None, workers: int = 1) -> list:
    """One :class:`Certificate` per requested condition, in request order."""
    conds = []
    for c in conditions:
        try:
            conds.append(ConditionId(c))
        except ValueError:
            raise InvalidSpec(f"unknown condition {c!r}; valid: "
                              f"{', '.join(x.value for x in ConditionId)}") from None
    if workers <= 1 or len(conds) < 2:
        return [_certify_one(problem, c, margin, cfg) for c in conds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: _certify_one(problem, c, margin, cfg), conds))


@dataclass(frozen=True)
class ConeCheck:
    all_inside: bool
    n_samples: int
    n_outside: int
    worst_ratio: float

    def __bool__(self):
        return self.all_inside


def numerical_range_cone(V: PotentialSpec, grid: GridSpec, n_samples: int = 1000,
                         seed: int = 0, samples: Optional[Sequence[Field]] = None) -> ConeCheck:
    """Spot-check ``|Im (psi, H psi)| <= Re (psi, H psi)`` on sample fields.

    Without explicit ``samples`` the fields are random modulated Gaussians
    (random centre, width and wave vector) drawn from a seeded generator.
    Sampling is one-sided: an escape disproves the cone property for the
    discrete operator, staying inside proves nothing.
    """
    H = schrodinger(grid, potential=V).matrix
    if samples is None:
        rng = np.random.default_rng(seed)
        x = grid.coords
        batch = []
        for _ in range(n_samples):
            c = rng.uniform(-0.5, 0.5, grid.d) * grid.L
            w = rng.uniform(2 * grid.h, 0.4 * grid.L)
            k = rng.normal(0.0, 1.0, grid.d)
            batch.append(np.exp(-np.sum((x - c) ** 2, axis=1) / (2 * w ** 2) + 1j * x @ k))
        vecs = batch
    else:
        vecs = [s.values for s in samples]
    worst = 0.0
    outside = 0
    for v in vecs:
        q = np.vdot(v, H @ v)
        ratio = abs(q.imag) / q.real if q.real > 0 else np.inf
        worst = max(worst, ratio)
        outside += ratio > 1.0
    return ConeCheck(outside == 0, len(vecs), int(outside), float(worst))
