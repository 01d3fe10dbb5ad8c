"""Multiplier and virial identities evaluated on candidate eigenpairs.

Every identity is reported as a dictionary of named terms together with
``lhs`` and ``rhs``; the residual is ``|lhs - rhs|`` and the normalizer the
largest term magnitude, so relative residuals are scale free.

Discrete calculus used throughout:

* ``||grad psi||^2`` is the edge-gradient sum, which equals ``(psi, -Delta psi)``
  for the assembled stencil, so the Rayleigh-type identities are consistent
  with the operator to round-off.
* Weighted kinetic terms put the edge-averaged weight on the faces where
  the edge gradient lives, and the term ``-(d-1)/2 int |psi|^2/|x|`` is the
  discrete divergence form ``sum_faces G|x| Re(conj(avg psi) G psi)``.  With
  these choices the product rule ``G(w psi) = avg(w) G psi + G(w) avg(psi)``
  turns the weighted identity into an exact consequence of the eigen
  equation away from the walls.  In d = 1 the same sum carries the point
  term ``-|psi(0)|^2`` produced by the kink of ``|x|``.  The direction
  field ``x/|x|`` likewise enters as the edge gradient of ``|x|``.
* Node-valued derivatives (``x . grad psi``, ``grad_A psi``) use the central
  difference behind the momentum operator.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConeViolation, InvalidSpec
from .lattice import Field, GridSpec, bump_profile, cutoff
from .operators import (MagneticSpec, PotentialSpec, central_difference, edge_average,
                        edge_gradient, schrodinger)
from .sparsekit import SparseOperator


class IdentityId(str, enum.Enum):
    VIRIAL_ELECTRIC = "VIRIAL_ELECTRIC"
    MAGNETIC_VIRIAL = "MAGNETIC_VIRIAL"
    ID_432 = "ID_432"
    ID_433 = "ID_433"
    ID_435 = "ID_435"
    ID_436 = "ID_436"
    ULTIMATE = "ULTIMATE"


class Verdict(str, enum.Enum):
    CONTRADICTION = "CONTRADICTION"
    INCONCLUSIVE = "INCONCLUSIVE"
    NOT_APPLICABLE = "NOT_APPLICABLE"


@dataclass(frozen=True)
class EigenCandidate:
    """A normalized field claimed to satisfy ``H psi = lam psi``."""

    psi: Field
    lam: complex
    source: str = "solver"
    residual: float = float("nan")

    def __post_init__(self):
        if abs(self.psi.norm() - 1.0) > 1e-10:
            raise InvalidSpec(f"candidate must be normalized, ||psi|| = {self.psi.norm():.3e}")
        if self.source not in ("solver", "analytic", "user"):
            raise InvalidSpec(f"unknown candidate source {self.source!r}")
        object.__setattr__(self, "lam", complex(self.lam))

    @classmethod
    def from_pair(cls, psi: Field, lam: complex, H: Optional[SparseOperator] = None,
                  source: str = "solver") -> "EigenCandidate":
        """Normalize ``psi`` and, given ``H``, record ``||H psi - lam psi||``."""
        psi = psi.normalized()
        res = float("nan")
        if H is not None:
            r = H.matrix @ psi.values - lam * psi.values
            res = float(np.sqrt(np.vdot(r, r).real * psi.grid.cell_volume))
        return cls(psi, lam, source, res)

    @property
    def lam1(self) -> float:
        return self.lam.real

    @property
    def lam2(self) -> float:
        return self.lam.imag


@dataclass
class IdentityReport:
    identity: IdentityId
    terms: dict
    lhs: complex
    rhs: complex
    meta: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return float(abs(self.lhs - self.rhs))

    @property
    def normalizer(self) -> float:
        return float(max(abs(v) for v in self.terms.values())) if self.terms else 0.0

    @property
    def relative_residual(self) -> float:
        return self.residual / max(self.normalizer, 1e-30)

    def to_dict(self) -> dict:
        def num(v):
            v = complex(v)
            return v.real if v.imag == 0 else {"re": v.real, "im": v.imag}
        return {
            "identity": self.identity.value,
            "terms": {k: num(v) for k, v in self.terms.items()},
            "lhs": num(self.lhs),
            "rhs": num(self.rhs),
            "residual": self.residual,
            "normalizer": self.normalizer,
            "relative_residual": self.relative_residual,
            "meta": {k: (float(v) if isinstance(v, (np.floating, float)) else v)
                     for k, v in self.meta.items()},
        }


# -- discrete building blocks -------------------------------------------------

def _integral(grid: GridSpec, values) -> complex:
    return complex(np.sum(values) * grid.cell_volume)


def _edges(grid: GridSpec, u: np.ndarray):
    """Per axis: (edge gradient, edge average)."""
    return [(edge_gradient(grid, j) @ u, edge_average(grid, j) @ u) for j in range(grid.d)]


def _kinetic(grid: GridSpec, u: np.ndarray, weight: Optional[np.ndarray] = None) -> float:
    """``sum_j sum_faces avg(w) |G_j u|^2 h^d`` for node weights ``w``."""
    total = 0.0
    for j, (g, _) in enumerate(_edges(grid, u)):
        w = 1.0 if weight is None else edge_average(grid, j) @ weight
        total += float(np.sum(w * np.abs(g) ** 2))
    return total * grid.cell_volume


def _divergence_term(grid: GridSpec, u: np.ndarray, weight: np.ndarray) -> float:
    """``sum_faces G(w) Re(conj(avg u) G u) h^d``, i.e. ``-(1/2) int Delta w |u|^2``."""
    total = 0.0
    for j, (g, avg) in enumerate(_edges(grid, u)):
        gw = edge_gradient(grid, j) @ weight
        total += float(np.sum(gw * np.real(np.conj(avg) * g)))
    return total * grid.cell_volume


def _radial_flux(grid: GridSpec, u: np.ndarray) -> float:
    """``Im sum_faces G(|x|) conj(avg u) G u h^d``, the discrete ``Im int (x/|x|) . conj(u) grad u``."""
    total = 0.0
    r = grid.radius
    for j, (g, avg) in enumerate(_edges(grid, u)):
        total += float(np.sum((edge_gradient(grid, j) @ r) * np.imag(np.conj(avg) * g)))
    return total * grid.cell_volume


def _central_grad(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    return np.stack([central_difference(grid, j) @ u for j in range(grid.d)])


def _report(identity, terms, lhs, rhs, **meta):
    return IdentityReport(identity, {k: complex(v) if np.iscomplexobj(v) else float(v)
                                     for k, v in terms.items()}, lhs, rhs, dict(meta))


# -- identities ----------------------------------------------------------------

def virial_electric(V: PotentialSpec, cand: EigenCandidate) -> IdentityReport:
    """``2 ||grad psi||^2 - int x . grad V |psi|^2 = 0`` for eigenfunctions of ``H_{0,V}``.

    Parameters
    ----------
    V : PotentialSpec
        Real potential; ``x . grad V`` comes from central differences (see
        :meth:`PotentialSpec.x_grad_real`).
    cand : EigenCandidate
        The eigenpair under test.

    Returns
    -------
    IdentityReport
        ``lhs`` is the expectation of the commutator ``i[H, T_0]``; the
        ``positivity_ok`` flag in ``meta`` records whether ``x . grad V <= 0``
        at every node.
    """
    grid = cand.psi.grid
    if not V.is_real(grid):
        raise InvalidSpec("virial_electric needs a real potential; use nsa_identities")
    u = cand.psi.values
    kin = _kinetic(grid, u)
    xgv = V.x_grad_real(grid)
    xgv_term = _integral(grid, xgv * np.abs(u) ** 2).real
    lhs = 2 * kin - xgv_term
    return _report(IdentityId.VIRIAL_ELECTRIC,
                   {"kinetic": kin, "two_kinetic": 2 * kin, "x_grad_V": xgv_term},
                   lhs, 0.0, commutator=lhs, positivity_ok=bool(np.max(xgv) <= 0.0),
                   eigen_residual=cand.residual)


# The tensor B[j, k] = d_j A_k - d_k A_j with (x.B)_k = sum_j x_j B[j, k] and the
# gradient convention grad_A = grad - iA give the magnetic term with a plus sign
# when it is written as Im int (x.B) . conj(psi) grad_A psi; that is the form
# evaluated below (it equals minus the conjugate-order expression).
def magnetic_virial(A: Optional[MagneticSpec], cand: EigenCandidate,
                    confinement: Optional[PotentialSpec] = None) -> IdentityReport:
    """Magnetic virial identity for eigenfunctions of ``H_{A,0} + W``.

    ``2 ||grad_A psi||^2 - 2 Im int (x.B) . psi conj(grad_A psi) - int x . grad W |psi|^2 = 0``.
    The confining ``W`` is needed because ``H_{A,0}`` alone has no discrete
    eigenvalues; its contribution enters exactly as in the electric case.
    """
    grid = cand.psi.grid
    u = cand.psi.values
    if A is None:
        # B = 0: the identity is the electric one with V = W
        kin = _kinetic(grid, u)
        mag = 0.0
    else:
        if grid.d < 2:
            raise InvalidSpec("magnetic fields need d >= 2")
        Avals = A.sample(grid)
        H = schrodinger(grid, magnetic=A)
        kin = float(np.real(np.vdot(u, H.matrix @ u)) * grid.cell_volume)
        gradA = _central_grad(grid, u) - 1j * Avals * u
        B = A.tensor(grid)
        xB = np.einsum("jn,jkn->kn", grid.coords.T, B)
        mag = _integral(grid, np.sum(xB * u * np.conj(gradA), axis=0)).imag
    xgw = 0.0
    positivity = True
    if confinement is not None:
        xg = confinement.x_grad_real(grid)
        xgw = _integral(grid, xg * np.abs(u) ** 2).real
        positivity = bool(np.max(xg) <= 0.0)
    lhs = 2 * kin - 2 * mag - xgw
    return _report(IdentityId.MAGNETIC_VIRIAL,
                   {"kinetic_A": kin, "two_kinetic_A": 2 * kin, "magnetic_term": 2 * mag,
                    "x_grad_W": xgw},
                   lhs, 0.0, commutator=lhs, positivity_ok=positivity,
                   eigen_residual=cand.residual)


@dataclass(frozen=True)
class _Terms:
    """The scalar building blocks shared by the non-self-adjoint identities."""

    N: float      # ||psi||^2
    G: float      # ||grad psi||^2
    Gx: float     # int |x| |grad psi|^2
    inv: float    # -(d-1)/2 int |psi|^2 / |x|, discrete divergence form
    Nx: float     # int |x| |psi|^2
    S: float      # Im int (x/|x|) . conj(psi) grad psi
    Sx: float     # Im int conj(psi) x . grad psi
    P1: float     # int V1 |psi|^2
    P1x: float    # int |x| V1 |psi|^2
    P2x: float    # int |x| V2 |psi|^2
    X: float      # int x . grad V1 |psi|^2
    I2: float     # Im (x . grad psi, V2 psi)


def _nsa_terms(V: PotentialSpec, psi: Field) -> _Terms:
    grid = psi.grid
    u = psi.values
    r = grid.radius
    rho = np.abs(u) ** 2
    V1, V2 = V.real_part(grid), V.imag_part(grid)
    xgrad_u = np.sum(grid.coords.T * _central_grad(grid, u), axis=0)
    return _Terms(
        N=_integral(grid, rho).real,
        G=_kinetic(grid, u),
        Gx=_kinetic(grid, u, weight=r),
        inv=_divergence_term(grid, u, r),
        Nx=_integral(grid, r * rho).real,
        S=_radial_flux(grid, u),
        Sx=_integral(grid, np.conj(u) * xgrad_u).imag,
        P1=_integral(grid, V1 * rho).real,
        P1x=_integral(grid, r * V1 * rho).real,
        P2x=_integral(grid, r * V2 * rho).real,
        X=_integral(grid, V.x_grad_real(grid) * rho).real,
        I2=_integral(grid, np.conj(xgrad_u) * V2 * u).imag,
    )


def nsa_identities(V: PotentialSpec, cand: EigenCandidate) -> dict:
    """The four multiplier identities for ``H_{0,V} psi = lam psi`` with complex ``V``.

    Returns a mapping ``IdentityId -> IdentityReport`` for the multipliers
    ``psi`` (ID_432), ``|x| psi`` real and imaginary parts (ID_433, ID_435) and
    ``i T_0 psi`` (ID_436).
    """
    t = _nsa_terms(V, cand.psi)
    l1, l2 = cand.lam1, cand.lam2
    out = {}
    out[IdentityId.ID_432] = _report(
        IdentityId.ID_432, {"kinetic": t.G, "V1_term": t.P1, "lam1_norm": l1 * t.N},
        t.G + t.P1, l1 * t.N)
    out[IdentityId.ID_433] = _report(
        IdentityId.ID_433, {"weighted_kinetic": t.Gx, "inverse_term": t.inv,
                            "weighted_V1": t.P1x, "lam1_weighted_norm": l1 * t.Nx},
        t.Gx + t.inv + t.P1x, l1 * t.Nx)
    out[IdentityId.ID_435] = _report(
        IdentityId.ID_435, {"radial_flux": t.S, "weighted_V2": t.P2x,
                            "lam2_weighted_norm": l2 * t.Nx},
        t.S + t.P2x, l2 * t.Nx)
    out[IdentityId.ID_436] = _report(
        IdentityId.ID_436, {"two_kinetic": 2 * t.G, "x_grad_V1": -t.X, "V2_term": -2 * t.I2,
                            "lam2_term": 2 * l2 * t.Sx},
        2 * t.G - t.X - 2 * t.I2, 2 * l2 * t.Sx)
    return out


def psi_minus(psi: Field, lam: complex) -> Field:
    """``exp(-i sqrt(lam1) sgn(lam2) |x|) psi`` with ``sgn(0) = +1``."""
    beta = _beta(complex(lam))
    return psi.with_values(np.exp(-1j * beta * psi.grid.radius) * psi.values)


def _beta(lam: complex) -> float:
    return float(np.sqrt(lam.real) * (1.0 if lam.imag >= 0 else -1.0))


def ultimate_identity(V: PotentialSpec, cand: EigenCandidate) -> IdentityReport:
    """The combined identity obtained from the clever sum, evaluated on ``psi^-``.

    The terms are computed directly from ``psi^-``.  ``meta`` additionally
    carries the bookkeeping check: the expanded form of the left-hand side,
    written in terms of ``psi``, against the combination
    ``D436 - D432 + c D433 - 2 beta D435`` of the four individual
    defects (``c = |lam2| / sqrt(lam1)``, ``beta = sqrt(lam1) sgn(lam2)``).
    The two agree to round-off for any field.
    """
    lam = cand.lam
    if not lam.real > 0:
        raise ConeViolation(f"ultimate identity needs Re lam > 0, got {lam}")
    grid = cand.psi.grid
    d = grid.d
    l1, l2 = lam.real, lam.imag
    c = abs(l2) / np.sqrt(l1)
    beta = _beta(lam)
    pm = psi_minus(cand.psi, lam).values
    u = cand.psi.values
    rho = np.abs(u) ** 2
    r = grid.radius
    Vn = V.sample(grid)
    V1 = Vn.real
    grad_pm = _central_grad(grid, pm)
    cross = 2 * _integral(grid, Vn * np.sum(grid.coords.T * pm * np.conj(grad_pm), axis=0)).real
    kin_m = _kinetic(grid, pm)
    wkin_m = _kinetic(grid, pm, weight=r)
    inv = _divergence_term(grid, u, r)
    P1 = _integral(grid, V1 * rho).real
    P1x = _integral(grid, r * V1 * rho).real
    terms = {
        "kinetic_minus": kin_m,
        "weighted_kinetic_minus": c * wkin_m,
        "inverse_term": c * inv,
        "V1_term": (d - 1) * P1,
        "weighted_V1": c * P1x,
        "cross_term": cross,
    }
    lhs = sum(terms.values())

    t = _nsa_terms(V, cand.psi)
    expanded = (t.G + l1 * t.N - 2 * beta * t.S
                + c * (t.Gx + l1 * t.Nx - 2 * beta * t.Sx)
                + c * t.inv
                - t.P1 + c * t.P1x - t.X - 2 * t.I2 - 2 * beta * t.P2x)
    ids = nsa_identities(V, cand)
    defect = {k: rep.lhs - rep.rhs for k, rep in ids.items()}
    combo = (defect[IdentityId.ID_436] - defect[IdentityId.ID_432]
             + c * defect[IdentityId.ID_433] - 2 * beta * defect[IdentityId.ID_435])
    scale = max(abs(v) for v in (t.G, l1 * t.N, 2 * beta * t.S, c * t.Gx, c * l1 * t.Nx,
                                 2 * c * beta * t.Sx, c * t.inv, t.P1,
                                 c * t.P1x, t.X, 2 * t.I2, 2 * beta * t.P2x))
    return _report(IdentityId.ULTIMATE, terms, lhs, 0.0,
                   expanded=float(np.real(expanded)), combination=float(np.real(combo)),
                   bookkeeping_residual=float(abs(expanded - combo)),
                   bookkeeping_normalizer=float(scale), c=float(c), beta=beta,
                   eigen_residual=cand.residual)


@dataclass
class SweepResult:
    """Regularized multiplier values ``2 Re(phi_n, .)`` for each cutoff scale.

    ``multiplier_values`` pair ``phi_n`` with ``H psi`` and tend to the
    commutator expectation; ``eigen_terms`` pair it with ``lam psi``;
    ``identity_values`` is their difference ``2 Re(phi_n, (H - lam) psi)``,
    which is small for a good eigenpair at every scale.
    """

    scales: list
    multiplier_values: np.ndarray
    eigen_terms: np.ndarray
    identity_values: np.ndarray

    def is_cauchy(self, tol: float) -> bool:
        v = self.multiplier_values
        return bool(len(v) < 2 or abs(v[-1] - v[-2]) <= tol)


def regularized_multiplier_sweep(cand: EigenCandidate, scales: Sequence[float],
                                 H: SparseOperator, profile=bump_profile) -> SweepResult:
    """Pair the eigen-equation with ``phi_n = x . grad(xi_n psi) + (d/2) psi``."""
    grid = cand.psi.grid
    if grid.geometry != "full":
        raise InvalidSpec("the regularized multiplier sweep needs a full-box grid")
    u = cand.psi.values
    Hu = H.matrix @ u
    mult, eig = [], []
    for s in scales:
        xi = cutoff(grid, s, profile).values.real
        phi = np.sum(grid.coords.T * _central_grad(grid, xi * u), axis=0) + 0.5 * grid.d * u
        mult.append(2 * _integral(grid, np.conj(phi) * Hu).real)
        eig.append(2 * _integral(grid, np.conj(phi) * cand.lam * u).real)
    mult, eig = np.array(mult), np.array(eig)
    return SweepResult(list(scales), mult, eig, mult - eig)


def refute_point_spectrum(report: IdentityReport, positivity: float,
                          tol: float = 1e-6) -> Verdict:
    """Decide whether the identity in ``report`` contradicts a positive commutator.

    Parameters
    ----------
    report : IdentityReport
        A virial-type report (electric or magnetic) carrying the commutator
        expectation in ``meta["commutator"]``.
    positivity : float
        The constant ``a`` of the positivity hypothesis
        ``(psi, i[H, T] psi) >= a ||psi||^2``.
    tol : float
        Largest commutator value still compatible with the identity (which
        forces it to vanish for a true eigenpair).

    Returns
    -------
    Verdict
        ``INCONCLUSIVE`` for ``a <= 0``; ``NOT_APPLICABLE`` when the report
        says the positivity hypothesis fails; ``CONTRADICTION`` when the
        commutator is at least ``a > tol``, i.e. the candidate cannot be an
        eigenpair.
    """
    if positivity <= 0:
        return Verdict.INCONCLUSIVE
    if "commutator" not in report.meta:
        raise InvalidSpec(f"{report.identity.value} does not carry a commutator value")
    if not report.meta.get("positivity_ok", False):
        return Verdict.NOT_APPLICABLE
    value = float(np.real(report.meta["commutator"]))
    if positivity > tol and value >= positivity * (1 - 1e-12):
        return Verdict.CONTRADICTION
    return Verdict.INCONCLUSIVE
