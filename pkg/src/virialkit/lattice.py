"""Cell-centered grids on truncated boxes and lattice functions living on them.

Full boxes cover ``(-L, L)^d``; half boxes cover ``(-L, L)^(d-1) x (0, 2L)``
with the Robin face at ``x_d = 0``.  Nodes sit at cell centers, so the origin
is never a node and weights such as ``1/|x|`` stay finite.

Node ordering is lexicographic with the last axis varying fastest.  Spinor
fields store their components in consecutive blocks of ``n**d`` values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InvalidSpec, ShapeError

FULL = "full"
HALF = "half"


@dataclass(frozen=True)
class GridSpec:
    d: int
    L: float
    n: int
    geometry: str = FULL

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise InvalidSpec(f"d must be 1, 2 or 3, got {self.d}")
        if not self.L > 0:
            raise InvalidSpec(f"L must be positive, got {self.L}")
        if int(self.n) != self.n or self.n < 4:
            raise InvalidSpec(f"n must be an integer >= 4, got {self.n}")
        if self.geometry not in (FULL, HALF):
            raise InvalidSpec(f"geometry must be 'full' or 'half', got {self.geometry!r}")
        if self.geometry == FULL and self.n % 2:
            # an odd count would put a cell center on the origin
            raise InvalidSpec(f"full-box grids need an even n, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    def axis(self, j: int) -> np.ndarray:
        """Node coordinates along axis ``j``."""
        if not 0 <= j < self.d:
            raise InvalidSpec(f"axis {j} out of range for d={self.d}")
        k = np.arange(self.n) + 0.5
        if self.geometry == HALF and j == self.d - 1:
            return k * self.h
        return -self.L + k * self.h

    def edges(self, j: int) -> np.ndarray:
        """Coordinates of the ``n + 1`` cell faces along axis ``j``."""
        lo = 0.0 if (self.geometry == HALF and j == self.d - 1) else -self.L
        return lo + np.arange(self.n + 1) * self.h

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinate table of shape ``(n**d, d)``."""
        mesh = np.meshgrid(*[self.axis(j) for j in range(self.d)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(self.coords ** 2, axis=1))


def make_grid(spec: GridSpec) -> np.ndarray:
    """Return the node coordinate table of ``spec`` (one row per node)."""
    return spec.coords


@dataclass(frozen=True, eq=False)
class Field:
    """Complex lattice function, optionally spinor valued."""

    grid: GridSpec
    values: np.ndarray
    spinor_dim: int = 1

    def __post_init__(self):
        if self.spinor_dim not in (1, 2, 4):
            raise InvalidSpec(f"spinor_dim must be 1, 2 or 4, got {self.spinor_dim}")
        vals = np.asarray(self.values, dtype=complex).ravel()
        if vals.size != self.grid.size * self.spinor_dim:
            raise ShapeError(
                f"expected {self.grid.size * self.spinor_dim} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise InvalidSpec("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable, spinor_dim: int = 1) -> "Field":
        """Sample ``fn(coords)``; spinor fields expect shape ``(spinor_dim, N)``."""
        return cls(grid, np.asarray(fn(grid.coords)), spinor_dim)

    def components(self) -> np.ndarray:
        return self.values.reshape(self.spinor_dim, self.grid.size)

    def norm(self) -> float:
        return float(np.sqrt(inner(self, self).real))

    def normalized(self) -> "Field":
        nrm = self.norm()
        if nrm == 0:
            raise InvalidSpec("cannot normalize the zero field")
        return self.with_values(self.values / nrm)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values, self.spinor_dim)

    def __mul__(self, other):
        if isinstance(other, Field):
            _check_same(self, other)
            return self.with_values(self.values * other.values)
        return self.with_values(self.values * other)

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        _check_same(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same(self, other)
        return self.with_values(self.values - other.values)


def _check_same(f: Field, g: Field):
    if f.grid != g.grid or f.spinor_dim != g.spinor_dim:
        raise ShapeError("fields live on different grids or spinor spaces")


def inner(f: Field, g: Field) -> complex:
    """Discrete L2 inner product, conjugate-linear in ``f``."""
    _check_same(f, g)
    return complex(np.vdot(f.values, g.values) * f.grid.cell_volume)


WeightKind = Union[str, tuple, Callable]


def weight_field(grid: GridSpec, kind: WeightKind) -> Field:
    """Evaluate a coordinate weight at the nodes.

    ``kind`` is one of ``"abs"`` (|x|), ``"inv_abs"`` (1/|x|), ``"abs2"``
    (|x|^2), ``("coord", j)`` (x_j) or a callable taking the coordinate table.
    """
    r = grid.radius
    if callable(kind):
        vals = np.asarray(kind(grid.coords), dtype=complex)
    elif kind == "abs":
        vals = r
    elif kind == "inv_abs":
        vals = 1.0 / r
    elif kind == "abs2":
        vals = r ** 2
    elif isinstance(kind, tuple) and len(kind) == 2 and kind[0] == "coord":
        vals = grid.coords[:, int(kind[1])]
    else:
        raise InvalidSpec(f"unknown weight kind {kind!r}")
    return Field(grid, vals)


def bump_profile(r: np.ndarray) -> np.ndarray:
    """C^1 radial bump: 1 on [0, 1], cubic smoothstep to 0 on [1, 2]."""
    s = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


def cutoff(grid: GridSpec, scale: float, profile: Callable = bump_profile) -> Field:
    """The rescaled cutoff ``xi(x / scale)`` sampled at the nodes."""
    if not scale > 0:
        raise InvalidSpec(f"cutoff scale must be positive, got {scale}")
    return Field(grid, profile(grid.radius / scale))


@dataclass(frozen=True)
class CutoffFamily:
    scales: Sequence[float]
    profile: Callable = field(default=bump_profile)

    def __post_init__(self):
        s = list(self.scales)
        if any(x <= 0 for x in s) or any(b <= a for a, b in zip(s, s[1:])):
            raise InvalidSpec("cutoff scales must be positive and strictly increasing")

    def fields(self, grid: GridSpec) -> list:
        return [cutoff(grid, s, self.profile) for s in self.scales]
