import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from virialkit.errors import InvalidSpec, ShapeError
from virialkit.lattice import (CutoffFamily, Field, GridSpec, cutoff, inner, make_grid,
                               weight_field)

grids = st.builds(GridSpec, d=st.integers(1, 3), L=st.floats(0.5, 20.0),
                  n=st.integers(2, 6).map(lambda k: 2 * k), geometry=st.sampled_from(["full", "half"]))


def test_nodes_1d():
    g = GridSpec(1, 1.0, 4)
    assert g.h == 0.5
    np.testing.assert_allclose(make_grid(g).ravel(), [-0.75, -0.25, 0.25, 0.75])


def test_min_radius_2d():
    g = GridSpec(2, 1.0, 4)
    assert np.isclose(g.radius.min(), 0.25 * np.sqrt(2))


def test_half_box_nodes():
    g = GridSpec(1, 1.0, 4, "half")
    np.testing.assert_allclose(make_grid(g).ravel(), [0.25, 0.75, 1.25, 1.75])


@pytest.mark.parametrize("kw", [dict(d=0, L=1, n=8), dict(d=4, L=1, n=8), dict(d=1, L=-1, n=8),
                                dict(d=1, L=1, n=3), dict(d=1, L=1, n=8, geometry="quarter")])
def test_bad_grids(kw):
    with pytest.raises(InvalidSpec):
        GridSpec(**kw)


@given(grids)
def test_cell_centering(g):
    assert g.radius.min() >= g.h / 2 - 1e-12
    np.testing.assert_array_equal(make_grid(g), make_grid(GridSpec(g.d, g.L, g.n, g.geometry)))


def test_normalized_gaussian():
    g = GridSpec(2, 6.0, 40)
    f = Field.from_function(g, lambda x: np.exp(-np.sum(x ** 2, axis=1))).normalized()
    assert abs(inner(f, f) - 1) < 1e-12


def test_sine_modes_orthogonal():
    g = GridSpec(1, 2.0, 64)
    x = g.coords[:, 0]
    f = Field(g, np.sin(np.pi * (x + g.L) / (2 * g.L)))
    h = Field(g, np.sin(3 * np.pi * (x + g.L) / (2 * g.L)))
    assert abs(inner(f, h)) < 1e-12


@given(st.integers(0, 2 ** 31))
def test_inner_hermitian(seed):
    r = np.random.default_rng(seed)
    g = GridSpec(2, 1.0, 6)
    f = Field(g, r.normal(size=36) + 1j * r.normal(size=36))
    h = Field(g, r.normal(size=36) + 1j * r.normal(size=36))
    assert np.isclose(inner(f, h), np.conj(inner(h, f)), atol=1e-13)
    assert inner(f, f).real >= 0 and abs(inner(f, f).imag) < 1e-14


def test_inner_mismatch():
    with pytest.raises(ShapeError):
        inner(Field(GridSpec(1, 1, 4), np.ones(4)), Field(GridSpec(1, 1, 8), np.ones(8)))


def test_weights():
    g = GridSpec(3, 1.0, 8)
    assert np.isclose(weight_field(g, "abs").values.real.min(), g.h / 2 * np.sqrt(3))
    np.testing.assert_allclose(weight_field(g, "abs2").values, weight_field(g, "abs").values ** 2)
    g1 = GridSpec(1, 1.0, 8)
    x1 = weight_field(g1, ("coord", 0)).values
    np.testing.assert_allclose(x1, -x1[::-1])
    with pytest.raises(InvalidSpec):
        weight_field(g, "nope")


def test_cutoff_plateau():
    g = GridSpec(2, 3.0, 12)
    assert np.all(cutoff(g, g.L * np.sqrt(2)).values == 1)
    c = cutoff(g, g.L / 4)
    assert c.values[np.argmin(g.radius)] == 1


@given(st.floats(0.1, 5.0), st.floats(0.01, 5.0))
def test_cutoff_monotone(s1, ds):
    g = GridSpec(2, 3.0, 10)
    assert np.all(cutoff(g, s1 + ds).values.real >= cutoff(g, s1).values.real - 1e-15)


def test_cutoff_family_norms():
    g = GridSpec(1, 4.0, 64)
    psi = Field.from_function(g, lambda x: np.exp(-x[:, 0] ** 2)).normalized()
    norms = [(c * psi).norm() for c in CutoffFamily([0.5, 1, 2, 4]).fields(g)]
    assert np.all(np.diff(norms) >= 0) and abs(norms[-1] - 1) < 1e-14
    with pytest.raises(InvalidSpec):
        CutoffFamily([2, 1])


def test_field_checks():
    g = GridSpec(1, 1.0, 4)
    with pytest.raises(ShapeError):
        Field(g, np.ones(5))
    with pytest.raises(InvalidSpec):
        Field(g, [1, np.nan, 0, 0])
    with pytest.raises(InvalidSpec):
        Field(g, np.zeros(4)).normalized()


def test_odd_full_box_rejected():
    with pytest.raises(InvalidSpec):
        GridSpec(1, 1.0, 5)
    assert GridSpec(1, 1.0, 5, "half").radius.min() == pytest.approx(0.2)
