import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from virialkit.dynamics import (ClassicalPotential, ClassicalState, EvolverCfg, Propagation,
                                classical_free, classical_harmonic, classical_virial_residual,
                                dispersion_second_differences, evolve_quantum, expectation,
                                expectation_evolution_residual, integrate_classical,
                                propagation_check, repulsive_root)
from virialkit.errors import InvalidSpec
from virialkit.lattice import Field, GridSpec
from virialkit.operators import dilation_generator, gaussian, harmonic, schrodinger
from virialkit.sparsekit import dense_oracle


def _run(V, x0, p0, dt, T, m=1.0):
    return integrate_classical(ClassicalState(x0, p0, m), V, EvolverCfg(dt, int(round(T / dt))))


def _slope(dts, vals):
    return np.polyfit(np.log(dts), np.log(vals), 1)[0]


def test_free_motion_exact():
    log = _run(classical_free(), [0.0], [1.0], 0.01, 5.0)
    np.testing.assert_allclose(log.x[:, 0], log.t, atol=1e-12)
    np.testing.assert_allclose(log.T0, log.t, atol=1e-12)
    assert classical_virial_residual(log) <= 1e-10
    assert len(log.t) == 501


def test_inverted_oscillator_closed_form():
    errs = []
    for dt in (0.01, 0.005):
        log = _run(classical_harmonic(-1.0), [1.0], [0.0], dt, 1.0)
        errs.append(np.max(np.abs(log.x[:, 0] - np.cosh(np.sqrt(2) * log.t))))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)


@pytest.mark.parametrize("k", [1.0, -1.0])
def test_virial_residual_order(k):
    dts = [0.02, 0.01, 0.005]
    res = [classical_virial_residual(_run(classical_harmonic(k), [1.0, 0.5], [0.2, 0.0], dt, 2.0))
           for dt in dts]
    assert _slope(dts, res) == pytest.approx(2, abs=0.1)


def test_confining_verdicts():
    log = _run(classical_harmonic(1.0), [1.0], [0.0], 0.01, 10.0)
    assert np.max(np.abs(log.x)) <= 1.0 + 1e-6
    assert np.min(log.T0) < 0 < np.max(log.T0)
    assert propagation_check(log, 1.0) == Propagation.HYPOTHESIS_VIOLATED
    assert propagation_check(log, 0.0) == Propagation.INCONCLUSIVE


def test_repulsive_propagates():
    log = _run(classical_harmonic(-1.0), [1.0, 0.0], [0.0, 0.0], 0.001, 3.0)
    assert propagation_check(log, 1.0) == Propagation.PROPAGATES
    assert np.sum(log.x[-1] ** 2) > 100


def test_energy_drift_order():
    drifts = []
    for dt in (0.02, 0.01):
        log = _run(repulsive_root(2.0), [1.0, 0.0], [0.0, 0.3], dt, 5.0)
        drifts.append(np.max(np.abs(log.H - log.H[0])))
    assert drifts[0] / drifts[1] == pytest.approx(4, rel=0.15)


def test_truncated_log():
    V = ClassicalPotential(lambda x: 0.0, lambda x: np.zeros_like(x), radius=1.0)
    log = _run(V, [0.0], [1.0], 0.1, 5.0)
    assert log.truncated and np.all(np.abs(log.x) <= 1.0)


def test_state_and_cfg_validation():
    with pytest.raises(InvalidSpec):
        ClassicalState([0, 0], [1], 1.0)
    with pytest.raises(InvalidSpec):
        ClassicalState([0], [1], 0.0)
    with pytest.raises(InvalidSpec):
        EvolverCfg(0.0, 10)
    with pytest.raises(InvalidSpec):
        EvolverCfg(0.1, 10, "rk4")


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 3.0))
def test_classical_virial_small(x0, p0, k):
    log = _run(classical_harmonic(k), [x0], [p0], 0.005, 1.0)
    assert classical_virial_residual(log) <= 50 * 0.005 ** 2 * (1 + x0 ** 2 + p0 ** 2) * k ** 2


# -- quantum ---------------------------------------------------------------------

def _gaussian(g, w=1.0, k=0.0):
    x = g.coords
    return Field(g, np.exp(-np.sum(x ** 2, axis=1) / (2 * w ** 2) + 1j * k * x[:, 0])).normalized()


def test_stationary_state():
    g = GridSpec(1, 8.0, 256)
    H = schrodinger(g, potential=harmonic())
    res = dense_oracle(H)
    psi0 = res.field(0, g).normalized()
    lam = res.values[0]
    errs = []
    for dt in (0.02, 0.01):
        traj = evolve_quantum(H, psi0, EvolverCfg(dt, int(round(1 / dt)), "cayley"), guard=False)
        u = traj.states[-1].values
        np.testing.assert_allclose(np.abs(u), np.abs(psi0.values), atol=1e-10)
        errs.append(np.linalg.norm(u - np.exp(-1j * lam * 1.0) * psi0.values) * np.sqrt(g.h))
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)


def test_norm_conservation():
    g = GridSpec(2, 10.0, 64)
    H = schrodinger(g, potential=harmonic(0.5))
    traj = evolve_quantum(H, _gaussian(g), EvolverCfg(0.01, 1000, "cayley"), stride=100)
    assert not traj.aborted
    assert np.max(np.abs(traj.norms - 1)) <= 1e-8


def test_free_spreading():
    g = GridSpec(1, 30.0, 1024)
    H = schrodinger(g)
    w = 1.0
    traj = evolve_quantum(H, _gaussian(g, w), EvolverCfg(0.005, 400, "cayley"), stride=40)
    x2 = g.coords[:, 0] ** 2
    for t, s in zip(traj.times, traj.states):
        measured = np.sum(x2 * np.abs(s.values) ** 2) * g.h
        assert measured == pytest.approx(w ** 2 / 2 + 2 * t ** 2 / w ** 2, rel=5e-3)


def test_energy_expectation_constant():
    g = GridSpec(1, 10.0, 256)
    H = schrodinger(g, potential=harmonic())
    traj = evolve_quantum(H, _gaussian(g, 0.7, 1.0), EvolverCfg(0.01, 100, "cayley"))
    assert expectation_evolution_residual(H, H, traj) <= 1e-9


def test_dilation_evolution_order():
    g = GridSpec(1, 20.0, 512)
    H = schrodinger(g)
    T = dilation_generator(g)
    dts = [0.04, 0.02, 0.01]
    res = []
    for dt in dts:
        traj = evolve_quantum(H, _gaussian(g), EvolverCfg(dt, int(round(1 / dt)), "cayley"))
        res.append(expectation_evolution_residual(H, T, traj))
        assert all(abs(expectation(T, s).imag) <= 1e-10 * max(1.0, abs(expectation(T, s)))
                   for s in traj.states)
    assert _slope(dts, res) >= 1.8


def test_dispersion_convexity():
    g = GridSpec(2, 12.0, 64)
    traj = evolve_quantum(schrodinger(g), _gaussian(g), EvolverCfg(0.02, 50, "cayley"))
    assert np.min(dispersion_second_differences(traj)) >= -1e-8


def test_guard_aborts():
    g = GridSpec(1, 5.0, 128)
    traj = evolve_quantum(schrodinger(g), _gaussian(g, 0.5, 3.0), EvolverCfg(0.01, 500, "cayley"))
    assert traj.aborted and "contamination" in traj.message
    assert traj.times[-1] < 5.0


def test_quantum_preconditions():
    g = GridSpec(1, 5.0, 32)
    psi = _gaussian(g)
    with pytest.raises(InvalidSpec):
        evolve_quantum(schrodinger(g, potential=gaussian(1.0, imaginary=True)), psi,
                       EvolverCfg(0.1, 2, "cayley"))
    with pytest.raises(InvalidSpec):
        evolve_quantum(schrodinger(g), psi, EvolverCfg(0.1, 2))
