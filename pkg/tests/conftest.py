import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def reference_scan():
    """The d = 3 reference scan (L = 20, n = 48) shared by module and acceptance tests."""
    from virialkit.lattice import GridSpec
    from virialkit.resolvent import scan

    lams = [-1, -10, 1j, 2j, 1 + 1j, 1 + 0.5j, 1 + 0.1j, 1 + 0.01j, 3 + 0.2j]
    return scan(GridSpec(3, 20.0, 48), lams, workers=4)


@pytest.fixture(scope="session")
def hardy_sweep():
    from virialkit.certificates import hardy_constant
    from virialkit.lattice import GridSpec

    return {L: hardy_constant(GridSpec(3, float(L), 48)) for L in (5, 10, 20)}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
