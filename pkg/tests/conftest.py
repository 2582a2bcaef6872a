import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from storagemor.gramians import gramians
from storagemor.lti import LtiRealization
from storagemor.storage_model import StorageGeometry, build_storage_system

settings.register_profile("default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE_LINES: list[str] = []


def desk_system(scale=5, n_P=1, outputs=("M",), v0=0.01, lambda_G=10.0):
    """Reference storage on a grid coarsened by ``scale`` (PHX width kept at two rows)."""
    geom = StorageGeometry(d_P=0.02 * scale, n_P=n_P, lambda_G=lambda_G)
    return build_storage_system(geom, 0.1 * scale, 0.01 * scale, outputs=outputs, v0=v0)


def random_stable(rng, n, m=2, p=2):
    A = rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(A).real) + rng.uniform(0.3, 2.0)
    A -= shift * np.eye(n)
    return LtiRealization(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)))


@pytest.fixture(scope="session")
def desk5():
    return desk_system(5, 1, ("M",))


@pytest.fixture(scope="session")
def desk5_gp(desk5):
    r = desk5.to_realization()
    return r, gramians(r)


@pytest.fixture(scope="session")
def desk10():
    return desk_system(10, 1, ("M", "F", "O", "B"))


@pytest.fixture
def acceptance():
    def report(label, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
