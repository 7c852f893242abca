import numpy as np
import pytest

from latentgeo.datasets import circle_data, circle_train_options, flat_model
from latentgeo.gp import fit_gplvm_with_report


@pytest.fixture(scope="session")
def circle_Y():
    return circle_data()


@pytest.fixture(scope="session")
def circle_fit(circle_Y):
    return fit_gplvm_with_report(circle_Y, 2, circle_train_options())


@pytest.fixture(scope="session")
def circle_model(circle_fit):
    return circle_fit[0]


@pytest.fixture(scope="session")
def flat():
    return flat_model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def circle_geodesic(circle_model):
    """Geodesic between two antipodal training latents of the circle fixture."""
    from latentgeo.geodesic import solve_geodesic_bvp

    x1, x2 = circle_model.X[0], circle_model.X[30]
    return solve_geodesic_bvp(circle_model, x1, x2), x1, x2


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log(capsys):
    """Record one pass/fail line per acceptance criterion."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
