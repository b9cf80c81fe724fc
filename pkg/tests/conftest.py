import numpy as np
import pytest

from signid.graphs import catalog

ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def cat():
    return catalog()


def corr3(hx, hy, xy, scales=(1.0, 1.0, 1.0)):
    """Covariance over (H, X, Y) with the given correlations."""
    r = np.array([[1, hx, hy], [hx, 1, xy], [hy, xy, 1]], dtype=float)
    s = np.asarray(scales, dtype=float)
    return r * np.outer(s, s)
