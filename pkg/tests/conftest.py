import numpy as np
import pytest

from mfglab import Grid, ProblemSpec, make_model, solve

ACCEPTANCE: dict[int, str] = {}


def record(number: int, passed: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


def cosine_instance(amp: float, N: int, **kw):
    g = Grid(1, N, N, 1.0)
    spec = ProblemSpec(g, make_model("quadratic"), amp * np.cos(2 * np.pi * g.coords[0]), np.ones(N),
                       max_iter=kw.pop("max_iter", 20000), **kw)
    primal, dual, report = solve(spec)
    return spec, primal, dual, report


@pytest.fixture(scope="session")
def benchmark():
    """The 0.5-amplitude cosine instance at N = 32, 64, 128."""
    return {N: cosine_instance(0.5, N) for N in (32, 64, 128)}


@pytest.fixture(scope="session")
def small_cosine():
    return cosine_instance(0.1, 64, tol=1e-7)
