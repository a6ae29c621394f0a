import math

import numpy as np
import pytest

from crosscurv.cost_core import make_builtin_cost


@pytest.fixture(scope="session")
def euclid():
    return make_builtin_cost("euclid_quadratic", 2)


@pytest.fixture(scope="session")
def logc():
    return make_builtin_cost("log_euclid", 2)


@pytest.fixture(scope="session")
def sphere():
    return make_builtin_cost("sphere_squared", 2)


@pytest.fixture(scope="session")
def hyper():
    return make_builtin_cost("hyperbolic_squared", 2)


@pytest.fixture(scope="session")
def oned():
    return make_builtin_cost("one_dim_family", 1, {"lambda": "s*t"})


# Samplers for pairs well inside each built-in's domain.

def sample_sphere_pair(rng, max_dist=math.pi - 0.5, theta=(0.4, math.pi - 0.4)):
    from crosscurv.cost_core import sphere_distance
    while True:
        x = np.array([rng.uniform(*theta), rng.uniform(-math.pi, math.pi)])
        xb = np.array([rng.uniform(*theta), rng.uniform(-math.pi, math.pi)])
        if sphere_distance(x, xb) <= max_dist:
            return x, xb


def sample_disk_pair(rng, radius=0.7):
    def pt():
        r = radius * math.sqrt(rng.uniform())
        a = rng.uniform(0, 2 * math.pi)
        return np.array([r * math.cos(a), r * math.sin(a)])
    return pt(), pt()


def sample_log_pair(rng, min_sep=0.3):
    while True:
        x, xb = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        if np.linalg.norm(x - xb) >= min_sep:
            return x, xb


def sample_pair(name, rng):
    if name == "sphere_squared":
        return sample_sphere_pair(rng)
    if name == "hyperbolic_squared":
        return sample_disk_pair(rng)
    if name == "log_euclid":
        return sample_log_pair(rng)
    n = 1 if name == "one_dim_family" else 2
    return rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)


BUILTINS_2D = ["euclid_quadratic", "log_euclid", "sphere_squared", "hyperbolic_squared",
               "convex_boundary"]
ALL_BUILTINS = BUILTINS_2D + ["one_dim_family"]


def chart_for(name):
    if name == "one_dim_family":
        return make_builtin_cost(name, 1, {"lambda": "s*t"})
    return make_builtin_cost(name, 2)


# Acceptance criteria record one line each; the lines are printed together at
# the end of the run (and immediately, when output capture is off).

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
