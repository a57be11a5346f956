import numpy as np
import pytest

from rsimpulse import _accel
from rsimpulse.model import ModelSpec

# acceptance results, filled by tests/test_acceptance.py and printed at the end
AC_RESULTS = {}


def record_ac(name, ok, detail=""):
    AC_RESULTS[name] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not AC_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(AC_RESULTS, key=lambda s: int(s.split("-")[1])):
        ok, detail = AC_RESULTS[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_m1(**kw):
    d = dict(states=["s0"], generator=[[0.0]], running_cost=[-0.5], impulse_set=[0],
             shift_cost=[[-1.0]], exhaustion_chain=[[0]], grid_levels=[0])
    d.update(kw)
    return ModelSpec(**d)


def make_m2(**kw):
    d = dict(states=["a", "b"], generator=[[-1.0, 1.0], [1.0, -1.0]], running_cost=[0.0, -2.0],
             impulse_set=[0], shift_cost=[[-0.1], [-0.1]], exhaustion_chain=[[0, 1]],
             grid_levels=[0, 1, 2])
    d.update(kw)
    return ModelSpec(**d)


def make_m3(**kw):
    d = dict(states=["0", "1", "2"],
             generator=[[-1.0, 0.5, 0.5], [0.5, -1.0, 0.5], [1.0, 1.0, -2.0]],
             running_cost=[0.0, -0.5, -2.0], impulse_set=[0],
             shift_cost=[[-0.1], [-0.2], [-0.3]], exhaustion_chain=[[0, 1], [0, 1, 2]],
             grid_levels=[0, 1])
    d.update(kw)
    return ModelSpec(**d)


def make_two_impulse():
    # c(x, .) = [-0.1, -0.2] from every state; triangle: -0.1 >= -0.2 - 0.1 etc.
    return ModelSpec(
        states=["p", "q", "r"],
        generator=[[-1.0, 0.5, 0.5], [0.5, -1.0, 0.5], [0.5, 0.5, -1.0]],
        running_cost=[0.0, -0.3, -1.0], impulse_set=[0, 1],
        shift_cost=[[-0.1, -0.2]] * 3, exhaustion_chain=[[0, 1, 2]], grid_levels=[0],
    )


@pytest.fixture
def m1():
    return make_m1()


@pytest.fixture
def m2():
    return make_m2()


@pytest.fixture
def m3():
    return make_m3()


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test once per kernel flavour (numba only when importable)."""
    if request.param == "numba" and not _accel.HAS_NUMBA:
        pytest.skip("numba not available")
    old = _accel.USE_NUMBA
    _accel.USE_NUMBA = request.param == "numba"
    yield request.param
    _accel.USE_NUMBA = old


def rng(seed=0):
    return np.random.default_rng(seed)
