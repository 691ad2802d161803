import numpy as np
import pytest

from neuralccg.formulation.backend import HighsBackend
from neuralccg.system_model import (Generator, Line, Network, PenaltyConfig, UCInstance, generate_scenarios,
                                    make_random_instance)


def gen(id=0, bus=0, p_min=10.0, p_max=100.0, cost=20.0, ramp=1000.0, **kw):
    return Generator(id=id, bus=bus, p_min=p_min, p_max=p_max, ramp_up=ramp, ramp_down=ramp,
                     min_up=kw.pop("min_up", 1), min_down=kw.pop("min_down", 1), cost_energy=cost, **kw)


def single_bus(gens, load, penalty=1000.0):
    load = np.atleast_2d(np.asarray(load, float))
    T = load.shape[1]
    return UCInstance(tuple(gens), Network(1), T, load, PenaltyConfig.uniform(0, T, penalty))


@pytest.fixture
def backend():
    return HighsBackend()


@pytest.fixture(scope="session")
def toy():
    """4-bus, 3-unit, 3-period instance with 5 scenarios (small enough to enumerate)."""
    inst = make_random_instance(4, 3, 3, seed=11)
    return inst, generate_scenarios(inst.nominal_load, 5, (0.7, 1.0), seed=3)


@pytest.fixture(scope="session")
def medium():
    inst = make_random_instance(5, 4, 8, seed=4)
    return inst, generate_scenarios(inst.nominal_load, 8, (0.7, 1.0), seed=9)


# ---------------------------------------------------------------- acceptance summary

_criteria: dict = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_") or report.when != "call" and not report.failed:
        return
    num = int(name.split("_")[2])
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or num not in _criteria:
        _criteria[num] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        status, detail = _criteria[num]
        terminalreporter.write_line(f"criterion {num}: {status}  {detail}")
