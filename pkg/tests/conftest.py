import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xgdg import DegreeTuple, PenaltyParams, build_unit_square, sine_case, sine_elastic_case, solve_elastic, solve_scalar

settings.register_profile("xgdg", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("xgdg")


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", help="skip tests marked slow")


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    skip = pytest.mark.skip(reason="--skip-slow given")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def meshes():
    cache = {}

    def get(level):
        if level not in cache:
            cache[level] = build_unit_square(level)
        return cache[level]
    return get


@pytest.fixture(scope="session")
def scalar_solution(meshes):
    cache = {}

    def get(level, k, gamma=1.0, monolithic=False):
        key = (level, k, gamma, monolithic)
        if key not in cache:
            cache[key] = solve_scalar(meshes(level), DegreeTuple.superconvergent(k),
                                      PenaltyParams(gamma=gamma), sine_case(), monolithic=monolithic)
        return cache[key]
    return get


@pytest.fixture(scope="session")
def elastic_solution(meshes):
    cache = {}

    def get(level, k, gamma=1.0, monolithic=False):
        key = (level, k, gamma, monolithic)
        if key not in cache:
            cache[key] = solve_elastic(meshes(level), DegreeTuple.superconvergent(k),
                                       PenaltyParams(gamma=gamma), sine_elastic_case(), monolithic=monolithic)
        return cache[key]
    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one summary line per acceptance criterion, printed after the run

_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(key, ok, detail):
        _ACCEPTANCE[key] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(k.split()[0]), k)):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
