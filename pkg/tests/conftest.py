import os

import pytest

from fockspace import parse_weight
from fockspace.harness import TableCache

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def cache(tmp_path_factory):
    directory = os.environ.get("FOCKSPACE_CACHE") or tmp_path_factory.mktemp("tables")
    return TableCache(directory)


@pytest.fixture(scope="session")
def linear():
    return parse_weight("linear:a=1")


@pytest.fixture(scope="session")
def quadratic():
    return parse_weight("monomial:p=2")


@pytest.fixture(scope="session")
def lin_table(cache, linear):
    return cache.for_radius(linear, 100.0)


@pytest.fixture(scope="session")
def quad_table(cache, quadratic):
    return cache.for_radius(quadratic, 100.0)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {k:2d}  {detail}")
