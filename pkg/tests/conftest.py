import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from orthorot import OrthomaxSpec, build_stationarity_system
from orthorot.homotopy import solve_all
from orthorot.simulation import paper_matrices

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@functools.lru_cache(maxsize=None)
def solve_paper(criterion, variant="orthogonal", seed=0):
    """Cached k=3 enumeration on the built-in study matrix."""
    m = paper_matrices()
    a = np.array(m.A_orthogonal if variant == "orthogonal" else m.A_printed)
    spec = OrthomaxSpec.named(criterion, 9, 3)
    return a, spec, solve_all(build_stationarity_system(a, spec), seed, spec=spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion -----------------------------------

_ACCEPT = {}


def pytest_runtest_makereport(item, call):
    if item.module.__name__.endswith("test_acceptance") and call.when == "call":
        num = getattr(item.function, "criterion", None)
        if num is not None:
            detail = dict(item.user_properties).get("detail", "")
            _ACCEPT[num] = ("PASS" if call.excinfo is None else "FAIL", item.name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPT:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPT):
        status, name, detail = _ACCEPT[num]
        line = f"criterion {num:2d}: {status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
