from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gcpverify.generate import random_instance
from gcpverify.model import canonicalize, load_problem
from gcpverify.propagation import intermediate_bounds

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

DATA = Path(__file__).resolve().parents[1] / "src" / "gcpverify" / "data"


def fixture(name):
    net, box, spec = load_problem(DATA / f"{name}.json")
    return canonicalize(net, spec), box


def rooted(inst_or_net, box=None):
    """(net, box, bounds, status) with frozen CROWN intermediate bounds."""
    if box is None:
        net, box = inst_or_net.net, inst_or_net.box
    else:
        net = inst_or_net
    bounds, status = intermediate_bounds(net, box, "crown")
    return net, box, bounds, status


def small_instances(n, max_unstable=8, start=0, **kw):
    out, seed = [], start
    while len(out) < n:
        inst = random_instance(seed, **kw)
        seed += 1
        r = rooted(inst)
        if r[3].num_unstable <= max_unstable:
            out.append(r)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report one line each in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
