import numpy as np
import pytest

from sempath.ram import SampleMoments, build_ram
from sempath.simulate import GROWTH_MODEL, GROWTH_NAMES, cfa_model, simulate_cfa, simulate_growth
from sempath.syntax import parse_model

CFA_LOADINGS = (0.7, 0.7, 0.6, 0.6, 0.5, 0.0, 0.0)
CFA_NAMES = [f"y{k}" for k in range(1, 8)]
TWO_IND = "f1 =~ NA*y1 + y2\nf1 ~~ 1*f1\n"


def make_cfa(N=250, seed=0):
    data = SampleMoments.from_data(simulate_cfa(N, CFA_LOADINGS, seed), CFA_NAMES)
    ram = build_ram(parse_model(cfa_model(7)), CFA_NAMES, data)
    return ram, data


def make_growth(N=200, seed=3):
    data = SampleMoments.from_data(simulate_growth(N, seed), GROWTH_NAMES)
    ram = build_ram(parse_model(GROWTH_MODEL, growth=True), GROWTH_NAMES, data)
    return ram, data


def make_two(N=300, seed=5):
    X = simulate_cfa(N, (0.8, 0.6), seed)
    data = SampleMoments.from_data(X, ["y1", "y2"])
    ram = build_ram(parse_model(TWO_IND), ["y1", "y2"], data)
    return ram, data


@pytest.fixture(scope="session")
def cfa():
    return make_cfa()


@pytest.fixture(scope="session")
def growth():
    return make_growth()


@pytest.fixture(scope="session")
def two():
    return make_two()


def random_admissible(ram, rng, scale=0.4):
    """Perturbed start with variances kept positive."""
    th = ram.start + rng.uniform(-scale, scale, ram.q)
    v = np.array(ram.variance_ids) - 1
    th[v] = np.abs(ram.start[v]) * rng.uniform(0.5, 1.5, v.size) + 0.1
    return th


ACCEPTANCE = {}


def record(criterion: str, ok: bool, detail: str = ""):
    """Register one acceptance line; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip("abcd")), s)):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
