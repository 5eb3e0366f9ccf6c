import numpy as np
import pytest

from hibp import (BaseCrmSpec, Bernoulli, BetaProcess, GeneralizedGamma, GroupConfig, GroupLevySpec,
                  HibpConfig, Poisson)

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    num, text = crit
    prev = _criteria.get(num, (text, "PASS"))[1]
    if report.failed:
        prev = "FAIL"
    elif report.skipped and prev == "PASS" and report.when != "teardown":
        prev = "SKIP"
    _criteria[num] = (text, prev)


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        item.user_properties.append(("criterion", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        text, status = _criteria[num]
        terminalreporter.write_line(f"criterion {num:>2}: {status}  {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def tied_config(alpha=0.7, theta0=2.0, theta=2.0, J=5, M=500, zeta=1.0, mass=1.0):
    spec = GroupLevySpec(BetaProcess(theta), Bernoulli())
    return HibpConfig(BaseCrmSpec(GeneralizedGamma(alpha, zeta, theta0), mass),
                      tuple(GroupConfig(spec, M) for _ in range(J)))


def small_config(slab="bernoulli", Ms=(1, 2)):
    if slab == "bernoulli":
        spec = GroupLevySpec(BetaProcess(1.0), Bernoulli())
    else:
        spec = GroupLevySpec(GeneralizedGamma(0.3, 1.0, 1.0), Poisson(1.0))
    return HibpConfig(BaseCrmSpec(GeneralizedGamma(0.4, 1.0, 1.0), 1.0),
                      tuple(GroupConfig(spec, M) for M in Ms))
