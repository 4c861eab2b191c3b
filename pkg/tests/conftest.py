from __future__ import annotations

import sys

import pytest

from gwmaxdeg.offspring import OffspringSpec, build

FAMILIES = {
    "binary": "explicit:0.5,0,0.5",
    "geo13": "geometric:0.3333333333333333",
    "geo12": "geometric:0.5",
    "pois08": "poisson:0.8",
    "pois15": "poisson:1.5",
    "pow3": "power:3",
    "super_bounded": "explicit:0.25,0,0.75",
    "no_death": "explicit:0,0.5,0,0.5",
}


def law(name_or_spec: str):
    return build(OffspringSpec.parse(FAMILIES.get(name_or_spec, name_or_spec)))


@pytest.fixture(scope="session")
def laws():
    return {k: law(k) for k in FAMILIES}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo or large-r checks")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.LINES, key=lambda l: int(l.split()[1])):
        terminalreporter.write_line(line)
