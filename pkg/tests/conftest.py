import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from relaynet import fixtures
from relaynet.topology import build_model_graph


@pytest.fixture
def line5_graph():
    scen = fixtures.line5()
    return scen, build_model_graph(scen, scen.link_model)


@pytest.fixture
def diamond_graph():
    scen = fixtures.diamond()
    return scen, build_model_graph(scen, scen.link_model)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" in nodeid and getattr(rep, "when", "call") == "call":
                rows.append((nodeid.split("::")[-1], "PASS" if outcome == "passed" else "FAIL"))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, outcome in sorted(rows):
            terminalreporter.write_line(f"{outcome}  {name}")
