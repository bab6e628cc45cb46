import functools

import pytest

from vibrodyn.cli import load_spec
from vibrodyn.liouvillian import DissipatorConfig
from vibrodyn.propagate import simulate

CRITERIA_LINES: dict[int, str] = {}


@functools.lru_cache(maxsize=None)
def preset_run(name: str, mode: str = "lindblad"):
    """Full-length run of a bundled preset, cached for the whole session."""
    spec = load_spec(name)
    traj, basis, fc = simulate(spec.params, spec.t_end, mode=mode, grid_points=spec.grid_points,
                               cfg=DissipatorConfig(decay_grouping=spec.decay_grouping))
    return spec, traj, basis, fc


@pytest.fixture(scope="session")
def run_preset():
    return preset_run


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA_LINES):
            terminalreporter.write_line(CRITERIA_LINES[k])
