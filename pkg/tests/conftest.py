"""Shared fixtures for the test suite.

Expensive solver runs are cached on disk so repeated test sessions reuse
them.  The cache directory defaults to /tmp/agk-cache and can be moved with
the AGK_TEST_CACHE environment variable; a cold cache makes the first session
noticeably slower (the fine-mesh presets integrate for minutes) but changes
no outcome.
"""

import os
from pathlib import Path

import pytest
from hypothesis import settings

from aggkernel import pipeline, presets

settings.register_profile("suite", deadline=None, max_examples=50)
settings.load_profile("suite")

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(num: int, ok: bool, detail: str) -> None:
    """Register one acceptance line; the terminal summary prints them all."""
    _ACCEPTANCE[num] = (ok, detail)
    print(f"acceptance {num:02d} [{'PASS' if ok else 'FAIL'}] {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[num]
        terminalreporter.write_line(
            f"acceptance {num:02d} [{'PASS' if ok else 'FAIL'}] {detail}")


@pytest.fixture(scope="session")
def cache_dir() -> Path:
    path = Path(os.environ.get("AGK_TEST_CACHE", "/tmp/agk-cache"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _bundle(name: str, cache: Path):
    cfg = presets.get_preset(name)
    traj = pipeline.simulate(cfg, cache_dir=cache)
    obs = pipeline.observe(cfg, traj)
    system = pipeline.assemble(cfg, obs, cache_dir=cache)
    return cfg, traj, obs, system


@pytest.fixture(scope="session")
def ex1(cache_dir):
    """Noise-free compactly supported 1D run with the indicator dictionary."""
    return _bundle("example1", cache_dir)


@pytest.fixture(scope="session")
def ex1_linear(cache_dir):
    """Same trajectory regressed against the piecewise-linear dictionary."""
    return _bundle("example1-linear", cache_dir)


@pytest.fixture(scope="session")
def ex2_desk(cache_dir):
    """Coarse metastable two-bump run with the Gaussian dictionary."""
    return _bundle("example2-desk", cache_dir)


@pytest.fixture(scope="session")
def ex3_desk_traj(cache_dir):
    """Solver-scale double-well trajectory shared by clean and noisy paths."""
    cfg = presets.get_preset("example3-desk")
    return cfg, pipeline.simulate(cfg, cache_dir=cache_dir)
