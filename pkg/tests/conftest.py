import os

import numpy as np
import pytest

from dpsynth.sampler import McmcConfig


def pytest_collection_modifyitems(config, items):
    if os.environ.get("DPSYNTH_FULL_SCALE") == "1":
        return
    skip = pytest.mark.skip(reason="set DPSYNTH_FULL_SCALE=1 to run the full-scale plan")
    for item in items:
        if "full_scale" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def quick_mcmc():
    """Short chains for plumbing tests that do not need tight posteriors."""
    return McmcConfig(n_warmup=600, n_retain=600, seed=11)


@pytest.fixture(scope="session")
def beta_data_500():
    return np.random.default_rng(7).beta(0.5, 3.0, 500).clip(1e-9, 1 - 1e-9)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    """Record one PASS/FAIL line per criterion and assert every check passed."""

    def record(number, checks: dict, detail: str = ""):
        ok = all(checks.values())
        failed = [name for name, passed in checks.items() if not passed]
        line = f"criterion {str(number):>3}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f"  {detail}"
        if failed:
            line += f"  failed: {'; '.join(failed)}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: s.split(":")[0]):
            terminalreporter.write_line(line)
