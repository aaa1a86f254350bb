from __future__ import annotations

import os
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures" / "mini"

_acceptance: list[tuple[str, str, str]] = []


def pytest_addoption(parser):
    parser.addoption(
        "--network-tests",
        action="store_true",
        default=False,
        help="run tests that download the real 2010 census and LODES files",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--network-tests") or os.environ.get("DAYTIME_DENSITY_NETWORK_TESTS") == "1":
        return
    skip = pytest.mark.skip(reason="needs --network-tests (real census/LODES downloads)")
    for item in items:
        if "network" in item.keywords:
            item.add_marker(skip)


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        name = report.nodeid.split("::")[-1]
        note = ""
        if report.skipped and isinstance(report.longrepr, tuple):
            note = report.longrepr[2].removeprefix("Skipped: ")
        elif report.failed:
            note = report.longreprtext.strip().splitlines()[-1]
        _acceptance.append((outcome, name, note))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for outcome, name, note in _acceptance:
        terminalreporter.write_line(f"{outcome}  {name}" + (f"  [{note}]" if note else ""))


@pytest.fixture
def mini():
    return FIXTURES


@pytest.fixture(scope="session")
def real_inputs():
    """Local paths to the three 2010 inputs, downloaded into the cache once."""
    from daytime_density.fetch import DEFAULT_URLS, fetch

    return {name: fetch(url) for name, url in DEFAULT_URLS.items()}
