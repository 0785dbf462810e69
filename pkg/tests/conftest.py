import os
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = Path(os.environ.get("FAIRFILTER_DATA_DIR", ROOT / "data"))


def _data_file(name):
    path = DATA_DIR / name
    if not path.exists():
        pytest.skip(f"{path} not available")
    return path


@pytest.fixture(scope="session")
def adult_path():
    return _data_file("adult.data")


@pytest.fixture(scope="session")
def german_path():
    return _data_file("german.data")


@pytest.fixture(scope="session")
def adult_experiment(adult_path):
    from fairfilter.harness import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.for_dataset(adult_path, "adult", removal_percents=(0.0, 1.0))
    t0 = time.perf_counter()
    rep = run_experiment(cfg)
    # wall time for load, split, scan and both trainings; not part of the JSON report
    rep.elapsed_seconds = time.perf_counter() - t0
    return rep


@pytest.fixture(scope="session")
def german_experiment(german_path):
    from fairfilter.harness import ExperimentConfig, run_experiment

    cfg = ExperimentConfig.for_dataset(german_path, "german", removal_percents=(0.0, 1.0, 2.0))
    return run_experiment(cfg)


# One PASS/FAIL line per acceptance criterion, aggregated over its tests.
_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, text = marker.args
    entry = _criteria.setdefault(number, {"text": text, "failed": [], "ran": 0, "skipped": 0})
    if rep.when == "call" or rep.outcome != "passed":
        if rep.failed:
            entry["failed"].append(item.name)
        elif rep.skipped:
            entry["skipped"] += 1
        elif rep.when == "call":
            entry["ran"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        if e["failed"]:
            status = "FAIL"
        elif e["ran"] == 0:
            status = "SKIP"
        else:
            status = "PASS"
        line = f"criterion {number} {status}: {e['text']}"
        if e["failed"]:
            line += f"  (failing: {', '.join(e['failed'])})"
        terminalreporter.write_line(line)
