"""Shared fixtures plus the acceptance-criteria result summary."""

import sys

import numpy as np
import pytest

ACCEPTANCE_RESULTS = []

ECHO_BACKEND_ARGS = [sys.executable, "tests/backends/echo_backend.py"]


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): top-level acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        marker = item.get_closest_marker("acceptance")
        if marker:
            ACCEPTANCE_RESULTS.append((marker.args[0], report.passed))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, passed in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(
            f"[ACCEPTANCE] {name}: {'PASS' if passed else 'FAIL'}")


def make_blobs(n, d, n_clusters=3, separation=20.0, seed=0):
    """Gaussian blobs (unit spread) with centers `separation` apart."""
    rng = np.random.default_rng(seed)
    sizes = [n // n_clusters] * n_clusters
    sizes[0] += n - sum(sizes)
    rows = []
    labels = []
    for c, size in enumerate(sizes):
        center = np.zeros(d)
        center[c % d] = separation * (1 + c // d)
        rows.append(rng.normal(size=(size, d)) + center)
        labels.extend([f"blob_{c}" for _ in range(size)])
    return np.vstack(rows), labels


def random_points(rng, n, d=3):
    return rng.normal(size=(n, d))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def echo_backend(tmp_path):
    """Registry entry for the echo backend script, from the repo root."""
    import os

    script = os.path.join(os.path.dirname(__file__), "backends", "echo_backend.py")
    return {"echo": [sys.executable, script]}
