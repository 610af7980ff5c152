import os
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "src", "tango", "configs")
PLANAR_CONFIG = os.path.abspath(os.path.join(CONFIG_DIR, "planar3.yaml"))

_criterion_lines = []


def record_criterion(number, title, passed, detail=""):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" ({detail})"
    _criterion_lines.append(line)
    print(line)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criterion_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def planar_run(tmp_path_factory):
    """The shipped planar configuration run through approximate, sample and regions once."""
    from tango import pipeline

    out = str(tmp_path_factory.mktemp("planar"))
    cfg = pipeline.PipelineConfig.load(PLANAR_CONFIG)
    t0 = time.perf_counter()
    pipeline.approximate(cfg, out)
    pipeline.sample(cfg, out)
    pipeline.regions(cfg, out)
    elapsed = time.perf_counter() - t0
    return {"cfg": cfg, "out": out, "elapsed": elapsed}
