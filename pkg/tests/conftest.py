import json
from pathlib import Path

import numpy as np
import pytest

from qwei import pipeline, spectra, spinors, weights

ROOT = Path(__file__).resolve().parents[1]
DEMO = ROOT / "configs" / "demo.json"

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def demo_raw():
    return json.loads(DEMO.read_text())


@pytest.fixture(scope="session")
def demo_model(demo_raw):
    return pipeline.build_model(pipeline.RunConfig.from_dict(demo_raw))


@pytest.fixture(scope="session")
def demo_bound(demo_model):
    return pipeline.compute_bound(demo_model)


@pytest.fixture(scope="session")
def gammas():
    return spinors.build_standard_gammas()


@pytest.fixture(scope="session")
def small_basis(gammas):
    # 7 lattice vectors (k = 0 and the six unit vectors), 14 modes
    return spinors.build_mode_basis(6.3, 1.0, 1.0, gammas)


@pytest.fixture(scope="session")
def small_cfg(small_basis):
    window = spectra.Window(-8.0, 8.0, 1.0)
    return spectra.WorldlineConfig(small_basis, window, np.linspace(-28, 28, 1400))


@pytest.fixture(scope="session")
def small_weight():
    return weights.windowed_gaussian(0.0, 1.0, 8.0, 0.02)


def small_config(**over):
    """A fast configuration used by the CLI tests."""
    raw = {
        "basis": {"L": 6.3, "m": 1.0, "K_max": 1.0},
        "weight": {"kind": "windowed_gaussian", "center": 0.0, "width": 1.0, "support_radius": 8.0, "dtau": 0.025},
        "window": {"tau_a": -8.0, "tau_b": 8.0},
        "grids": {"tau_min": -28.0, "tau_max": 28.0, "n_tau": 1024, "dlam": 0.1},
        "Lambdas": [5, 10],
        "states": {"structured": 7, "random": {"count": 4, "seed": 3, "rank": 2, "strength": 0.4}},
        "checks": {"random_states": 3, "vector_states": 3, "kernel_pairs": 10},
    }
    return pipeline._merge(raw, over)
