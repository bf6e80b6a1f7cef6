from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from neuralpatch.network import make_test_network

# pass/fail lines appended by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def structured_image(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Smooth multi-frequency test image; has enough structure to match on."""
    ys = np.arange(height, dtype=np.float64)[None, :, None]
    xs = np.arange(width, dtype=np.float64)[None, None, :]
    img = np.zeros((3, height, width), dtype=np.float64)
    for _ in range(6):
        fy, fx = rng.uniform(0.02, 0.2, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=(3, 1, 1))
        img += rng.uniform(20.0, 60.0) * np.sin(2.0 * np.pi * (fy * ys + fx * xs) + phase)
    img = 127.5 + img * (100.0 / np.max(np.abs(img)))
    return np.clip(img, 0.0, 255.0).astype(np.float32)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_net():
    """1/8-width random trunk shared across tests that only need *a* network."""
    return make_test_network(seed=42)


@pytest.fixture
def image_64(rng) -> np.ndarray:
    return structured_image(rng, 64, 64)
