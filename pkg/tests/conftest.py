import sys

import numpy as np
import pytest

from causalseg.fhseg import Segmentation


def make_seg(labels, pixels=None) -> Segmentation:
    labels = np.asarray(labels, dtype=np.int64)
    if pixels is None:
        pixels = np.zeros(labels.shape + (3,))
    return Segmentation(labels, np.asarray(pixels, dtype=np.float64))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
