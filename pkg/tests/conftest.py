import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from smlevy import (  # noqa: E402
    ergodic_summary,
    reference_family,
    reference_model,
)


def n_threads():
    return min(4, os.cpu_count() or 1)


@pytest.fixture(scope="session")
def ref_model():
    return reference_model()


@pytest.fixture(scope="session")
def ref_summary(ref_model):
    return ergodic_summary(ref_model)


@pytest.fixture(scope="session")
def ref_family():
    return reference_family()


@pytest.fixture(scope="session")
def threads():
    return n_threads()


def assert_close(actual, expected, tol, label=""):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    err = np.max(np.abs(actual - expected))
    assert err <= tol, f"{label}: max deviation {err:.3e} > {tol:.0e}"
