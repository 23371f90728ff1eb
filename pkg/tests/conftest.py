"""Shared fixtures: the reference device and its (expensive) calibrated operating points."""

import pytest

from bswaplab import dynamics as dyn
from bswaplab.model import reference_device


@pytest.fixture(scope="session")
def ref_dev():
    return reference_device()


@pytest.fixture(scope="session")
def formula_op(ref_dev):
    """Operating point with the amplitude taken from the closed-form rate."""
    return dyn.operating_point(ref_dev)


@pytest.fixture(scope="session")
def fine_op(ref_dev, formula_op):
    """Operating point with the amplitude refined against the simulated pulse."""
    return dyn.recalibrate_amplitude(ref_dev, formula_op)
