"""Shared fixtures: one synthetic channel-1 dataset and its fit.

Simulation and fitting are deterministic, so session scope is safe and
keeps the expensive pieces from re-running per module.
"""

import pytest

from decaykit.fitter import fit
from decaykit.presets import preset_model
from decaykit.synth import AcquisitionConfig, simulate_histogram

BASE_SEED = 20260815


@pytest.fixture(scope="session")
def ch1_model():
    return preset_model("table2-ch1")


@pytest.fixture(scope="session")
def acq():
    return AcquisitionConfig()


@pytest.fixture(scope="session")
def ch1_hist(ch1_model, acq):
    return simulate_histogram(ch1_model, acq, BASE_SEED, channel_label="ch1")


@pytest.fixture(scope="session")
def ch1_fit(ch1_hist):
    return fit(ch1_hist, "twoexp")
