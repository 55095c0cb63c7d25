import numpy as np
import pytest

from palpbench.materials import (
    MaterialSpec,
    concentric_disk_phantom,
    table_material,
    uniform_phantom,
)
from palpbench.rig import RigConfig, RigSimulator


@pytest.fixture
def tpu_material():
    return table_material("tpu", contact_offset=0.0)


@pytest.fixture
def single_mode_material():
    return MaterialSpec(
        name="one-mode",
        stiffness_mean=10.0,
        stiffness_sd=0.0,
        resonance_modes=((600.0, 50.0, 1.0),),
    )


@pytest.fixture
def ideal_sim(tpu_material):
    """Uniform noiseless TPU phantom under an ideal sensor chain."""
    phantom = uniform_phantom(
        tpu_material, nx=20, ny=20, cell_size=1.0, origin=(90.0, 90.0)
    )
    # zero SD so the drawn stiffness equals the tabulated mean exactly
    phantom.materials[0] = table_material("tpu", contact_offset=0.0, stiffness_sd=0.0)
    config = RigConfig(seed=7).with_ideal_sensors()
    return RigSimulator(phantom, config)


@pytest.fixture
def noisy_sim(tpu_material):
    phantom = uniform_phantom(tpu_material, nx=20, ny=20, origin=(90.0, 90.0))
    return RigSimulator(phantom, RigConfig(seed=7))


@pytest.fixture
def three_ring_phantom():
    """Concentric analog of the boundary-search specimen."""
    return concentric_disk_phantom(
        [table_material("tpu"), table_material("pla5"), table_material("pla15")],
        radii=[4.0, 8.0],
        cell_size=1.0,
        origin=(80.0, 80.0),
        name="three-ring",
    )


def assert_strictly_increasing(arr):
    arr = np.asarray(arr)
    assert np.all(np.diff(arr) > 0)
