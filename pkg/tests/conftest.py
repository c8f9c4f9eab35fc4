"""Shared fixtures: small grids and cached simulation products.

Simulation-backed fixtures are session-scoped; everything derives
deterministically from fixed seeds.
"""

import numpy as np
import pytest

from sweikit.fields import DisplacementSequence
from sweikit.geometry import GridGeom, PushDescriptor
from sweikit.phantom import Material, PhantomSpec, render_elasticity_map
from sweikit.wavesim import SimConfig, simulate


@pytest.fixture(scope="session")
def small_geom():
    return GridGeom(depth_px=60, lateral_px=120, depth_extent=60 * 8e-5, lateral_extent=120 * 5.5e-5)


@pytest.fixture(scope="session")
def mid_geom():
    return GridGeom(depth_px=120, lateral_px=300, depth_extent=120 * 8e-5, lateral_extent=300 * 5.5e-5)


def simulate_homogeneous(geom, young_pa, frames=35, seed=0, noise_std=0.0, push=None, plane=False):
    spec = PhantomSpec(geom=geom, background=Material(young_modulus=young_pa))
    emap = render_elasticity_map(spec)
    if push is None:
        push = PushDescriptor(
            lateral_center_px=geom.lateral_px // 2,
            element_halfwidth_px=10,
            depth_extent=min(0.008, geom.depth_extent),
        )
    cfg = SimConfig(
        geom=geom, push=push, frames=frames, noise_std=noise_std, seed=seed,
        absorb_width_px=30, plane_push=plane,
    )
    return simulate(emap, cfg)


@pytest.fixture(scope="session")
def homog_seq_mid(mid_geom):
    """27 kPa (3 m/s) homogeneous acquisition on the mid-size grid."""
    return simulate_homogeneous(mid_geom, 27e3, seed=11)


@pytest.fixture(scope="session")
def plane_seq_mid(mid_geom):
    """Plane-wave 27 kPa acquisition, 50 frames, for delay-accuracy tests."""
    return simulate_homogeneous(mid_geom, 27e3, frames=50, seed=12, plane=True)


def constant_sequence(geom, value=0.0, frames=12, frame_rate=7000.0):
    data = np.full((geom.depth_px, geom.lateral_px, frames), value, dtype=np.float64)
    push = PushDescriptor(lateral_center_px=geom.lateral_px // 2, element_halfwidth_px=5,
                          depth_extent=min(0.004, geom.depth_extent))
    return DisplacementSequence(geom=geom, data=data, frame_rate=frame_rate, push=push)
