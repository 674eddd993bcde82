from __future__ import annotations

import numpy as np
import pytest

from xrsel.field import GridBox, DensityField
from xrsel.geometry import HeadPose, SurfaceGeometry


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_scene(rng: np.random.Generator) -> tuple[SurfaceGeometry, HeadPose]:
    """A random surface rectangle with the head somewhere above it."""
    rot = random_rotation(rng)
    surface = SurfaceGeometry(
        center=rng.uniform(-2, 2, 3),
        axis_x=rot[0],
        axis_z=rot[2],
        width=rng.uniform(0.3, 1.5),
        height=rng.uniform(0.3, 1.5),
    )
    # head above the plane, roughly over the rectangle
    u, v = rng.uniform(-0.3, 0.3, 2)
    head = surface.from_local(u * surface.width, v * surface.height) \
        + rng.uniform(0.3, 1.5) * surface.axis_z
    return surface, HeadPose(position=head)


def radial_field(shape=(32, 32, 32), extent=2.0, center=(0.0, 0.0, 0.0)) -> DensityField:
    """rho = 1 / (1 + |r - c|^2) sampled on a grid over [-extent, extent]^3."""
    grid = GridBox(vmin=(-extent, -extent, -extent), vmax=(extent, extent, extent), shape=shape)
    xs, ys, zs = grid.axis_coords()
    cx, cy, cz = center
    r2 = ((xs - cx) ** 2)[:, None, None] + ((ys - cy) ** 2)[None, :, None] \
        + ((zs - cz) ** 2)[None, None, :]
    return DensityField(grid=grid, values=(1.0 / (1.0 + r2)).astype(np.float32))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
