"""Isosurface extraction tests against the analytic radial field.

For rho = 1/(1 + r^2) the magnitude of the second derivative along any line
is at most 2 (attained at the center), so a vertex placed by linear
interpolation along a cell edge of length h carries at most h^2 * 2 / 8
interpolation error in its density.
"""

from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from conftest import radial_field

from xrsel.field import DensityField, GridBox
from xrsel.selection import NodeMask, SelectionError, marching_cubes, threshold_mean_density


def edge_counts(triangles: np.ndarray) -> Counter:
    c = Counter()
    for a, b, d in triangles:
        for u, v in ((a, b), (b, d), (a, d)):
            c[(min(u, v), max(u, v))] += 1
    return c


class TestTrivialCases:
    def test_threshold_above_max_empty(self):
        dens = radial_field(shape=(16, 16, 16))
        mesh = marching_cubes(dens, rho0=2.0)
        assert len(mesh) == 0

    def test_constant_field_empty(self):
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(8, 8, 8))
        dens = DensityField(grid=grid, values=np.full(grid.shape, 1.0, dtype=np.float32))
        assert len(marching_cubes(dens, rho0=1.0)) == 0
        assert len(marching_cubes(dens, rho0=0.5)) == 0

    def test_non_finite_threshold(self):
        dens = radial_field(shape=(8, 8, 8))
        with pytest.raises(SelectionError):
            marching_cubes(dens, rho0=float("nan"))


class TestRadialField:
    def test_vertex_density_within_interpolation_bound(self):
        dens = radial_field(shape=(32, 32, 32), extent=2.0)
        rho0 = 0.5  # isosurface is the unit sphere
        mesh = marching_cubes(dens, rho0)
        assert len(mesh) > 0
        h = float(dens.grid.spacing.max())
        bound = 2.0 * h * h / 8.0
        r2 = np.sum(mesh.vertices ** 2, axis=1)
        rho_at_vertices = 1.0 / (1.0 + r2)
        assert np.all(np.abs(rho_at_vertices - rho0) <= bound + 1e-9)

    def test_closed_surface_every_edge_shared_twice(self):
        dens = radial_field(shape=(24, 24, 24), extent=2.0)
        mesh = marching_cubes(dens, 0.5)
        counts = edge_counts(mesh.triangles)
        assert len(counts) > 0
        assert set(counts.values()) == {2}

    def test_vertices_interpolate_straddling_nodes(self):
        dens = radial_field(shape=(20, 20, 20), extent=2.0)
        rho0 = 0.5
        mesh = marching_cubes(dens, rho0)
        xs, ys, zs = dens.grid.axis_coords()
        axes = (xs, ys, zs)
        spacing = dens.grid.spacing
        for p in mesh.vertices:
            frac = [(p[a] - axes[a][0]) / spacing[a] for a in range(3)]
            off_axis = [a for a in range(3) if abs(frac[a] - round(frac[a])) > 1e-9]
            assert len(off_axis) <= 1
            if not off_axis:
                continue  # vertex exactly at a node: that node value equals rho0
            a = off_axis[0]
            idx = [int(round(f)) for f in frac]
            lo = int(np.floor(frac[a]))
            i0, i1 = list(idx), list(idx)
            i0[a], i1[a] = lo, lo + 1
            v0 = float(dens.values[tuple(i0)])
            v1 = float(dens.values[tuple(i1)])
            assert (v0 > rho0) != (v1 > rho0)

    def test_no_degenerate_triangles(self):
        dens = radial_field(shape=(20, 20, 20), extent=2.0)
        mesh = marching_cubes(dens, 0.5)
        p = mesh.vertices
        t = mesh.triangles
        areas = 0.5 * np.linalg.norm(
            np.cross(p[t[:, 1]] - p[t[:, 0]], p[t[:, 2]] - p[t[:, 0]]), axis=1)
        assert np.all(areas > 0)

    def test_orientation_coherent(self):
        # neighboring triangles traverse their shared edge in opposite directions
        dens = radial_field(shape=(16, 16, 16), extent=2.0)
        mesh = marching_cubes(dens, 0.5)
        directed = Counter()
        for a, b, c in mesh.triangles:
            for u, v in ((a, b), (b, c), (c, a)):
                directed[(u, v)] += 1
        for (u, v), n in directed.items():
            assert n == 1
            assert directed[(v, u)] == 1


class TestMaskedExtraction:
    def test_mask_limits_surface_region(self):
        dens = radial_field(shape=(24, 24, 24), extent=2.0)
        bits = np.zeros(dens.grid.shape, dtype=bool)
        bits[:12, :, :] = True  # half-space x < 0
        mask = NodeMask(grid=dens.grid, bits=bits)
        mesh = marching_cubes(dens, 0.5, mask)
        full = marching_cubes(dens, 0.5)
        assert 0 < len(mesh) < len(full)
        # all triangles live in cells touching the mask
        assert mesh.vertices[:, 0].max() < dens.grid.axis_coords()[0][12] + 1e-9

    def test_empty_mask_empty_mesh(self):
        dens = radial_field(shape=(16, 16, 16))
        assert len(marching_cubes(dens, 0.5, NodeMask.empty(dens.grid))) == 0

    def test_mesh_matches_threshold_from_mean(self):
        dens = radial_field(shape=(24, 24, 24), extent=2.0)
        mask = NodeMask(grid=dens.grid, bits=np.ones(dens.grid.shape, dtype=bool))
        rho0 = threshold_mean_density(dens, mask)
        mesh = marching_cubes(dens, rho0, mask)
        r2 = np.sum(mesh.vertices ** 2, axis=1)
        h = float(dens.grid.spacing.max())
        assert np.all(np.abs(1.0 / (1.0 + r2) - rho0) <= 2.0 * h * h / 8.0 + 1e-9)
