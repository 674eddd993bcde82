"""Field tests: cloud I/O, bounds, the adaptive estimator, sampling, file format.

The estimator oracle is a per-node brute-force sum written in plain Python
floats, mirroring the documented formula term by term; grid values must
match it bit for bit after the single float32 rounding.
"""

from __future__ import annotations

import math
import struct

import numpy as np
import pytest

from xrsel.field import (
    EPANECHNIKOV_NORM_3D,
    DensityField,
    FieldError,
    GridBox,
    MbeParams,
    PointCloud,
    compute_bandwidths,
    compute_bounds,
    estimate_density_mbe,
    integrate_mass,
    load_cloud,
    load_field,
    mean_nn_distance,
    pilot_density,
    sample_density,
    sample_density_many,
    save_cloud,
    save_field,
)


def brute_force_kde_at(positions: np.ndarray, radii: np.ndarray, node) -> np.float32:
    """Direct per-point sum at one node, ascending index order (the oracle)."""
    n = float(positions.shape[0])
    acc = 0.0
    for i in range(positions.shape[0]):
        px, py, pz = positions[i]
        ri = float(radii[i])
        r2 = ri * ri
        dx = node[0] - px
        dy = node[1] - py
        dz = node[2] - pz
        d2 = (dx * dx + dy * dy) + dz * dz
        u2 = d2 / r2
        if u2 < 1.0:
            w = 1.0 / ((n * (r2 * ri)) * EPANECHNIKOV_NORM_3D)
            acc += (1.0 - u2) * w
    return np.float32(acc)


class TestCloudIO:
    def test_csv_two_points(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("0,0,0\n1,1,1\n")
        cloud = load_cloud(p)
        assert len(cloud) == 2
        assert np.allclose(cloud.positions, [[0, 0, 0], [1, 1, 1]])

    def test_csv_header_skipped(self, tmp_path):
        bare = tmp_path / "bare.csv"
        bare.write_text("0,0,0\n1,1,1\n")
        headed = tmp_path / "headed.csv"
        headed.write_text("x,y,z\n0,0,0\n1,1,1\n")
        assert np.array_equal(load_cloud(bare).positions, load_cloud(headed).positions)

    def test_csv_malformed_row_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("0,0,0\n1,oops,1\n")
        with pytest.raises(FieldError, match=":2"):
            load_cloud(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        with pytest.raises(FieldError):
            load_cloud(p)

    def test_binary_round_trip(self, tmp_path, rng):
        cloud = PointCloud(positions=rng.normal(size=(57, 3)),
                           attributes={"mass": rng.random(57)})
        p = tmp_path / "c.npz"
        save_cloud(cloud, p)
        back = load_cloud(p)
        assert np.array_equal(back.positions, cloud.positions)
        assert np.array_equal(back.attributes["mass"], cloud.attributes["mass"])

    def test_csv_round_trip_with_attrs(self, tmp_path, rng):
        cloud = PointCloud(positions=rng.normal(size=(9, 3)),
                           attributes={"v": rng.random(9)})
        p = tmp_path / "c.csv"
        save_cloud(cloud, p)
        back = load_cloud(p)
        assert np.array_equal(back.positions, cloud.positions)
        assert np.array_equal(back.attributes["v"], cloud.attributes["v"])


class TestComputeBounds:
    def test_unit_cube_no_padding(self):
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                           dtype=float)
        box = compute_bounds(PointCloud(positions=corners), padding_fraction=0.0)
        assert np.allclose(box.vmin, 0) and np.allclose(box.vmax, 1)
        assert box.shape == (128, 128, 128)

    def test_padding_is_diagonal_fraction(self):
        corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                           dtype=float)
        box = compute_bounds(PointCloud(positions=corners), padding_fraction=0.05)
        pad = 0.05 * math.sqrt(3.0)
        assert np.allclose(box.vmin, -pad, atol=1e-15)
        assert np.allclose(box.vmax, 1 + pad, atol=1e-15)

    def test_single_point_degenerate(self):
        with pytest.raises(FieldError):
            compute_bounds(PointCloud(positions=np.zeros((1, 3))), padding_fraction=0.0)


class TestBandwidths:
    def test_pilot_matches_brute_force(self, rng):
        pos = rng.random((120, 3))
        h0 = 0.2
        pilot = pilot_density(pos, h0)
        w0 = 1.0 / (float(len(pos)) * ((h0 * h0) * h0) * EPANECHNIKOV_NORM_3D)
        for j in [0, 17, 63, 119]:
            acc = 0.0
            for i in range(len(pos)):
                d = pos[i] - pos[j]
                d2 = (d[0] * d[0] + d[1] * d[1]) + d[2] * d[2]
                u2 = d2 / (h0 * h0)
                if u2 < 1.0:
                    acc += (1.0 - u2) * w0
            assert pilot[j] == pytest.approx(acc, rel=1e-12)

    def test_pilot_positive_includes_self(self):
        pos = np.array([[0.0, 0.0, 0.0], [10.0, 10.0, 10.0]])
        pilot = pilot_density(pos, 0.5)
        assert np.all(pilot > 0)
        # isolated points see only their own kernel
        self_term = 1.0 / (2.0 * 0.5 ** 3 * EPANECHNIKOV_NORM_3D)
        assert pilot[1] == pytest.approx(self_term, rel=1e-12)

    def test_lambda_formula(self, rng):
        pos = rng.random((80, 3))
        bw = compute_bandwidths(PointCloud(positions=pos), MbeParams(pilot_bandwidth=0.3))
        pilot = pilot_density(pos, 0.3)
        g = math.exp(math.fsum(math.log(v) for v in pilot) / len(pilot))
        lam = (pilot / g) ** -0.5
        assert np.allclose(bw.bandwidths, lam * 0.3, rtol=1e-12)

    def test_default_h0_from_nn(self, rng):
        pos = rng.random((50, 3))
        bw = compute_bandwidths(PointCloud(positions=pos))
        assert bw.pilot_bandwidth == pytest.approx(2.0 * mean_nn_distance(pos), rel=1e-12)

    def test_alpha_range(self):
        with pytest.raises(FieldError):
            MbeParams(alpha=1.5)


class TestEstimate:
    def test_single_point_finite_support(self):
        grid = GridBox(vmin=(-1, -1, -1), vmax=(1, 1, 1), shape=(17, 17, 17))
        cloud = PointCloud(positions=np.array([[0.0, 0.0, 0.0]]))
        h0 = 0.3
        dens = estimate_density_mbe(cloud, grid, MbeParams(pilot_bandwidth=h0))
        bw = compute_bandwidths(cloud, MbeParams(pilot_bandwidth=h0))
        radius = float(bw.bandwidths[0])
        xs, ys, zs = grid.axis_coords()
        d = np.sqrt(((xs ** 2)[:, None, None] + (ys ** 2)[None, :, None])
                    + (zs ** 2)[None, None, :])
        outside = d >= radius
        assert np.all(dens.values[outside] == 0.0)
        assert dens.values[8, 8, 8] == dens.values.max() > 0

    def test_grid_equals_brute_force_bitwise(self, rng):
        pos = rng.random((400, 3))
        cloud = PointCloud(positions=pos)
        grid = compute_bounds(cloud, 0.05, (24, 24, 24))
        bw = compute_bandwidths(cloud)
        dens = estimate_density_mbe(cloud, grid, bandwidths=bw)
        xs, ys, zs = grid.axis_coords()
        for _ in range(10):
            ix, iy, iz = rng.integers(0, 24, 3)
            want = brute_force_kde_at(pos, bw.bandwidths, (xs[ix], ys[iy], zs[iz]))
            assert dens.values[ix, iy, iz] == want

    def test_non_negative_and_finite(self, rng):
        cloud = PointCloud(positions=rng.normal(size=(300, 3)))
        grid = compute_bounds(cloud, 0.05, (16, 16, 16))
        dens = estimate_density_mbe(cloud, grid)
        assert np.all(dens.values >= 0)
        assert np.all(np.isfinite(dens.values))

    def test_translation_covariance_bitwise(self, rng):
        # dyadic coordinates and shift keep every float op exact
        lattice = (rng.integers(0, 2 ** 16, size=(200, 3))).astype(np.float64) / 2 ** 16
        shift = np.array([0.25, -0.5, 1.0])
        cloud_a = PointCloud(positions=lattice)
        cloud_b = PointCloud(positions=lattice + shift)
        grid_a = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(16, 16, 16))
        grid_b = GridBox(vmin=shift, vmax=1.0 + shift, shape=(16, 16, 16))
        params = MbeParams(pilot_bandwidth=0.125)
        va = estimate_density_mbe(cloud_a, grid_a, params).values
        vb = estimate_density_mbe(cloud_b, grid_b, params).values
        assert np.array_equal(va, vb)

    def test_default_resolution_is_128(self):
        cloud = PointCloud(positions=np.array([[0, 0, 0], [1, 1, 1]], dtype=float))
        assert compute_bounds(cloud, 0.1).shape == (128, 128, 128)

    def test_empty_cloud_rejected(self):
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(4, 4, 4))
        with pytest.raises(FieldError):
            estimate_density_mbe(PointCloud(positions=np.zeros((0, 3))), grid)


class TestSampling:
    def test_value_at_node(self, rng):
        cloud = PointCloud(positions=rng.random((100, 3)))
        grid = compute_bounds(cloud, 0.1, (12, 12, 12))
        dens = estimate_density_mbe(cloud, grid)
        xs, ys, zs = grid.axis_coords()
        for _ in range(20):
            ix, iy, iz = rng.integers(0, 12, 3)
            got = sample_density(dens, (xs[ix], ys[iy], zs[iz]))
            assert got == float(dens.values[ix, iy, iz])

    def test_cell_midpoint_is_corner_mean(self, rng):
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(5, 5, 5))
        dens = DensityField(grid=grid, values=rng.random((5, 5, 5)).astype(np.float32))
        xs, ys, zs = grid.axis_coords()
        ix, iy, iz = 1, 2, 3
        mid = (0.5 * (xs[ix] + xs[ix + 1]), 0.5 * (ys[iy] + ys[iy + 1]),
               0.5 * (zs[iz] + zs[iz + 1]))
        corners = dens.values[ix:ix + 2, iy:iy + 2, iz:iz + 2].astype(np.float64)
        assert sample_density(dens, mid) == pytest.approx(float(corners.mean()), rel=1e-12)

    def test_random_interior_matches_rederived_weights(self, rng):
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(7, 7, 7))
        dens = DensityField(grid=grid, values=rng.random((7, 7, 7)).astype(np.float32))
        xs, ys, zs = grid.axis_coords()
        for _ in range(50):
            p = rng.uniform(xs[0], xs[-1], 3)
            ix = min(int((p[0] - xs[0]) / grid.spacing[0]), 5)
            iy = min(int((p[1] - ys[0]) / grid.spacing[1]), 5)
            iz = min(int((p[2] - zs[0]) / grid.spacing[2]), 5)
            fx = (p[0] - xs[ix]) / grid.spacing[0]
            fy = (p[1] - ys[iy]) / grid.spacing[1]
            fz = (p[2] - zs[iz]) / grid.spacing[2]
            want = 0.0
            for ox, wx in ((0, 1 - fx), (1, fx)):
                for oy, wy in ((0, 1 - fy), (1, fy)):
                    for oz, wz in ((0, 1 - fz), (1, fz)):
                        want += wx * wy * wz * float(dens.values[ix + ox, iy + oy, iz + oz])
            assert sample_density(dens, p) == pytest.approx(want, rel=1e-10, abs=1e-12)

    def test_outside_box_is_zero(self):
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(4, 4, 4))
        dens = DensityField(grid=grid, values=np.ones((4, 4, 4), dtype=np.float32))
        assert sample_density(dens, (1.5, 0.5, 0.5)) == 0.0
        assert sample_density(dens, (-0.01, 0.5, 0.5)) == 0.0

    def test_vectorized_matches_scalar(self, rng):
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(6, 6, 6))
        dens = DensityField(grid=grid, values=rng.random((6, 6, 6)).astype(np.float32))
        pts = rng.uniform(-0.2, 1.2, (40, 3))
        many = sample_density_many(dens, pts)
        for k in range(40):
            assert many[k] == sample_density(dens, pts[k])


class TestIntegrateMass:
    def test_uniform(self):
        grid = GridBox(vmin=(0, 0, 0), vmax=(2, 1, 1), shape=(8, 4, 4))
        dens = DensityField(grid=grid, values=np.full((8, 4, 4), 3.0, dtype=np.float32))
        assert integrate_mass(dens) == pytest.approx(3.0 * 2.0, rel=1e-9)

    def test_zero_field(self):
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(4, 4, 4))
        assert integrate_mass(DensityField(grid=grid, values=np.zeros((4, 4, 4)))) == 0.0

    def test_interior_cluster_mass_near_unity(self, rng):
        # kernels integrate to 1/N each, so a well-contained cloud has mass ~ 1;
        # doubling the quadrature resolution must agree
        pos = rng.normal(scale=0.1, size=(800, 3))
        cloud = PointCloud(positions=pos)
        params = MbeParams(pilot_bandwidth=0.08)
        grid = GridBox(vmin=(-1, -1, -1), vmax=(1, 1, 1), shape=(32, 32, 32))
        grid2 = GridBox(vmin=(-1, -1, -1), vmax=(1, 1, 1), shape=(64, 64, 64))
        m1 = integrate_mass(estimate_density_mbe(cloud, grid, params))
        m2 = integrate_mass(estimate_density_mbe(cloud, grid2, params))
        assert m1 == pytest.approx(1.0, rel=0.10)
        assert m1 == pytest.approx(m2, rel=0.01)


class TestFieldFile:
    def test_round_trip(self, tmp_path, rng):
        grid = GridBox(vmin=(-1, 0, 2), vmax=(1, 3, 4), shape=(5, 6, 7))
        dens = DensityField(grid=grid, values=rng.random((5, 6, 7)).astype(np.float32))
        p = tmp_path / "f.xrdf"
        save_field(dens, p)
        back = load_field(p)
        assert back.grid == grid
        assert np.array_equal(back.values, dens.values)

    def test_truncated(self, tmp_path, rng):
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(4, 4, 4))
        dens = DensityField(grid=grid, values=rng.random((4, 4, 4)).astype(np.float32))
        p = tmp_path / "f.xrdf"
        save_field(dens, p)
        data = p.read_bytes()
        p.write_bytes(data[:-5])
        with pytest.raises(FieldError, match="bytes"):
            load_field(p)

    def test_bad_magic_and_version(self, tmp_path, rng):
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(2, 2, 2))
        dens = DensityField(grid=grid, values=rng.random((2, 2, 2)).astype(np.float32))
        p = tmp_path / "f.xrdf"
        save_field(dens, p)
        data = bytearray(p.read_bytes())
        data[:4] = b"NOPE"
        p.write_bytes(bytes(data))
        with pytest.raises(FieldError, match="magic"):
            load_field(p)
        data = bytearray(save_and_read(dens, tmp_path))
        data[4] = 99
        p.write_bytes(bytes(data))
        with pytest.raises(FieldError, match="version"):
            load_field(p)

    def test_golden_byte_layout(self, tmp_path):
        # known little-endian pattern: header fields then 1.0f at node (1,0,0)
        grid = GridBox(vmin=(0, 0, 0), vmax=(1, 1, 1), shape=(2, 1, 1))
        values = np.array([[[0.0]], [[1.0]]], dtype=np.float32)
        dens = DensityField(grid=grid, values=values)
        p = tmp_path / "g.xrdf"
        save_field(dens, p)
        raw = p.read_bytes()
        assert raw[:4] == b"XRDF"
        assert struct.unpack_from("<I", raw, 4)[0] == 1
        assert struct.unpack_from("<6d", raw, 8) == (0, 0, 0, 1, 1, 1)
        assert struct.unpack_from("<3I", raw, 56) == (2, 1, 1)
        # x-fastest: node (0,0,0) first, then (1,0,0) = 1.0f = 00 00 80 3f
        assert raw[68:76] == bytes([0, 0, 0, 0, 0, 0, 0x80, 0x3F])


def save_and_read(dens, tmp_path) -> bytes:
    p = tmp_path / "tmp.xrdf"
    save_field(dens, p)
    return p.read_bytes()
