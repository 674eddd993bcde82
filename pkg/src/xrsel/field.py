"""Point clouds, the regular density grid, and adaptive kernel density estimation.

The density field lives on a regular grid of cell-centered nodes over an
axis-aligned box; values are stored float32 (the on-disk dtype), x-fastest.
Estimation is the two-pass adaptive scheme: a fixed-bandwidth Epanechnikov
pilot at the data points, then per-point bandwidths scaled by the pilot
density relative to its geometric mean, then a final scatter of truncated
kernels onto the grid nodes.

Summation order is fixed (ascending point index at every node) so that a
direct per-point reference sum reproduces grid values bit for bit.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

# integral of the profile (1 - |x|^2) over the unit ball
EPANECHNIKOV_NORM_3D = 8.0 * math.pi / 15.0

DEFAULT_RESOLUTION = (128, 128, 128)

XRDF_MAGIC = b"XRDF"
XRDF_VERSION = 1


class FieldError(ValueError):
    """Invalid cloud, grid, or estimation input."""


@dataclass
class PointCloud:
    """Unstructured points with optional per-point scalar attributes."""

    positions: np.ndarray
    attributes: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise FieldError(f"positions must be (N, 3), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise FieldError("positions contain non-finite values")
        self.positions = p
        for name, a in self.attributes.items():
            a = np.asarray(a)
            if a.shape[0] != p.shape[0]:
                raise FieldError(f"attribute '{name}' length {a.shape[0]} != {p.shape[0]} points")
            self.attributes[name] = a

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass(eq=False)
class GridBox:
    """Axis-aligned box with a regular lattice of cell-centered nodes.

    Node (ix, iy, iz) sits at ``vmin + (i + 0.5) * spacing`` per axis; the
    flat node index is x-fastest: ``ix + nx * (iy + ny * iz)``.
    """

    vmin: np.ndarray
    vmax: np.ndarray
    shape: tuple[int, int, int] = DEFAULT_RESOLUTION

    def __post_init__(self):
        self.vmin = np.asarray(self.vmin, dtype=np.float64)
        self.vmax = np.asarray(self.vmax, dtype=np.float64)
        if self.vmin.shape != (3,) or self.vmax.shape != (3,):
            raise FieldError("grid box corners must be 3-vectors")
        if not np.all(np.isfinite(self.vmin)) or not np.all(np.isfinite(self.vmax)):
            raise FieldError("grid box corners must be finite")
        if not np.all(self.vmax > self.vmin):
            raise FieldError(f"degenerate grid box: min {self.vmin}, max {self.vmax}")
        self.shape = tuple(int(n) for n in self.shape)
        if len(self.shape) != 3 or any(n < 1 for n in self.shape):
            raise FieldError(f"grid resolution must be three positive ints, got {self.shape}")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GridBox)
            and self.shape == other.shape
            and np.array_equal(self.vmin, other.vmin)
            and np.array_equal(self.vmax, other.vmax)
        )

    @property
    def spacing(self) -> np.ndarray:
        return (self.vmax - self.vmin) / np.asarray(self.shape, dtype=np.float64)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.vmax - self.vmin))

    @property
    def node_count(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Node center coordinates along each axis."""
        out = []
        for a in range(3):
            n = self.shape[a]
            step = (self.vmax[a] - self.vmin[a]) / n
            out.append(self.vmin[a] + (np.arange(n, dtype=np.float64) + 0.5) * step)
        return out[0], out[1], out[2]

    def node_position(self, ix: int, iy: int, iz: int) -> np.ndarray:
        xs, ys, zs = self.axis_coords()
        return np.array([xs[ix], ys[iy], zs[iz]])

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= self.vmin) & (p <= self.vmax), axis=1)


@dataclass
class DensityField:
    """Scalar density sampled at the grid nodes (float32, shape = grid.shape)."""

    grid: GridBox
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.shape != self.grid.shape:
            raise FieldError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise FieldError("density values contain non-finite entries")
        if np.any(v < 0):
            raise FieldError("density values must be non-negative")
        self.values = v

    @property
    def max_value(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class BandwidthSet:
    """Pilot bandwidth and the derived per-point adaptive bandwidths."""

    pilot_bandwidth: float
    bandwidths: np.ndarray  # per-point adaptive radius, lambda_i * h0
    alpha: float

    def __post_init__(self):
        b = np.asarray(self.bandwidths, dtype=np.float64)
        if self.pilot_bandwidth <= 0 or np.any(b <= 0):
            raise FieldError("bandwidths must be positive")
        object.__setattr__(self, "bandwidths", b)


@dataclass(frozen=True)
class MbeParams:
    """Estimator configuration; ``pilot_bandwidth=None`` derives it from the data."""

    pilot_bandwidth: float | None = None
    alpha: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise FieldError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.pilot_bandwidth is not None and self.pilot_bandwidth <= 0:
            raise FieldError("pilot bandwidth must be positive")


# -- cloud I/O ----------------------------------------------------------------

def load_cloud(path, fmt: str | None = None) -> PointCloud:
    """Read a point cloud from CSV ("x,y,z[,attr...]", optional header) or .npz."""
    path = str(path)
    if fmt is None:
        fmt = "npz" if path.endswith(".npz") else "csv"
    if fmt == "npz":
        with np.load(path) as d:
            positions = d["positions"]
            attrs = {k[5:]: d[k] for k in d.files if k.startswith("attr_")}
        return PointCloud(positions=positions, attributes=attrs)
    if fmt != "csv":
        raise FieldError(f"unknown cloud format '{fmt}'")

    rows: list[list[float]] = []
    names: list[str] | None = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                if lineno == 1:
                    names = parts  # header line
                    continue
                raise FieldError(f"{path}:{lineno}: malformed row {line!r}") from None
            if len(vals) < 3:
                raise FieldError(f"{path}:{lineno}: expected at least 3 columns, got {len(vals)}")
            if rows and len(vals) != len(rows[0]):
                raise FieldError(f"{path}:{lineno}: inconsistent column count")
            rows.append(vals)
    if not rows:
        raise FieldError(f"{path}: no points found")
    data = np.asarray(rows, dtype=np.float64)
    attrs = {}
    for k in range(3, data.shape[1]):
        name = names[k] if names and len(names) > k else f"attr{k - 3}"
        attrs[name] = data[:, k].copy()
    return PointCloud(positions=data[:, :3], attributes=attrs)


def save_cloud(cloud: PointCloud, path, fmt: str | None = None) -> None:
    path = str(path)
    if fmt is None:
        fmt = "npz" if path.endswith(".npz") else "csv"
    if fmt == "npz":
        np.savez(path, positions=cloud.positions,
                 **{f"attr_{k}": v for k, v in cloud.attributes.items()})
        return
    names = list(cloud.attributes)
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(["x", "y", "z"] + names) + "\n")
        cols = [cloud.attributes[n] for n in names]
        for i, p in enumerate(cloud.positions):
            row = [repr(float(c)) for c in p] + [repr(float(c[i])) for c in cols]
            f.write(",".join(row) + "\n")


# -- grid construction --------------------------------------------------------

def compute_bounds(cloud: PointCloud, padding_fraction: float = 0.05,
                   resolution: tuple[int, int, int] = DEFAULT_RESOLUTION) -> GridBox:
    """Axis-aligned bounds of the cloud, expanded per side by a fraction of the diagonal."""
    if len(cloud) == 0:
        raise FieldError("cannot compute bounds of an empty cloud")
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    pad = padding_fraction * float(np.linalg.norm(hi - lo))
    lo = lo - pad
    hi = hi + pad
    if not np.all(hi > lo):
        raise FieldError("degenerate bounding box; a single point needs explicit padding")
    return GridBox(vmin=lo, vmax=hi, shape=resolution)


# -- estimation ---------------------------------------------------------------

def mean_nn_distance(positions: np.ndarray) -> float:
    if positions.shape[0] < 2:
        raise FieldError("nearest-neighbor distance needs at least 2 points")
    tree = cKDTree(positions)
    d, _ = tree.query(positions, k=2)
    return float(np.mean(d[:, 1]))


def pilot_density(positions: np.ndarray, h0: float) -> np.ndarray:
    """Fixed-bandwidth Epanechnikov density evaluated at the data points.

    Includes each point's own kernel, so every value is strictly positive.
    Per-point accumulation runs in ascending neighbor index order.
    """
    n = positions.shape[0]
    tree = cKDTree(positions)
    neighbor_lists = tree.query_ball_point(positions, h0)
    w0 = 1.0 / (float(n) * ((h0 * h0) * h0) * EPANECHNIKOV_NORM_3D)
    h2 = h0 * h0
    out = np.zeros(n, dtype=np.float64)
    idx_j = np.concatenate([np.full(len(nb), j, dtype=np.intp)
                            for j, nb in enumerate(neighbor_lists)])
    idx_i = np.concatenate([np.sort(np.asarray(nb, dtype=np.intp))
                            for nb in neighbor_lists])
    diff = positions[idx_i] - positions[idx_j]
    d2 = (diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1]) + diff[:, 2] * diff[:, 2]
    u2 = d2 / h2
    term = np.where(u2 < 1.0, (1.0 - u2) * w0, 0.0)
    np.add.at(out, idx_j, term)
    if not np.all(out > 0):
        raise FieldError("pilot density vanished at some points")
    return out


def compute_bandwidths(cloud: PointCloud, params: MbeParams | None = None) -> BandwidthSet:
    """Two-pass bandwidth derivation: pilot KDE then adaptive scaling.

    lambda_i = (pilot_i / g)^(-alpha) with g the geometric mean of the pilot
    densities; the stored per-point bandwidth is lambda_i * h0.  No clamping
    is applied to lambda.
    """
    params = params or MbeParams()
    if len(cloud) == 0:
        raise FieldError("cannot estimate density of an empty cloud")
    h0 = params.pilot_bandwidth
    if h0 is None:
        h0 = 2.0 * mean_nn_distance(cloud.positions)
    pilot = pilot_density(cloud.positions, h0)
    g = float(np.exp(np.mean(np.log(pilot))))
    lam = (pilot / g) ** (-params.alpha)
    return BandwidthSet(pilot_bandwidth=h0, bandwidths=lam * h0, alpha=params.alpha)


def estimate_density_mbe(cloud: PointCloud, grid: GridBox,
                         params: MbeParams | None = None,
                         bandwidths: BandwidthSet | None = None) -> DensityField:
    """Scatter truncated adaptive Epanechnikov kernels onto the grid nodes.

    Node value = sum_i (1 - u_i^2) / (N * r_i^3 * c) for u_i < 1, with
    u_i = |node - x_i| / r_i, r_i the adaptive bandwidth of point i, and
    c the 3D kernel normalization.  Points are applied in ascending index
    order so each node's accumulation order is reproducible; the result is
    rounded once to float32 at the end.
    """
    if bandwidths is None:
        bandwidths = compute_bandwidths(cloud, params)
    positions = cloud.positions
    n = float(positions.shape[0])
    radii = bandwidths.bandwidths
    if radii.shape[0] != positions.shape[0]:
        raise FieldError("bandwidth count does not match point count")
    xs, ys, zs = grid.axis_coords()
    acc = np.zeros(grid.shape, dtype=np.float64)
    for i in range(positions.shape[0]):
        px, py, pz = positions[i]
        ri = float(radii[i])
        r2 = ri * ri
        w = 1.0 / ((n * (r2 * ri)) * EPANECHNIKOV_NORM_3D)
        ix0 = int(np.searchsorted(xs, px - ri, side="left"))
        ix1 = int(np.searchsorted(xs, px + ri, side="right"))
        iy0 = int(np.searchsorted(ys, py - ri, side="left"))
        iy1 = int(np.searchsorted(ys, py + ri, side="right"))
        iz0 = int(np.searchsorted(zs, pz - ri, side="left"))
        iz1 = int(np.searchsorted(zs, pz + ri, side="right"))
        if ix0 >= ix1 or iy0 >= iy1 or iz0 >= iz1:
            continue
        dx = xs[ix0:ix1] - px
        dy = ys[iy0:iy1] - py
        dz = zs[iz0:iz1] - pz
        dx2, dy2, dz2 = dx * dx, dy * dy, dz * dz
        d2 = (dx2[:, None, None] + dy2[None, :, None]) + dz2[None, None, :]
        u2 = d2 / r2
        m = u2 < 1.0
        if not m.any():
            continue
        sub = acc[ix0:ix1, iy0:iy1, iz0:iz1]
        sub[m] += (1.0 - u2[m]) * w
    if not np.all(np.isfinite(acc)):
        raise FieldError("density estimation produced non-finite values")
    return DensityField(grid=grid, values=acc.astype(np.float32))


# -- sampling -----------------------------------------------------------------

def sample_density_many(field: DensityField, points) -> np.ndarray:
    """Trilinear interpolation of node values; exactly 0 outside the box.

    Between the box faces and the outermost node layer the nearest node
    value extends constantly (interpolation weights are clamped).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out = np.zeros(pts.shape[0], dtype=np.float64)
    inside = field.grid.contains(pts)
    if not inside.any():
        return out
    p = pts[inside]
    axes = field.grid.axis_coords()
    idx = []
    frac = []
    for a in range(3):
        xs = axes[a]
        n = field.grid.shape[a]
        if n == 1:
            idx.append(np.zeros(p.shape[0], dtype=np.intp))
            frac.append(np.zeros(p.shape[0]))
            continue
        i0 = np.clip(np.searchsorted(xs, p[:, a], side="right") - 1, 0, n - 2)
        f = (p[:, a] - xs[i0]) / (xs[i0 + 1] - xs[i0])
        idx.append(i0)
        frac.append(np.clip(f, 0.0, 1.0))
    ix, iy, iz = idx
    fx, fy, fz = frac
    v = field.values
    nx1 = min(1, field.grid.shape[0] - 1)
    ny1 = min(1, field.grid.shape[1] - 1)
    nz1 = min(1, field.grid.shape[2] - 1)
    c000 = v[ix, iy, iz]
    c100 = v[ix + nx1, iy, iz]
    c010 = v[ix, iy + ny1, iz]
    c110 = v[ix + nx1, iy + ny1, iz]
    c001 = v[ix, iy, iz + nz1]
    c101 = v[ix + nx1, iy, iz + nz1]
    c011 = v[ix, iy + ny1, iz + nz1]
    c111 = v[ix + nx1, iy + ny1, iz + nz1]
    c00 = c000 * (1.0 - fx) + c100 * fx
    c10 = c010 * (1.0 - fx) + c110 * fx
    c01 = c001 * (1.0 - fx) + c101 * fx
    c11 = c011 * (1.0 - fx) + c111 * fx
    c0 = c00 * (1.0 - fy) + c10 * fy
    c1 = c01 * (1.0 - fy) + c11 * fy
    out[inside] = c0 * (1.0 - fz) + c1 * fz
    return out


def sample_density(field: DensityField, point) -> float:
    return float(sample_density_many(field, point)[0])


def integrate_mass(field: DensityField) -> float:
    """Midpoint-rule integral: sum of node values times the cell volume."""
    return float(np.sum(field.values, dtype=np.float64)) * field.grid.cell_volume


# -- field file format ---------------------------------------------------------

_HEADER = struct.Struct("<4sI6d3I")


def save_field(field: DensityField, path) -> None:
    """Write the XRDF binary format (little-endian, values x-fastest float32)."""
    g = field.grid
    header = _HEADER.pack(
        XRDF_MAGIC, XRDF_VERSION,
        g.vmin[0], g.vmin[1], g.vmin[2],
        g.vmax[0], g.vmax[1], g.vmax[2],
        g.shape[0], g.shape[1], g.shape[2],
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(field.values.ravel(order="F"), dtype="<f4").tobytes())


def load_field(path) -> DensityField:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise FieldError(f"{path}: truncated field file header")
    magic, version, *rest = _HEADER.unpack_from(raw, 0)
    if magic != XRDF_MAGIC:
        raise FieldError(f"{path}: bad magic {magic!r}")
    if version != XRDF_VERSION:
        raise FieldError(f"{path}: unsupported version {version}")
    vmin = np.array(rest[0:3])
    vmax = np.array(rest[3:6])
    shape = tuple(int(n) for n in rest[6:9])
    count = shape[0] * shape[1] * shape[2]
    expected = _HEADER.size + 4 * count
    if len(raw) != expected:
        raise FieldError(f"{path}: expected {expected} bytes, found {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f4", count=count, offset=_HEADER.size)
    values = flat.reshape(shape, order="F").astype(np.float32)
    return DensityField(grid=GridBox(vmin=vmin, vmax=vmax, shape=shape), values=values)
