"""Density-aware selection: brush and lasso volumes, thresholding, extraction.

All techniques share one scheme: build a constraining node mask over the
density grid (a capsule around a brushed path, a lasso frustum, or their
union), take the arithmetic mean of the node densities inside it as the
threshold, keep the nodes strictly denser than that, and extract the
matching isosurface.  Operations are pure; node masks are boolean arrays
over the grid with x-fastest flat ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import mc_tables
from .field import DensityField, GridBox, PointCloud, sample_density_many
from .geometry import HeadPose, ProjectionSetup, Ray, SurfaceGeometry, surface_ray
from .traces import SegmentedTrace, resample_polyline

# capsule radius default, as a fraction of the grid diagonal
DEFAULT_BRUSH_RADIUS_FRACTION = 0.025


class SelectionError(ValueError):
    """Invalid selection input."""


class EmptyRegionError(SelectionError):
    """The constraining region contains no grid nodes."""


@dataclass
class NodeMask:
    """Boolean membership per grid node."""

    grid: GridBox
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.dtype != np.bool_:
            b = b.astype(bool)
        if b.shape != self.grid.shape:
            raise SelectionError(f"mask shape {b.shape} != grid shape {self.grid.shape}")
        self.bits = b

    @classmethod
    def empty(cls, grid: GridBox) -> "NodeMask":
        return cls(grid=grid, bits=np.zeros(grid.shape, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def union(self, other: "NodeMask") -> "NodeMask":
        self._check_same_grid(other)
        return NodeMask(grid=self.grid, bits=self.bits | other.bits)

    def difference(self, other: "NodeMask") -> "NodeMask":
        self._check_same_grid(other)
        return NodeMask(grid=self.grid, bits=self.bits & ~other.bits)

    def _check_same_grid(self, other: "NodeMask") -> None:
        if self.grid != other.grid:
            raise SelectionError("node masks live on different grids")


@dataclass(frozen=True)
class Lasso:
    """Closed polygon in surface-local 2D coordinates (meters)."""

    vertices: np.ndarray
    closed: bool = True

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise SelectionError(f"a lasso needs >= 3 planar vertices, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise SelectionError("lasso vertices must be finite")
        object.__setattr__(self, "vertices", v)


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise SelectionError("triangle indices out of range")
        self.vertices = v
        self.triangles = t

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(vertices=np.zeros((0, 3)), triangles=np.zeros((0, 3), dtype=np.int64))

    def __len__(self) -> int:
        return len(self.triangles)


@dataclass
class SelectionResult:
    """Output of one selection: node volume, threshold, points, isosurface."""

    technique: str
    mask: NodeMask           # selected volume V
    v_cr: NodeMask           # constraining region the threshold was taken over
    rho0: float | None       # None for an empty constraining region
    point_indices: np.ndarray
    mesh: TriangleMesh
    field: DensityField
    diagnostics: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if np.any(self.mask.bits & ~self.v_cr.bits):
            raise SelectionError("selected nodes leak outside the constraining region")
        if self.rho0 is not None and np.any(
            self.field.values[self.mask.bits] <= np.float64(self.rho0)
        ):
            raise SelectionError("selected node at or below the density threshold")
        self.point_indices = np.asarray(self.point_indices, dtype=np.int64)

    @property
    def is_empty(self) -> bool:
        return self.rho0 is None

    def to_json_dict(self) -> dict:
        return {
            "technique": self.technique,
            "rho0": self.rho0,
            "selected_points": [int(i) for i in self.point_indices],
            "node_count": self.mask.count,
            "N_VCR": self.v_cr.count,
        }


def _empty_result(technique: str, field: DensityField, **diag) -> SelectionResult:
    return SelectionResult(
        technique=technique,
        mask=NodeMask.empty(field.grid),
        v_cr=NodeMask.empty(field.grid),
        rho0=None,
        point_indices=np.zeros(0, dtype=np.int64),
        mesh=TriangleMesh.empty(),
        field=field,
        diagnostics=diag,
    )


# -- node coordinate helpers ---------------------------------------------------

def _node_linear_form(grid: GridBox, coeff: np.ndarray, offset: float) -> np.ndarray:
    """Evaluate coeff . node + offset at every grid node, shape = grid.shape."""
    xs, ys, zs = grid.axis_coords()
    return ((coeff[0] * xs)[:, None, None] + (coeff[1] * ys)[None, :, None]) \
        + ((coeff[2] * zs)[None, None, :] + offset)


def node_plane_distance(grid: GridBox, surface: SurfaceGeometry) -> np.ndarray:
    """Signed distance of every node to the surface plane (positive above)."""
    n = surface.axis_z
    return _node_linear_form(grid, n, -float(np.dot(n, surface.center)))


# -- geometric predicates --------------------------------------------------------

def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd (crossing parity) point-in-polygon test, self-intersection safe."""
    pts = np.atleast_2d(points)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(pts.shape[0], dtype=bool)
    k = polygon.shape[0]
    j = k - 1
    for i in range(k):
        xi, yi = polygon[i]
        xj, yj = polygon[j]
        straddles = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
        inside ^= straddles & (x < x_cross)
        j = i
    return inside


def _segment_distance_sq(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared distance from points (..., 3) to segment a-b."""
    ab = b - a
    denom = float(np.dot(ab, ab))
    d = p - a
    if denom == 0.0:
        return np.sum(d * d, axis=-1)
    t = np.clip(np.sum(d * ab, axis=-1) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    diff = p - closest
    return np.sum(diff * diff, axis=-1)


# -- region construction ---------------------------------------------------------

def brush_voi(path, radius: float, grid: GridBox,
              spacing: float | None = None) -> NodeMask:
    """Capsule union around the resampled brush path.

    A node belongs to the volume when its distance to any polyline segment is
    at most ``radius``.  Default resample spacing is one grid cell edge.
    """
    pts = np.atleast_2d(np.asarray(path, dtype=np.float64))
    if pts.shape[0] == 0:
        raise SelectionError("brush path is empty")
    if radius <= 0:
        raise SelectionError(f"brush radius must be positive, got {radius}")
    if spacing is None:
        spacing = float(grid.spacing.min())
    pts = resample_polyline(pts, spacing)
    bits = np.zeros(grid.shape, dtype=bool)
    xs, ys, zs = grid.axis_coords()
    segments = [(pts[0], pts[0])] if pts.shape[0] == 1 else list(zip(pts[:-1], pts[1:]))
    for a, b in segments:
        lo = np.minimum(a, b) - radius
        hi = np.maximum(a, b) + radius
        ix0 = int(np.searchsorted(xs, lo[0], side="left"))
        ix1 = int(np.searchsorted(xs, hi[0], side="right"))
        iy0 = int(np.searchsorted(ys, lo[1], side="left"))
        iy1 = int(np.searchsorted(ys, hi[1], side="right"))
        iz0 = int(np.searchsorted(zs, lo[2], side="left"))
        iz1 = int(np.searchsorted(zs, hi[2], side="right"))
        if ix0 >= ix1 or iy0 >= iy1 or iz0 >= iz1:
            continue
        gx, gy, gz = np.meshgrid(xs[ix0:ix1], ys[iy0:iy1], zs[iz0:iz1], indexing="ij")
        window = np.stack([gx, gy, gz], axis=-1)
        d2 = _segment_distance_sq(window, a, b)
        bits[ix0:ix1, iy0:iy1, iz0:iz1] |= d2 <= radius * radius
    return NodeMask(grid=grid, bits=bits)


def clip_mask_above(mask: NodeMask, surface: SurfaceGeometry) -> NodeMask:
    """Keep only nodes strictly above the surface plane."""
    above = node_plane_distance(mask.grid, surface) > 0.0
    return NodeMask(grid=mask.grid, bits=mask.bits & above)


def lasso_from_surface_samples(samples, surface: SurfaceGeometry) -> Lasso:
    """Close the on-surface stroke samples into a lasso in surface-local 2D."""
    pts = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    local = np.stack(
        [
            (pts - surface.center) @ surface.axis_x,
            (pts - surface.center) @ surface.axis_y,
        ],
        axis=1,
    )
    distinct = [local[0]]
    for p in local[1:]:
        if not np.array_equal(p, distinct[-1]):
            distinct.append(p)
    if len(distinct) > 1 and np.array_equal(distinct[0], distinct[-1]):
        distinct.pop()
    if len(distinct) < 3:
        raise SelectionError(f"lasso needs >= 3 distinct surface samples, got {len(distinct)}")
    return Lasso(vertices=np.stack(distinct))


def lasso_frustum_mask(lasso: Lasso, setup: ProjectionSetup, grid: GridBox,
                       half_space: str = "all") -> NodeMask:
    """Nodes whose projection through the surface camera lands inside the lasso.

    Inclusion additionally requires the node to project onto the visible
    screen window and in front of the eye, within the far plane.  With
    ``half_space="below_only"`` nodes on or below the surface plane are kept
    (the on-plane layer counts as below so the above/below split is half-open).
    """
    if half_space not in ("all", "below_only"):
        raise SelectionError(f"unknown half_space {half_space!r}")
    r = setup.view_rotation
    eye = setup.eye
    cam_x = _node_linear_form(grid, r[0], -float(np.dot(r[0], eye)))
    cam_y = _node_linear_form(grid, r[1], -float(np.dot(r[1], eye)))
    cam_z = _node_linear_form(grid, r[2], -float(np.dot(r[2], eye)))
    w = -cam_z
    m = setup.projection
    ok = w > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ndc_x = (m[0, 0] * cam_x + m[0, 2] * cam_z) / w
        ndc_y = (m[1, 1] * cam_y + m[1, 2] * cam_z) / w
        depth = (m[2, 2] * cam_z + m[2, 3]) / w
    ok &= (np.abs(ndc_x) <= 1.0) & (np.abs(ndc_y) <= 1.0) & (depth <= 1.0)
    if half_space == "below_only":
        # camera z axis is the surface normal; the plane sits at cam_z == -near
        ok &= cam_z + setup.near <= 0.0
    if not ok.any():
        return NodeMask.empty(grid)
    # the near-plane window spans the surface rectangle, so local (u, v)
    # relate to NDC by the window half-extents
    half_u = 0.5 * (setup.corner_tr[0] - setup.corner_bl[0])
    half_v = 0.5 * (setup.corner_tr[1] - setup.corner_bl[1])
    uv = np.stack([ndc_x[ok] * half_u, ndc_y[ok] * half_v], axis=1)
    hit = points_in_polygon(uv, lasso.vertices)
    bits = np.zeros(grid.shape, dtype=bool)
    bits[ok] = hit
    return NodeMask(grid=grid, bits=bits)


# -- thresholding ---------------------------------------------------------------

def threshold_mean_density(field: DensityField, mask: NodeMask) -> float:
    """Arithmetic mean of the node densities inside the mask (exactly summed)."""
    if mask.grid != field.grid:
        raise SelectionError("mask grid does not match field grid")
    flat = field.values.ravel(order="F")[mask.bits.ravel(order="F")]
    if flat.size == 0:
        raise EmptyRegionError("cannot take the mean density of an empty region")
    return math.fsum(flat.astype(np.float64).tolist()) / flat.size


def select_volume(field: DensityField, mask: NodeMask, rho0: float) -> NodeMask:
    """Nodes of the constraining region strictly denser than the threshold."""
    if not math.isfinite(rho0):
        raise SelectionError(f"density threshold must be finite, got {rho0}")
    return NodeMask(grid=field.grid, bits=mask.bits & (field.values > np.float64(rho0)))


# -- ray probes -------------------------------------------------------------------

def _clip_ray_to_box(ray: Ray, grid: GridBox) -> tuple[float, float] | None:
    t0, t1 = 0.0, np.inf
    for a in range(3):
        o, d = ray.origin[a], ray.direction[a]
        if d == 0.0:
            if o < grid.vmin[a] or o > grid.vmax[a]:
                return None
            continue
        ta = (grid.vmin[a] - o) / d
        tb = (grid.vmax[a] - o) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    if t1 < t0:
        return None
    return t0, t1


# inverse Vandermonde for cubic fitting at normalized abscissae [0, 1/3, 2/3, 1]
_CUBIC_NODES = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
_CUBIC_FIT = np.linalg.inv(np.vander(_CUBIC_NODES, 4, increasing=True))


def _ray_span_breaks(ray: Ray, grid: GridBox, t0: float, t1: float) -> np.ndarray:
    """Ray parameters where the interpolation polynomial can change."""
    breaks = [np.array([t0, t1])]
    axes = grid.axis_coords()
    for a in range(3):
        d = ray.direction[a]
        if d == 0.0:
            continue
        t = (axes[a] - ray.origin[a]) / d
        breaks.append(t[(t > t0) & (t < t1)])
    return np.unique(np.concatenate(breaks))


def ray_max_density(ray: Ray, field: DensityField,
                    step: float | None = None) -> np.ndarray | None:
    """Location of maximum interpolated density along the ray inside the box.

    The interpolated profile is piecewise cubic between cell-plane crossings,
    so each span's maximum is found from its exact cubic (four samples pin
    the polynomial, the derivative roots give interior extrema).  The result
    therefore dominates a fixed-step traversal at any resolution; ``step``
    is accepted for interface compatibility with the traversal-style probes.
    Ties go to the smallest parameter (nearest the viewer); a ray that
    misses the box or sees only zero density gives None.
    """
    if step is not None and step <= 0:
        raise SelectionError(f"ray step must be positive, got {step}")
    clip = _clip_ray_to_box(ray, field.grid)
    if clip is None:
        return None
    t0, t1 = clip
    if t1 <= t0:
        pt = ray.origin + t0 * ray.direction
        val = float(sample_density_many(field, pt)[0])
        return pt if val > 0.0 else None
    breaks = _ray_span_breaks(ray, field.grid, t0, t1)
    lo = breaks[:-1]
    width = np.diff(breaks)
    keep = width > 0.0
    lo, width = lo[keep], width[keep]
    # four exact samples per span pin its cubic
    ts = (lo[:, None] + width[:, None] * _CUBIC_NODES[None, :]).ravel()
    dens = sample_density_many(field, ray.origin + ts[:, None] * ray.direction)
    samples = dens.reshape(-1, 4)
    coeff = samples @ _CUBIC_FIT.T  # rows: c0 + c1 s + c2 s^2 + c3 s^3
    cand_t = [ts]
    cand_v = [dens]
    # stationary points: c1 + 2 c2 s + 3 c3 s^2 = 0 within (0, 1)
    aa = 3.0 * coeff[:, 3]
    bb = 2.0 * coeff[:, 2]
    cc = coeff[:, 1]
    scale = np.abs(samples).max(axis=1) + 1e-300
    quad = np.abs(aa) > 1e-12 * scale
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = bb * bb - 4.0 * aa * cc
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (1.0, -1.0):
            s = np.where(quad, (-bb + sign * sq) / (2.0 * aa), -1.0)
            s = np.where(quad & (disc >= 0.0), s, -1.0)
            ok = (s > 0.0) & (s < 1.0)
            if ok.any():
                t = lo[ok] + s[ok] * width[ok]
                cand_t.append(t)
                cand_v.append(sample_density_many(field, ray.origin + t[:, None] * ray.direction))
        lin = ~quad & (np.abs(bb) > 1e-12 * scale)
        s = np.where(lin, -cc / bb, -1.0)
        ok = (s > 0.0) & (s < 1.0)
        if ok.any():
            t = lo[ok] + s[ok] * width[ok]
            cand_t.append(t)
            cand_v.append(sample_density_many(field, ray.origin + t[:, None] * ray.direction))
    all_t = np.concatenate(cand_t)
    all_v = np.concatenate(cand_v)
    if not np.any(all_v > 0.0):
        return None
    best_v = all_v.max()
    best_t = all_t[all_v == best_v].min()
    return ray.origin + best_t * ray.direction


def ray_accumulated_jump(ray: Ray, field: DensityField,
                         step: float | None = None) -> np.ndarray | None:
    """Depth pick from the accumulated density profile along the ray.

    Front-to-back accumulation rises fastest inside the densest structure;
    the pick is where the accumulation levels off hardest after that rise,
    i.e. the far edge of the steepest jump.  Ties resolve nearest first.
    """
    if step is None:
        step = 0.5 * float(field.grid.spacing.min())
    if step <= 0:
        raise SelectionError(f"ray step must be positive, got {step}")
    clip = _clip_ray_to_box(ray, field.grid)
    if clip is None:
        return None
    t0, t1 = clip
    count = int(math.floor((t1 - t0) / step)) + 1
    ts = t0 + step * np.arange(count, dtype=np.float64)
    dens = sample_density_many(field, ray.origin + ts[:, None] * ray.direction)
    if not np.any(dens > 0.0):
        return None
    k_rise = int(np.argmax(dens))
    if k_rise >= count - 1:
        k_end = k_rise
    else:
        second_diff = dens[k_rise + 1:] - dens[k_rise:-1]
        k_end = k_rise + int(np.argmin(second_diff))
    return ray.origin + float(ts[k_end]) * ray.direction


# -- technique drivers -------------------------------------------------------------

def default_brush_radius(grid: GridBox) -> float:
    return DEFAULT_BRUSH_RADIUS_FRACTION * grid.diagonal


def _finish_selection(technique: str, field: DensityField, v_cr: NodeMask,
                      cloud: PointCloud | None) -> SelectionResult:
    rho0 = threshold_mean_density(field, v_cr)
    mask = select_volume(field, v_cr, rho0)
    mesh = marching_cubes(field, rho0, v_cr)
    if cloud is not None:
        points = points_in_selection(cloud, field, v_cr, rho0)
    else:
        points = np.zeros(0, dtype=np.int64)
    return SelectionResult(
        technique=technique,
        mask=mask,
        v_cr=v_cr,
        rho0=rho0,
        point_indices=points,
        mesh=mesh,
        field=field,
        diagnostics={"n_vcr": v_cr.count, "n_selected_nodes": mask.count},
    )


def brush_select(path, field: DensityField, radius: float | None = None,
                 cloud: PointCloud | None = None,
                 technique: str = "brush") -> SelectionResult:
    """Select dense structure inside a capsule around a brushed path."""
    if radius is None:
        radius = default_brush_radius(field.grid)
    v_init = brush_voi(path, radius, field.grid)
    if v_init.count == 0:
        return _empty_result(technique, field, n_vcr=0)
    return _finish_selection(technique, field, v_init, cloud)


def combined_input_path(trace: SegmentedTrace, field: DensityField, head: HeadPose,
                        step: float | None = None) -> np.ndarray:
    """Merge air samples with per-ray density maxima of the surface samples.

    Every surface sample casts a ray away from the head; its density argmax
    stands in for the unreachable depth.  Segment order of the original
    stroke is preserved; surface samples whose ray misses all density are
    dropped.
    """
    parts: list[np.ndarray] = []
    for space, a, b in trace.segments:
        if space == "air":
            parts.append(trace.positions[a:b])
            continue
        pois = []
        for s in trace.positions[a:b]:
            poi = ray_max_density(surface_ray(s, head), field, step)
            if poi is not None:
                pois.append(poi)
        if pois:
            parts.append(np.stack(pois))
    if not parts:
        return np.zeros((0, 3))
    return np.concatenate(parts, axis=0)


def brush_wyp(trace: SegmentedTrace, field: DensityField, head: HeadPose,
              radius: float | None = None, cloud: PointCloud | None = None,
              step: float | None = None) -> SelectionResult:
    """Cross-space brush: air samples plus depth-resolved surface samples."""
    path = combined_input_path(trace, field, head, step)
    if path.shape[0] == 0:
        return _empty_result("brush-wyp", field, n_vcr=0)
    return brush_select(path, field, radius, cloud, technique="brush-wyp")


def brush_lasso(trace: SegmentedTrace, field: DensityField, head: HeadPose,
                surface: SurfaceGeometry, setup: ProjectionSetup,
                radius: float | None = None,
                cloud: PointCloud | None = None) -> SelectionResult:
    """Cross-space selection: brushed volume above, lasso frustum below.

    The air samples contribute a capsule clipped to the half-space above the
    surface; the surface samples close into a lasso whose frustum is clipped
    below.  The union is the constraining region for the density threshold.
    """
    if radius is None:
        radius = default_brush_radius(field.grid)
    grid = field.grid
    air = trace.air_samples
    if air.shape[0] > 0:
        v_a = clip_mask_above(brush_voi(air, radius, grid), surface)
    else:
        v_a = NodeMask.empty(grid)
    surf = trace.surface_samples
    try:
        lasso = lasso_from_surface_samples(surf, surface) if surf.shape[0] >= 3 else None
    except SelectionError:
        lasso = None  # fewer than 3 distinct samples: degenerate lasso
    if lasso is not None:
        v_b = lasso_frustum_mask(lasso, setup, grid, half_space="below_only")
    else:
        v_b = NodeMask.empty(grid)
    v_cr = v_a.union(v_b)
    if v_cr.count == 0:
        raise EmptyRegionError("no region of interest: empty brush volume and lasso frustum")
    result = _finish_selection("brush-lasso", field, v_cr, cloud)
    result.diagnostics["n_va"] = v_a.count
    result.diagnostics["n_vb"] = v_b.count
    return result


def cloud_lasso(lasso: Lasso, field: DensityField, setup: ProjectionSetup,
                cloud: PointCloud | None = None) -> SelectionResult:
    """Classic lasso selection: dense clusters inside the full lasso frustum."""
    f_mask = lasso_frustum_mask(lasso, setup, field.grid, half_space="all")
    if f_mask.count == 0:
        raise EmptyRegionError("no region of interest: lasso frustum misses the grid")
    return _finish_selection("cloud-lasso", field, f_mask, cloud)


# -- isosurface extraction ----------------------------------------------------------

def marching_cubes(field: DensityField, rho0: float, mask: NodeMask | None = None) -> TriangleMesh:
    """Classic 256-case marching cubes at threshold rho0, over cells touching the mask.

    Vertices are welded on shared cell edges so adjacent cells stitch
    exactly; zero-area triangles are dropped.
    """
    if not math.isfinite(rho0):
        raise SelectionError(f"iso threshold must be finite, got {rho0}")
    nx, ny, nz = field.grid.shape
    if min(nx, ny, nz) < 2:
        return TriangleMesh.empty()
    values = field.values
    inside = values > np.float64(rho0)

    cube_index = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.uint16)
    cell_touches_mask = np.zeros((nx - 1, ny - 1, nz - 1), dtype=bool)
    for v, (ox, oy, oz) in enumerate(mc_tables.CORNER_OFFSETS):
        sl = (slice(ox, nx - 1 + ox), slice(oy, ny - 1 + oy), slice(oz, nz - 1 + oz))
        cube_index |= (~inside[sl]).astype(np.uint16) << v
        if mask is not None:
            cell_touches_mask |= mask.bits[sl]
    if mask is None:
        cell_touches_mask[:] = True
    active = (cube_index != 0) & (cube_index != 0xFF) & cell_touches_mask
    cells = np.argwhere(active)
    if cells.shape[0] == 0:
        return TriangleMesh.empty()

    xs, ys, zs = field.grid.axis_coords()
    axes = (xs, ys, zs)
    vertex_of_edge: dict[tuple[int, int], int] = {}
    verts: list[np.ndarray] = []
    tris: list[tuple[int, int, int]] = []

    def corner_flat(cx: int, cy: int, cz: int) -> int:
        return cx + nx * (cy + ny * cz)

    for cx, cy, cz in cells:
        case = int(cube_index[cx, cy, cz])
        tri_edges = mc_tables.CASE_TRIANGLES[case]
        if not tri_edges:
            continue
        edge_vertex: dict[int, int] = {}
        for e in sorted(set(tri_edges)):
            va_i, vb_i = mc_tables.EDGE_CORNERS[e]
            oa = mc_tables.CORNER_OFFSETS[va_i]
            ob = mc_tables.CORNER_OFFSETS[vb_i]
            na = (cx + oa[0], cy + oa[1], cz + oa[2])
            nb = (cx + ob[0], cy + ob[1], cz + ob[2])
            fa, fb = corner_flat(*na), corner_flat(*nb)
            key = (fa, fb) if fa < fb else (fb, fa)
            idx = vertex_of_edge.get(key)
            if idx is None:
                va = float(values[na])
                vb = float(values[nb])
                t = (rho0 - va) / (vb - va)
                pa = np.array([axes[0][na[0]], axes[1][na[1]], axes[2][na[2]]])
                pb = np.array([axes[0][nb[0]], axes[1][nb[1]], axes[2][nb[2]]])
                idx = len(verts)
                verts.append(pa + t * (pb - pa))
                vertex_of_edge[key] = idx
            edge_vertex[e] = idx
        for k in range(0, len(tri_edges), 3):
            i0 = edge_vertex[tri_edges[k]]
            i1 = edge_vertex[tri_edges[k + 1]]
            i2 = edge_vertex[tri_edges[k + 2]]
            if i0 == i1 or i1 == i2 or i0 == i2:
                continue
            p0, p1, p2 = verts[i0], verts[i1], verts[i2]
            if np.all(np.cross(p1 - p0, p2 - p0) == 0.0):
                continue
            tris.append((i0, i1, i2))
    if not tris:
        return TriangleMesh.empty()
    return TriangleMesh(vertices=np.stack(verts), triangles=np.asarray(tris, dtype=np.int64))


# -- point membership and editing -----------------------------------------------------

def points_in_selection(cloud: PointCloud, field: DensityField,
                        v_cr: NodeMask, rho0: float) -> np.ndarray:
    """Indices of cloud points inside the selected volume.

    A point qualifies when its grid cell has at least one corner in the
    selected node volume and its interpolated density strictly exceeds rho0.
    """
    v = select_volume(field, v_cr, rho0)
    pts = cloud.positions
    ok = field.grid.contains(pts)
    if not ok.any():
        return np.zeros(0, dtype=np.int64)
    idx = np.flatnonzero(ok)
    p = pts[idx]
    axes = field.grid.axis_coords()
    corner_hit = np.zeros(p.shape[0], dtype=bool)
    cell = []
    for a in range(3):
        n = field.grid.shape[a]
        i0 = np.clip(np.searchsorted(axes[a], p[:, a], side="right") - 1, 0, max(n - 2, 0))
        cell.append(i0)
    ix, iy, iz = cell
    bx = min(1, field.grid.shape[0] - 1)
    by = min(1, field.grid.shape[1] - 1)
    bz = min(1, field.grid.shape[2] - 1)
    for ox, oy, oz in mc_tables.CORNER_OFFSETS:
        corner_hit |= v.bits[ix + ox * bx, iy + oy * by, iz + oz * bz]
    dens_ok = sample_density_many(field, p) > rho0
    return np.sort(idx[corner_hit & dens_ok]).astype(np.int64)


def subtract(current: SelectionResult, removal: SelectionResult) -> SelectionResult:
    """Remove one selection's region from another (region-based subtraction).

    Node and point membership are set differences; the mesh is re-extracted
    over the reduced node volume at the current threshold.
    """
    if current.field.grid != removal.field.grid:
        raise SelectionError("cannot subtract selections on different grids")
    new_mask = current.mask.difference(removal.mask)
    keep = ~np.isin(current.point_indices, removal.point_indices)
    points = np.sort(current.point_indices[keep])
    if current.rho0 is None:
        mesh = TriangleMesh.empty()
    else:
        mesh = marching_cubes(current.field, current.rho0, new_mask)
    return SelectionResult(
        technique=current.technique,
        mask=new_mask,
        v_cr=current.v_cr,
        rho0=current.rho0,
        point_indices=points,
        mesh=mesh,
        field=current.field,
        diagnostics={
            "n_vcr": current.v_cr.count,
            "n_selected_nodes": new_mask.count,
            "subtracted_nodes": int((current.mask.bits & removal.mask.bits).sum()),
        },
    )


# -- mesh output -----------------------------------------------------------------------

def mesh_to_obj(mesh: TriangleMesh) -> str:
    """Wavefront OBJ text with v/f records only (1-based indices)."""
    lines = []
    for p in mesh.vertices:
        lines.append(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    return "\n".join(lines) + ("\n" if lines else "")
