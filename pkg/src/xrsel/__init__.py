"""Density-aware point-cloud selection for a head-coupled display surface."""

from .field import (
    BandwidthSet,
    DensityField,
    FieldError,
    GridBox,
    MbeParams,
    PointCloud,
    compute_bounds,
    estimate_density_mbe,
    integrate_mass,
    load_cloud,
    load_field,
    sample_density,
    save_cloud,
    save_field,
)
from .geometry import (
    GeometryError,
    HeadPose,
    ProjectionSetup,
    Ray,
    SurfaceGeometry,
    compute_surface_camera,
    default_far,
    point_in_surface_rect,
    project_to_surface,
    surface_frame,
    surface_ray,
)
from .selection import (
    EmptyRegionError,
    Lasso,
    NodeMask,
    SelectionError,
    SelectionResult,
    TriangleMesh,
    brush_lasso,
    brush_select,
    brush_voi,
    brush_wyp,
    clip_mask_above,
    cloud_lasso,
    lasso_from_surface_samples,
    lasso_frustum_mask,
    marching_cubes,
    mesh_to_obj,
    points_in_selection,
    ray_accumulated_jump,
    ray_max_density,
    select_volume,
    subtract,
    threshold_mean_density,
)
from .synth import LabeledCloud, Metrics, gen_clusters, gen_filaments, gen_scripted_trace, \
    gen_shell, score
from .traces import InputSample, InputTrace, SegmentedTrace, TraceError, parse_trace, \
    resample_polyline, segment_trace

__version__ = "0.1.0"
