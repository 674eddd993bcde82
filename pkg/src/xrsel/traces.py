"""Recorded input strokes: parsing, surface/air segmentation, resampling.

A trace is an ordered list of timestamped world-space samples from pen,
touch, or tracked-hand input.  Each sample may declare which space it was
captured in; undeclared samples are classified against the surface plane
with a contact tolerance.  Samples on the surface are snapped exactly onto
the plane; samples below the plane beyond tolerance are rejected as
physically impossible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import SurfaceGeometry, point_in_surface_rect, snap_to_plane

SOURCES = ("pen", "touch", "hand")
SPACES = ("surface", "air")

# pen-on-glass contact tolerance
DEFAULT_CONTACT_EPS = 0.005


class TraceError(ValueError):
    """Malformed or physically inconsistent trace input."""


@dataclass(frozen=True)
class InputSample:
    position: np.ndarray
    timestamp: float
    source: str = "pen"
    declared_space: str | None = None

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise TraceError(f"sample position must be a finite 3-vector, got {self.position}")
        object.__setattr__(self, "position", p)
        if self.source not in SOURCES:
            raise TraceError(f"unknown input source {self.source!r}")
        if self.declared_space is not None and self.declared_space not in SPACES:
            raise TraceError(f"unknown space tag {self.declared_space!r}")


@dataclass
class InputTrace:
    samples: list[InputSample]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.samples) == 0:
            raise TraceError("a trace needs at least one sample")
        t_prev = -np.inf
        for k, s in enumerate(self.samples):
            if s.timestamp < t_prev:
                raise TraceError(f"timestamps decrease at sample {k}")
            t_prev = s.timestamp

    def __len__(self) -> int:
        return len(self.samples)

    def positions(self) -> np.ndarray:
        return np.stack([s.position for s in self.samples])


def parse_trace(doc: dict) -> InputTrace:
    """Build a trace from its JSON document form.

    Schema: ``{"samples": [{"p": [x,y,z], "t": seconds, "source": "pen",
    "space": "air"|"surface"|null}, ...], "meta": {...}}``.
    """
    if "samples" not in doc:
        raise TraceError("trace document has no 'samples' field")
    samples = []
    for k, s in enumerate(doc["samples"]):
        try:
            samples.append(
                InputSample(
                    position=s["p"],
                    timestamp=float(s["t"]),
                    source=s.get("source", "pen"),
                    declared_space=s.get("space"),
                )
            )
        except KeyError as e:
            raise TraceError(f"sample {k} missing field {e}") from e
    return InputTrace(samples=samples, meta=dict(doc.get("meta", {})))


def trace_to_dict(trace: InputTrace) -> dict:
    return {
        "samples": [
            {
                "p": [float(c) for c in s.position],
                "t": s.timestamp,
                "source": s.source,
                "space": s.declared_space,
            }
            for s in trace.samples
        ],
        "meta": trace.meta,
    }


def load_trace(path) -> InputTrace:
    with open(path, "r", encoding="utf-8") as f:
        return parse_trace(json.load(f))


def save_trace(trace: InputTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(trace_to_dict(trace), f, indent=1)
        f.write("\n")


@dataclass
class SegmentedTrace:
    """A trace split into on-surface and in-air runs, original order preserved.

    ``positions``/``spaces`` are aligned with the input samples (surface
    positions already snapped onto the plane); ``segments`` lists
    ``(space, start, stop)`` half-open index ranges covering the trace.
    """

    positions: np.ndarray
    spaces: list[str]
    segments: list[tuple[str, int, int]]

    @property
    def surface_samples(self) -> np.ndarray:
        idx = [k for k, s in enumerate(self.spaces) if s == "surface"]
        return self.positions[idx] if idx else np.zeros((0, 3))

    @property
    def air_samples(self) -> np.ndarray:
        idx = [k for k, s in enumerate(self.spaces) if s == "air"]
        return self.positions[idx] if idx else np.zeros((0, 3))

    def __len__(self) -> int:
        return self.positions.shape[0]


def segment_trace(trace: InputTrace, surface: SurfaceGeometry,
                  eps: float = DEFAULT_CONTACT_EPS) -> SegmentedTrace:
    """Classify every sample as surface or air and group consecutive runs.

    Declared space tags win; otherwise a sample within ``eps`` of the plane
    counts as surface contact, above the plane as air.  Surface samples are
    snapped onto the plane and must fall inside the display rectangle.
    """
    positions = np.empty((len(trace), 3), dtype=np.float64)
    spaces: list[str] = []
    for k, s in enumerate(trace.samples):
        d = surface.signed_distance(s.position)
        space = s.declared_space
        if space is None:
            if abs(d) <= eps:
                space = "surface"
            elif d > eps:
                space = "air"
            else:
                raise TraceError(
                    f"sample {k} lies {-d:.4f} m below the surface plane; "
                    "input below the display is impossible"
                )
        if space == "surface":
            if abs(d) > eps:
                raise TraceError(
                    f"sample {k} declared on-surface but is {d:.4f} m from the plane"
                )
            snapped = snap_to_plane(s.position, surface)
            if not point_in_surface_rect(snapped, surface, eps):
                raise TraceError(f"sample {k} touches the plane outside the display rectangle")
            positions[k] = snapped
        else:
            if d <= 0:
                raise TraceError(f"sample {k} declared in-air but is below the plane")
            positions[k] = s.position
        spaces.append(space)

    segments: list[tuple[str, int, int]] = []
    start = 0
    for k in range(1, len(spaces) + 1):
        if k == len(spaces) or spaces[k] != spaces[start]:
            segments.append((spaces[start], start, k))
            start = k
    return SegmentedTrace(positions=positions, spaces=spaces, segments=segments)


def resample_polyline(points, spacing: float) -> np.ndarray:
    """Arc-length uniform subdivision keeping every input vertex.

    Each segment is split into equal arcs no longer than ``spacing``, so the
    output traces exactly the same path (total length preserved) and both
    endpoints are retained.  A single point is returned unchanged.
    """
    if spacing <= 0:
        raise TraceError(f"resample spacing must be positive, got {spacing}")
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] < 2:
        return pts.copy()
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        length = float(np.linalg.norm(b - a))
        pieces = max(1, int(np.ceil(length / spacing)))
        for k in range(1, pieces):
            out.append(a + (k / pieces) * (b - a))
        out.append(b)
    return np.stack(out)
