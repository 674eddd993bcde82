"""Synthetic ground-truth clouds and selection quality metrics.

Generators mirror the kinds of structure the selection techniques target: a
half-spherical particle shell over interfering noise, Plummer-profile
cluster groups, and noisy filament networks with their spines retained for
distance checks.  Every generator is a pure function of its parameters and
seed (PCG64), recorded in the cloud description for reproducibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .field import PointCloud
from .geometry import HeadPose, SurfaceGeometry, compute_surface_camera, default_far
from .traces import InputSample, InputTrace, resample_polyline

RNG_ALGORITHM = "pcg64"

# Plummer radii are truncated here (in units of the scale radius) to keep
# clouds bounded; ~99.6% of the untruncated mass lies inside.
PLUMMER_TRUNCATION = 8.0
_PLUMMER_U_EXP = -2.0 / 3.0


class SynthError(ValueError):
    """Invalid generator parameters or empty target structure."""


@dataclass
class LabeledCloud:
    """A synthetic cloud with one integer structure label per point."""

    cloud: PointCloud
    labels: np.ndarray
    description: dict = field(default_factory=dict)
    spines: list[np.ndarray] | None = None

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.shape[0] != len(self.cloud):
            raise SynthError(f"{lab.shape[0]} labels for {len(self.cloud)} points")
        self.labels = lab


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    jaccard: float
    tp: int
    fp: int
    fn: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "jaccard": self.jaccard,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def gen_shell(n: int, radius: float = 1.0, thickness: float = 0.1,
              noise_n: int = 0, seed: int = 0) -> LabeledCloud:
    """Half-spherical shell (label 1) over uniform interior noise (label 0).

    Shell points are uniform in direction over the upper hemisphere with
    radii uniform in [radius - thickness/2, radius + thickness/2]; noise
    fills the half-ball strictly inside the shell.
    """
    if n <= 0:
        raise SynthError("shell needs a positive point count")
    rng = _rng(seed)
    dirs = rng.normal(size=(n, 3))
    dirs[:, 2] = np.abs(dirs[:, 2])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.uniform(radius - 0.5 * thickness, radius + 0.5 * thickness, size=n)
    shell = dirs * radii[:, None]
    parts = [shell]
    labels = [np.ones(n, dtype=np.int64)]
    if noise_n > 0:
        inner = max(radius - 0.5 * thickness, 0.0)
        ndirs = rng.normal(size=(noise_n, 3))
        ndirs[:, 2] = np.abs(ndirs[:, 2])
        ndirs /= np.linalg.norm(ndirs, axis=1, keepdims=True)
        nradii = inner * rng.uniform(0.0, 1.0, size=noise_n) ** (1.0 / 3.0)
        parts.append(ndirs * nradii[:, None])
        labels.append(np.zeros(noise_n, dtype=np.int64))
    return LabeledCloud(
        cloud=PointCloud(positions=np.concatenate(parts)),
        labels=np.concatenate(labels),
        description={
            "kind": "shell", "n": n, "radius": radius, "thickness": thickness,
            "noise_n": noise_n, "seed": seed, "rng": RNG_ALGORITHM,
        },
    )


def _plummer_radii(rng: np.random.Generator, count: int, scale: float) -> np.ndarray:
    out = np.empty(count)
    filled = 0
    while filled < count:
        u = rng.uniform(0.0, 1.0, size=count - filled)
        r = scale / np.sqrt(np.maximum(u, 1e-12) ** _PLUMMER_U_EXP - 1.0)
        r = r[r <= PLUMMER_TRUNCATION * scale]
        out[filled:filled + r.size] = r
        filled += r.size
    return out



def gen_clusters(k: int, per_cluster: int, scale: float = 0.05,
                 separation: float = 0.5, seed: int = 0,
                 max_tries: int = 1000) -> LabeledCloud:
    """k Plummer-profile clusters with pairwise center distance >= separation."""
    if k < 1:
        raise SynthError("need at least one cluster")
    if per_cluster < 1:
        raise SynthError("need at least one point per cluster")
    rng = _rng(seed)
    centers: list[np.ndarray] = []
    if k == 1:
        centers.append(np.zeros(3))
    else:
        box = 0.75 * separation * k ** (1.0 / 3.0) + separation
        tries = 0
        while len(centers) < k:
            c = rng.uniform(-box, box, size=3)
            if all(np.linalg.norm(c - o) >= separation for o in centers):
                centers.append(c)
            tries += 1
            if tries > max_tries:
                raise SynthError(
                    f"failed to pack {k} cluster centers at separation {separation} "
                    f"after {max_tries} tries"
                )
    positions = []
    labels = []
    for ci, c in enumerate(centers):
        radii = _plummer_radii(rng, per_cluster, scale)
        dirs = rng.normal(size=(per_cluster, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        positions.append(c + dirs * radii[:, None])
        labels.append(np.full(per_cluster, ci, dtype=np.int64))
    return LabeledCloud(
        cloud=PointCloud(positions=np.concatenate(positions)),
        labels=np.concatenate(labels),
        description={
            "kind": "clusters", "k": k, "per_cluster": per_cluster, "scale": scale,
            "separation": separation, "seed": seed, "rng": RNG_ALGORITHM,
            "centers": [list(map(float, c)) for c in centers],
        },
    )


def gen_filaments(segments: int, points_per_segment: int, thickness: float = 0.02,
                  knots: int = 5, extent: float = 1.0, seed: int = 0) -> LabeledCloud:
    """Filament spines as random polylines, points Gaussian-scattered around them.

    One filament per segment index; sigma of the transverse scatter equals
    ``thickness``.  Spines are retained on the result for distance oracles.
    """
    if segments < 1:
        raise SynthError("need at least one filament")
    rng = _rng(seed)
    positions = []
    labels = []
    spines = []
    for fi in range(segments):
        start = rng.uniform(-extent, extent, size=3)
        steps = rng.normal(size=(knots - 1, 3))
        steps /= np.linalg.norm(steps, axis=1, keepdims=True)
        # bias the walk direction so spines stretch instead of folding up
        heading = rng.normal(size=3)
        heading /= np.linalg.norm(heading)
        steps = 0.5 * steps + heading
        steps *= (extent / (knots - 1)) * 1.5 / np.linalg.norm(steps, axis=1, keepdims=True)
        spine = np.concatenate([start[None], start + np.cumsum(steps, axis=0)])
        spines.append(spine)
        seg_len = np.linalg.norm(np.diff(spine, axis=0), axis=1)
        arc = np.concatenate([[0.0], np.cumsum(seg_len)])
        t = rng.uniform(0.0, arc[-1], size=points_per_segment)
        base = np.stack([np.interp(t, arc, spine[:, a]) for a in range(3)], axis=1)
        scatter = rng.normal(scale=thickness, size=(points_per_segment, 3)) if thickness > 0 \
            else np.zeros((points_per_segment, 3))
        positions.append(base + scatter)
        labels.append(np.full(points_per_segment, fi, dtype=np.int64))
    return LabeledCloud(
        cloud=PointCloud(positions=np.concatenate(positions)),
        labels=np.concatenate(labels),
        description={
            "kind": "filaments", "segments": segments,
            "points_per_segment": points_per_segment, "thickness": thickness,
            "knots": knots, "extent": extent, "seed": seed, "rng": RNG_ALGORITHM,
        },
        spines=spines,
    )


def score(selected, truth_label: int, labeled: LabeledCloud) -> Metrics:
    """Precision/recall/F1/Jaccard of selected indices against one structure."""
    sel = np.asarray(selected, dtype=np.int64)
    if sel.size and (sel.min() < 0 or sel.max() >= len(labeled.cloud)):
        raise SynthError("selected indices out of range")
    if truth_label not in labeled.labels:
        raise SynthError(f"no points carry label {truth_label}")
    truth = set(np.flatnonzero(labeled.labels == truth_label).tolist())
    chosen = set(sel.tolist())
    tp = len(chosen & truth)
    fp = len(chosen - truth)
    fn = len(truth - chosen)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    jaccard = tp / (tp + fp + fn) if tp + fp + fn else 0.0
    return Metrics(precision=precision, recall=recall, f1=f1, jaccard=jaccard,
                   tp=tp, fp=fp, fn=fn)


# -- scripted strokes ---------------------------------------------------------------

TRACE_SAMPLE_DT = 1.0 / 60.0


def _structure_points(labeled: LabeledCloud, target_label: int) -> np.ndarray:
    pts = labeled.cloud.positions[labeled.labels == target_label]
    if pts.shape[0] == 0:
        raise SynthError(f"target structure {target_label} is empty")
    return pts


def _surface_sample(position: np.ndarray, t: float) -> InputSample:
    return InputSample(position=position, timestamp=t, source="pen", declared_space="surface")


def _air_sample(position: np.ndarray, t: float) -> InputSample:
    return InputSample(position=position, timestamp=t, source="pen", declared_space="air")


def _lasso_samples_for(points: np.ndarray, surface: SurfaceGeometry, head: HeadPose,
                       inflate: float, t0: float, far: float) -> list[InputSample]:
    """On-plane lasso around the convex hull of the structure's projection."""
    setup = compute_surface_camera(head, surface, far)
    cam = setup.world_to_camera(points)
    w = -cam[:, 2]
    if np.any(w <= 0):
        raise SynthError("target structure extends behind the head")
    half_u = 0.5 * (setup.corner_tr[0] - setup.corner_bl[0])
    half_v = 0.5 * (setup.corner_tr[1] - setup.corner_bl[1])
    u = (setup.projection[0, 0] * cam[:, 0] + setup.projection[0, 2] * cam[:, 2]) / w * half_u
    v = (setup.projection[1, 1] * cam[:, 1] + setup.projection[1, 2] * cam[:, 2]) / w * half_v
    uv = np.stack([u, v], axis=1)
    hull = ConvexHull(uv)
    poly = uv[hull.vertices]
    centroid = poly.mean(axis=0)
    poly = centroid + (1.0 + inflate) * (poly - centroid)
    samples = []
    for i, p in enumerate(poly):
        samples.append(_surface_sample(surface.from_local(p[0], p[1]),
                                       t0 + i * TRACE_SAMPLE_DT))
    return samples


def gen_scripted_trace(kind: str, labeled: LabeledCloud, surface: SurfaceGeometry,
                       head: HeadPose, seed: int = 0, target_label: int = 0,
                       inflate: float = 0.1, brush_spacing: float = 0.05,
                       far: float | None = None) -> InputTrace:
    """Deterministic machine-drawn stroke standing in for a human participant.

    ``lasso_around_cluster``: on-surface lasso tracing the 10%-inflated
    convex hull of the target structure's projection.
    ``brush_along_filament``: the target filament's spine resampled; parts
    above the plane become air samples, parts below become the on-plane
    piercing points of the head ray through them.
    ``mixed_cross_space``: air brush along the above-plane spine, then a
    surface lasso around the below-plane part's projection (one air segment,
    one surface segment).
    """
    del seed  # scripted strokes are fully determined by the scene
    points = _structure_points(labeled, target_label)
    if far is None:
        lo = labeled.cloud.positions.min(axis=0)
        hi = labeled.cloud.positions.max(axis=0)
        near = surface.signed_distance(head.position)
        far = default_far(near, float(np.linalg.norm(hi - lo)))
    meta = {"kind": kind, "target_label": target_label}

    if kind == "lasso_around_cluster":
        samples = _lasso_samples_for(points, surface, head, inflate, 0.0, far)
        return InputTrace(samples=samples, meta=meta)

    if kind not in ("brush_along_filament", "mixed_cross_space"):
        raise SynthError(f"unknown scripted trace kind {kind!r}")

    if labeled.spines is None or target_label >= len(labeled.spines):
        raise SynthError("scripted brush requires a filament cloud with spines")
    spine = resample_polyline(labeled.spines[target_label], brush_spacing)
    dist = np.array([surface.signed_distance(p) for p in spine])

    if kind == "brush_along_filament":
        samples = []
        for i, (p, d) in enumerate(zip(spine, dist)):
            t = i * TRACE_SAMPLE_DT
            if d > 0:
                samples.append(_air_sample(p, t))
            else:
                # pierce point of the head->spine ray on the plane
                hp = head.position
                denom = surface.signed_distance(hp) - d
                s = hp + (surface.signed_distance(hp) / denom) * (p - hp)
                samples.append(_surface_sample(s, t))
        if not samples:
            raise SynthError("filament spine produced no samples")
        return InputTrace(samples=samples, meta=meta)

    # mixed_cross_space
    above = spine[dist > 0]
    below = points[[surface.signed_distance(p) <= 0 for p in points]]
    if above.shape[0] == 0 or below.shape[0] == 0:
        raise SynthError("mixed trace needs spine above and points below the plane")
    samples = [_air_sample(p, i * TRACE_SAMPLE_DT) for i, p in enumerate(above)]
    t0 = len(samples) * TRACE_SAMPLE_DT
    samples += _lasso_samples_for(below, surface, head, inflate, t0, far)
    return InputTrace(samples=samples, meta=meta)


# -- CSV/JSON export -----------------------------------------------------------------

def save_labels(labels: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("label\n")
        for v in labels:
            f.write(f"{int(v)}\n")


def load_labels(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if lines and not lines[0].lstrip("-").isdigit():
        lines = lines[1:]
    return np.array([int(v) for v in lines], dtype=np.int64)


def save_spines(spines: list[np.ndarray], path) -> None:
    doc = {"spines": [[[float(c) for c in p] for p in s] for s in spines]}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")
