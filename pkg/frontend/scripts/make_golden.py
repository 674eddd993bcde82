#!/usr/bin/env python3
"""Dump engine-side projections for the frontend's golden agreement test.

Writes fixtures/projection_golden.json: a scene, the serialized camera, 100
below-plane sample points, and their pixel positions at 1920x1080 as the
engine computes them.  The frontend must reproduce these within 1 px.
"""

import json
from pathlib import Path

import numpy as np

from xrsel.geometry import HeadPose, SurfaceGeometry, compute_surface_camera, project_to_surface

WIDTH, HEIGHT = 1920, 1080


def main() -> None:
    surface = SurfaceGeometry(
        center=(0.02, -0.01, 0.0),
        axis_x=(1.0, 0.0, 0.0),
        axis_z=(0.0, -np.sin(np.radians(21.0)), np.cos(np.radians(21.0))),
        width=0.637, height=0.438,
    )
    head = HeadPose(position=surface.center + 0.52 * surface.axis_z
                    + 0.08 * surface.axis_x - 0.05 * surface.axis_y)
    setup = compute_surface_camera(head, surface, far=6.0)

    rng = np.random.default_rng(2024)
    points = []
    pixels = []
    while len(points) < 100:
        u = rng.uniform(-0.45, 0.45) * surface.width
        v = rng.uniform(-0.45, 0.45) * surface.height
        depth = rng.uniform(0.02, 1.2)
        q = surface.from_local(u, v) - depth * surface.axis_z
        ndc = project_to_surface(q, setup)
        if not ndc.in_frustum:
            continue
        points.append([float(c) for c in q])
        pixels.append([(ndc.x + 1.0) / 2.0 * WIDTH, (1.0 - ndc.y) / 2.0 * HEIGHT])

    corners = []
    for c in surface.corners():
        ndc = project_to_surface(c, setup)
        corners.append([(ndc.x + 1.0) / 2.0 * WIDTH, (1.0 - ndc.y) / 2.0 * HEIGHT])

    doc = {
        "width": WIDTH,
        "height": HEIGHT,
        "scene": {
            "surface": {
                "center": [float(c) for c in surface.center],
                "axis_x": [float(c) for c in surface.axis_x],
                "axis_z": [float(c) for c in surface.axis_z],
                "width": surface.width,
                "height": surface.height,
            },
            "head": {"position": [float(c) for c in head.position]},
        },
        "camera": setup.to_dict(),
        "points": points,
        "pixels": pixels,
        "corner_pixels": corners,
    }
    out = Path(__file__).resolve().parent.parent / "fixtures" / "projection_golden.json"
    out.write_text(json.dumps(doc, indent=1) + "\n")
    print(f"wrote {out} ({len(points)} points)")


if __name__ == "__main__":
    main()
