"""Batch command line: generate clouds, estimate fields, run selections, score.

Exit codes are stable: 0 success, 2 usage or unreadable input, 3 numeric
failure, 4 empty selection region, 5 environment (port bind).  All
randomness flows through an explicit --seed; identical inputs and flags
produce byte-identical output files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import field as fieldmod
from . import selection as selmod
from . import synth
from .field import FieldError, MbeParams, compute_bounds, estimate_density_mbe, integrate_mass, \
    load_cloud, load_field, save_cloud, save_field
from .geometry import GeometryError, compute_surface_camera, default_far, load_scene
from .selection import EmptyRegionError, SelectionError, mesh_to_obj
from .synth import SynthError, load_labels, save_labels, save_spines, score
from .traces import TraceError, load_trace, segment_trace

EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_EMPTY_REGION = 4
EXIT_ENVIRONMENT = 5

TECHNIQUES = ("brush", "brush-wyp", "brush-lasso", "cloud-lasso")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _write_json(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def cmd_gen(args) -> None:
    if args.kind == "shell":
        labeled = synth.gen_shell(n=args.n, radius=args.radius, thickness=args.thickness,
                                  noise_n=args.noise_n, seed=args.seed)
    elif args.kind == "clusters":
        labeled = synth.gen_clusters(k=args.k, per_cluster=args.n, scale=args.scale,
                                     separation=args.separation, seed=args.seed)
    elif args.kind == "filaments":
        labeled = synth.gen_filaments(segments=args.k, points_per_segment=args.n,
                                      thickness=args.thickness, seed=args.seed)
    else:
        raise CliError(f"unknown kind {args.kind!r}")
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    cloud_path = prefix.with_name(prefix.name + "_points.csv")
    labels_path = prefix.with_name(prefix.name + "_labels.csv")
    save_cloud(labeled.cloud, cloud_path)
    save_labels(labeled.labels, labels_path)
    print(f"wrote {len(labeled.cloud)} points to {cloud_path}")
    print(f"wrote labels to {labels_path}")
    if labeled.spines is not None:
        spine_path = prefix.with_name(prefix.name + "_spines.json")
        save_spines(labeled.spines, spine_path)
        print(f"wrote {len(labeled.spines)} spines to {spine_path}")
    counts = {int(l): int((labeled.labels == l).sum()) for l in np.unique(labeled.labels)}
    print(f"label counts: {counts}")


def cmd_estimate(args) -> None:
    cloud = load_cloud(args.cloud)
    params = MbeParams(pilot_bandwidth=args.h0, alpha=args.alpha)
    grid = compute_bounds(cloud, padding_fraction=args.padding,
                          resolution=(args.grid, args.grid, args.grid))
    try:
        dens = estimate_density_mbe(cloud, grid, params)
    except FieldError as e:
        raise CliError(f"density estimation failed: {e}", EXIT_NUMERIC) from e
    save_field(dens, args.field)
    print(f"wrote {args.grid}^3 field to {args.field}")
    print(f"mass integral: {integrate_mass(dens)!r}")
    print(f"density min/max: {float(dens.values.min())!r} {float(dens.values.max())!r}")


def _run_selection(args, technique, dens, trace, surface, head, far, cloud):
    seg = segment_trace(trace, surface, eps=args.eps)
    setup = compute_surface_camera(head, surface, far)
    radius = args.radius
    if technique == "brush":
        return selmod.brush_select(seg.positions, dens, radius, cloud)
    if technique == "brush-wyp":
        return selmod.brush_wyp(seg, dens, head, radius, cloud)
    if technique == "brush-lasso":
        return selmod.brush_lasso(seg, dens, head, surface, setup, radius, cloud)
    if technique == "cloud-lasso":
        lasso = selmod.lasso_from_surface_samples(seg.surface_samples, surface)
        return selmod.cloud_lasso(lasso, dens, setup, cloud)
    raise CliError(f"unknown technique {technique!r}")


def cmd_select(args) -> None:
    if args.technique not in TECHNIQUES:
        raise CliError(f"technique must be one of {TECHNIQUES}, got {args.technique!r}")
    dens = load_field(args.field)
    trace = load_trace(args.trace)
    surface, head, far = load_scene(args.scene)
    if far is None:
        far = default_far(surface.signed_distance(head.position), dens.grid.diagonal)
    cloud = load_cloud(args.cloud) if args.cloud else None
    try:
        result = _run_selection(args, args.technique, dens, trace, surface, head, far, cloud)
    except EmptyRegionError as e:
        raise CliError(str(e), EXIT_EMPTY_REGION) from e
    doc = result.to_json_dict()
    _write_json(args.out, doc)
    print(f"technique: {args.technique}")
    print(f"rho0: {result.rho0!r}")
    print(f"selected nodes: {result.mask.count} of N_VCR={result.v_cr.count}")
    print(f"selected points: {len(result.point_indices)}")
    if args.mesh:
        with open(args.mesh, "w", encoding="utf-8") as f:
            f.write(mesh_to_obj(result.mesh))
        print(f"wrote mesh ({len(result.mesh)} triangles) to {args.mesh}")


def cmd_eval(args) -> None:
    with open(args.selection, "r", encoding="utf-8") as f:
        sel = json.load(f)
    labels = load_labels(args.labels)
    labeled = synth.LabeledCloud(
        cloud=fieldmod.PointCloud(positions=np.zeros((len(labels), 3))),
        labels=labels,
    )
    indices = np.asarray(sel.get("selected_points", []), dtype=np.int64)
    if indices.size and indices.max() >= len(labels):
        raise CliError("selection indices exceed the label table")
    try:
        metrics = score(indices, args.target_label, labeled)
    except SynthError as e:
        raise CliError(str(e)) from e
    doc = metrics.to_dict()
    _write_json(args.out, doc)
    for k in ("precision", "recall", "f1", "jaccard"):
        print(f"{k}: {doc[k]!r}")
    print(f"tp/fp/fn: {metrics.tp}/{metrics.fp}/{metrics.fn}")


def cmd_serve(args) -> None:
    import uvicorn

    from .service import create_app

    app = create_app(idle_timeout=args.idle_timeout)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except OSError as e:
        raise CliError(f"cannot bind {args.host}:{args.port}: {e}", EXIT_ENVIRONMENT) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xrsel",
                                     description="density-aware point cloud selection")
    parser.add_argument("--config", help="JSON file of defaults; flags override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic labeled cloud")
    p.add_argument("--kind", required=True, help="shell | clusters | filaments")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--n", type=int, default=5000, help="points (per cluster/filament)")
    p.add_argument("--k", type=int, default=2, help="cluster or filament count")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--thickness", type=float, default=0.05)
    p.add_argument("--scale", type=float, default=0.05)
    p.add_argument("--separation", type=float, default=0.5)
    p.add_argument("--noise-n", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("estimate", help="estimate the density field of a cloud")
    p.add_argument("--cloud", required=True)
    p.add_argument("--field", required=True, help="output field file")
    p.add_argument("--grid", type=int, default=128)
    p.add_argument("--padding", type=float, default=0.05)
    p.add_argument("--h0", type=float, default=None, help="pilot bandwidth (default: from data)")
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("select", help="run a selection technique on a recorded trace")
    p.add_argument("--field", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--scene", required=True, help="surface/head JSON")
    p.add_argument("--technique", required=True)
    p.add_argument("--cloud", default=None, help="cloud CSV for point membership")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--eps", type=float, default=0.005, help="surface contact tolerance")
    p.add_argument("--out", required=True, help="selection JSON output")
    p.add_argument("--mesh", default=None, help="OBJ output path")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("eval", help="score a selection against ground-truth labels")
    p.add_argument("--selection", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--target-label", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP selection service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--idle-timeout", type=float, default=3600.0,
                   help="seconds before an unused session expires")
    p.set_defaults(func=cmd_serve)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            defaults = json.load(f)
        # flags explicitly present on the command line take precedence
        given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
        for key, value in defaults.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and attr not in given:
                setattr(args, attr, value)
    return args


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TraceError, GeometryError, SynthError, SelectionError, FieldError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
