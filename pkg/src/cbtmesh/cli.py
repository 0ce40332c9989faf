"""Command-line entry point: validate | subdivide | animate | bench | export.

Exit codes: 0 ok, 1 usage error, 2 invalid input, 3 capacity exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import export as exporter
from . import halfedge, lod, sequential
from .halfedge import MeshError
from .pipeline import (
    CSV_HEADER,
    KeepAll,
    ParallelEngine,
    UniformSplit,
    converged_epoch,
    write_stats_csv,
)
from .state import CapacityError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_CAPACITY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass
class RunManifest:
    """Resolved parameters of one CLI run, written next to its outputs."""

    command: str
    mesh: str = ""
    cbt_depth: int = 17
    lod: dict = field(default_factory=dict)
    camera_path: str = ""
    frames: int = 0
    uniform_depth: int = 0
    out: str = ""
    exports: tuple = ()
    threads: int = 1
    seed: int = 0
    no_timing: bool = False

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("thread count must be >= 1")

    def write(self, outdir):
        with open(os.path.join(outdir, "manifest.json"), "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)


def _add_common(p, with_lod=False):
    p.add_argument("--mesh", required=True, help="input OBJ mesh path")
    p.add_argument("--cbt-depth", type=int, default=17,
                   help="CBT depth D; pool capacity is 2^D")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--export", default="", metavar="obj,svg,csv",
                   help="comma-separated export toggles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-timing", action="store_true",
                   help="zero the timing columns in stats CSV")
    if with_lod:
        p.add_argument("--target-area", type=float, default=49.0,
                       help="screen-space triangle area target in pixels")
        p.add_argument("--planet-radius", type=float, default=6.371e6)
        p.add_argument("--planet", action="store_true",
                       help="project vertices onto the planet sphere")
        p.add_argument("--no-frustum-cull", action="store_true")
        p.add_argument("--config", default="",
                       help="JSON file with LodConfig fields (flags override)")
        p.add_argument("--width", type=int, default=1920)
        p.add_argument("--height", type=int, default=1080)


def _load_mesh(path):
    mesh = halfedge.load_obj(path)
    problems = halfedge.validate(mesh)
    if problems:
        for v in problems:
            print(v, file=sys.stderr)
        raise MeshError(f"mesh failed validation with {len(problems)} violations")
    return mesh


def _exports(arg):
    return tuple(x for x in arg.split(",") if x)


def _default_camera(mesh, width=1280, height=960):
    lo = mesh.positions.min(axis=0)
    hi = mesh.positions.max(axis=0)
    center = (lo + hi) / 2.0
    span = float(np.linalg.norm(hi - lo)) or 1.0
    return lod.Camera(
        position=center + np.array([0.0, 0.0, 1.6 * span]),
        forward=np.array([0.0, 0.0, -1.0]),
        up=np.array([0.0, 1.0, 0.0]),
        width=width,
        height=height,
        near=1e-3 * span,
    )


def _lod_config(args):
    base = {}
    if getattr(args, "config", ""):
        with open(args.config) as f:
            base = json.load(f)
    base.setdefault("target_area_px", args.target_area)
    base.setdefault("planet_radius", args.planet_radius)
    if args.planet:
        base["planet_mode"] = True
    if args.no_frustum_cull:
        base["frustum_cull"] = False
    return lod.LodConfig(**base)


# -- subcommands ---------------------------------------------------------


def cmd_validate(args) -> int:
    mesh = halfedge.load_obj(args.mesh)
    problems = halfedge.validate(mesh)
    for v in problems:
        print(v)
    print(mesh.stats_json())
    return EXIT_OK if not problems else EXIT_INPUT


def _run_uniform(mesh, depth, k, threads, max_epochs=400):
    target = mesh.n_halfedges * (1 << k)
    if target > (1 << depth):
        raise CapacityError(
            f"uniform depth {k} needs {target} slots, pool holds {1 << depth}"
        )
    st = sequential.initialize(mesh, depth)
    stats = []
    with ParallelEngine(threads=threads) as eng:
        for epoch in range(max_epochs if k > 0 else 1):
            stats.append(eng.update(st, UniformSplit(k), epoch=epoch))
            if st.count() == target:
                break  # uniform splitting only grows; target reached
        if st.count() != target:
            raise CapacityError(
                f"reservation pressure stalled subdivision at {st.count()} "
                f"of {target} bisectors; increase --cbt-depth"
            )
    return st, stats


def cmd_subdivide(args) -> int:
    mesh = _load_mesh(args.mesh)
    manifest = RunManifest(
        command="subdivide", mesh=args.mesh, cbt_depth=args.cbt_depth,
        uniform_depth=args.uniform_depth, out=args.out,
        exports=_exports(args.export), threads=args.threads, seed=args.seed,
        no_timing=args.no_timing,
    )
    os.makedirs(args.out, exist_ok=True)
    manifest.write(args.out)
    st, stats = _run_uniform(mesh, args.cbt_depth, args.uniform_depth,
                             args.threads)
    print(f"subdivided to {st.count()} triangles in {len(stats)} epochs")
    exports = manifest.exports
    if "obj" in exports:
        _, tris = st.decode_live()
        exporter.write_obj(os.path.join(args.out, "triangulation.obj"), tris)
    if "svg" in exports:
        _, tris = st.decode_live()
        exporter.write_svg(os.path.join(args.out, "triangulation.svg"), tris,
                           _default_camera(mesh))
    if "csv" in exports or not exports:
        with open(os.path.join(args.out, "stats.csv"), "w") as f:
            f.write(write_stats_csv(stats, no_timing=args.no_timing))
    return EXIT_OK


def cmd_animate(args) -> int:
    mesh = _load_mesh(args.mesh)
    config = _lod_config(args)
    if args.path:
        with open(args.path) as f:
            frames = lod.load_camera_path(f.read())
    else:
        frames = lod.make_zoom_path(config.planet_radius, 3.0 * config.planet_radius,
                                    args.end_altitude)
    manifest = RunManifest(
        command="animate", mesh=args.mesh, cbt_depth=args.cbt_depth,
        lod={k: v for k, v in asdict(config).items() if k != "displacement"},
        camera_path=args.path, frames=args.frames, out=args.out,
        exports=_exports(args.export), threads=args.threads, seed=args.seed,
        no_timing=args.no_timing,
    )
    os.makedirs(args.out, exist_ok=True)
    manifest.write(args.out)
    if args.frames <= 0:
        print("no frames requested; nothing to do")
        return EXIT_OK

    st = sequential.initialize(mesh, args.cbt_depth)
    t0, t1 = frames[0].t, frames[-1].t
    stats = []
    peak_live = 0
    peak_depth = 0
    camera = None
    with ParallelEngine(threads=args.threads) as eng:
        for i in range(args.frames):
            t = t0 if args.frames == 1 else t0 + (t1 - t0) * i / (args.frames - 1)
            camera = lod.camera_path_at(frames, t, args.width, args.height)
            decide = lod.LodDecide(config, camera, mesh)
            stats.append(eng.update(st, decide, epoch=i))
            peak_live = max(peak_live, st.count())
            live_ids = st.ids[st.live_slots()]
            depth_now = max(
                int(bid).bit_length() - 1 - st.rank for bid in live_ids
            )
            peak_depth = max(peak_depth, depth_now)
    occupancy = peak_live / st.capacity
    print(
        f"peak live count {peak_live}, peak depth {peak_depth}, "
        f"peak pool occupancy {occupancy:.3f}"
    )
    conv = converged_epoch(stats)
    if conv is not None:
        print(f"first converged frame: {conv}")
    exports = manifest.exports
    if "obj" in exports:
        _, tris = st.decode_live()
        tris = tris.reshape(-1, 3)
        tris = exporter.project_positions(tris, config).reshape(-1, 3, 3)
        exporter.write_obj(os.path.join(args.out, "frame_final.obj"), tris)
    if "svg" in exports and camera is not None:
        _, tris = st.decode_live()
        tris = exporter.project_positions(tris.reshape(-1, 3), config)
        exporter.write_svg(os.path.join(args.out, "frame_final.svg"),
                           tris.reshape(-1, 3, 3), camera)
    if "csv" in exports or not exports:
        with open(os.path.join(args.out, "stats.csv"), "w") as f:
            f.write(write_stats_csv(stats, no_timing=args.no_timing))
    return EXIT_OK


def cmd_bench(args) -> int:
    mesh = _load_mesh(args.mesh)
    os.makedirs(args.out, exist_ok=True)
    RunManifest(
        command="bench", mesh=args.mesh, cbt_depth=args.cbt_depth,
        uniform_depth=args.uniform_depth, out=args.out,
        threads=args.threads, seed=args.seed, no_timing=args.no_timing,
    ).write(args.out)
    st, _ = _run_uniform(mesh, args.cbt_depth, args.uniform_depth, args.threads)
    live = st.count()
    max_threads = os.cpu_count() or 1
    thread_counts = sorted({1, 2, 4, max_threads} & set(range(1, max_threads + 1)))
    if not thread_counts:
        thread_counts = [1]
    print(f"steady state: {live} live bisectors, pool 2^{args.cbt_depth}")
    rows = ["threads,updates_per_s,total_us," + ",".join(f"t{i}" for i in range(1, 10))]
    summary = {}
    for n in thread_counts:
        with ParallelEngine(threads=n) as eng:
            for _ in range(args.warmup):
                eng.update(st, KeepAll())
            samples = []
            for _ in range(args.epochs):
                t0 = time.perf_counter_ns()
                stats = eng.update(st, KeepAll())
                samples.append((time.perf_counter_ns() - t0, stats))
        med_total = statistics.median(s[0] for s in samples) / 1000
        med_stage = [
            statistics.median(s[1].stage_times_us[k] for s in samples)
            for k in range(9)
        ]
        ups = 1e6 / med_total if med_total > 0 else float("inf")
        summary[n] = med_total
        print(
            f"threads={n}: median update {med_total / 1000:.3f} ms "
            f"({ups:.1f} updates/s); stages us={[int(v) for v in med_stage]}"
        )
        rows.append(
            f"{n},{ups:.2f},{med_total:.1f}," + ",".join(f"{v:.1f}" for v in med_stage)
        )
    if 1 in summary and max(summary) > 1:
        speedup = summary[1] / summary[max(summary)]
        print(f"speedup {max(summary)} threads vs 1: {speedup:.2f}x")
    with open(os.path.join(args.out, "bench.csv"), "w") as f:
        f.write("\n".join(rows) + "\n")
    return EXIT_OK


def cmd_export(args) -> int:
    mesh = _load_mesh(args.mesh)
    os.makedirs(args.out, exist_ok=True)
    st, _ = _run_uniform(mesh, args.cbt_depth, args.uniform_depth, args.threads)
    _, tris = st.decode_live()
    exports = _exports(args.export) or ("obj",)
    if "obj" in exports:
        exporter.write_obj(os.path.join(args.out, "triangulation.obj"), tris,
                           weld=args.weld)
    if "svg" in exports:
        exporter.write_svg(os.path.join(args.out, "triangulation.svg"), tris,
                           _default_camera(mesh))
    print(f"exported {len(tris)} triangles to {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="cbtmesh", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="load and validate a halfedge mesh")
    v.add_argument("--mesh", required=True)
    v.set_defaults(fn=cmd_validate)

    s = sub.add_parser("subdivide", help="uniform subdivision to a target depth")
    _add_common(s)
    s.add_argument("--uniform-depth", type=int, required=True)
    s.set_defaults(fn=cmd_subdivide)

    a = sub.add_parser("animate", help="run LOD updates along a camera path")
    _add_common(a, with_lod=True)
    a.add_argument("--path", default="", help="camera path JSON file")
    a.add_argument("--frames", type=int, required=True)
    a.add_argument("--end-altitude", type=float, default=1000.0,
                   help="final altitude of the built-in zoom (no --path)")
    a.set_defaults(fn=cmd_animate)

    b = sub.add_parser("bench", help="steady-state update timing")
    _add_common(b)
    b.add_argument("--uniform-depth", type=int, default=12)
    b.add_argument("--warmup", type=int, default=3)
    b.add_argument("--epochs", type=int, default=9)
    b.set_defaults(fn=cmd_bench)

    e = sub.add_parser("export", help="subdivide and export OBJ/SVG")
    _add_common(e)
    e.add_argument("--uniform-depth", type=int, default=0)
    e.add_argument("--weld", action="store_true",
                   help="weld duplicate vertices by 1e-7 quantization")
    e.set_defaults(fn=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except (MeshError, OSError, json.JSONDecodeError, ValueError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
