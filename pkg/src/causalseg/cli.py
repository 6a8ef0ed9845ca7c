"""Command-line front end: stream runner, benchmark and synthetic scene generation."""

from __future__ import annotations

import argparse
import glob
import logging
import os
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio
from .imageio import FormatError, load_frame
from .synth import SceneSpec, busy_scene, flicker_labels, render_scene, translating_square_scene
from .temporal import (
    StreamError,
    StreamParams,
    StreamState,
    load_legend,
    load_semantic_map,
    process_frame,
)

logger = logging.getLogger("causalseg")

EMIT_CHOICES = ("labels", "colorized", "flow", "flow-viz", "semantics", "timings")
DEFAULT_EMIT = "labels,colorized,flow,semantics,timings"
FRAME_SUFFIXES = (".ppm", ".png")

# Reference timings of the original single-core C/C++ implementation.
REFERENCE_NOTE = (
    "reference (single-core C/C++, 2.3 GHz i7): 320x240 0.1 s/frame (10.5 fps with "
    "semantic smoothing); 640x380 0.4 s/frame"
)

EXIT_OK, EXIT_NO_INPUT, EXIT_DECODE = 0, 2, 3


@dataclass
class RunConfig:
    input: str
    output: str
    params: StreamParams = field(default_factory=StreamParams)
    semantics: str | None = None
    legend: str | None = None
    emit: frozenset[str] = frozenset(DEFAULT_EMIT.split(","))
    single_thread: bool = False


def resolve_frames(pattern: str, suffixes=FRAME_SUFFIXES) -> list[Path]:
    """Frames from a directory, a printf-style pattern (``f_%04d.ppm``) or a glob."""
    p = Path(pattern)
    if p.is_dir():
        return sorted(q for q in p.iterdir() if q.suffix.lower() in suffixes)
    if "%" in pattern:
        out = []
        for start in (0, 1):
            i = start
            while Path(pattern % i).exists():
                out.append(Path(pattern % i))
                i += 1
            if out:
                break
        return out
    if any(c in pattern for c in "*?["):
        return sorted(Path(q) for q in glob.glob(pattern))
    return [p] if p.is_file() else []


def configure_threads(single_thread: bool) -> None:
    """Apply SEG_THREADS and the single-core switch. All kernels are sequential today."""
    import numba

    numba.config.THREADING_LAYER = "workqueue"
    cap = os.environ.get("SEG_THREADS")
    n = numba.config.NUMBA_NUM_THREADS
    if cap:
        n = max(1, min(n, int(cap)))
    if single_thread:
        n = 1
        if hasattr(os, "sched_setaffinity"):
            cpus = sorted(os.sched_getaffinity(0))
            os.sched_setaffinity(0, {cpus[0]})
    numba.set_num_threads(n)


def _write_frame_artifacts(out: Path, i: int, res, emit, legend) -> None:
    stem = f"{i:05d}"
    seg = res.segmentation
    if "labels" in emit or "colorized" in emit:
        color_path = out / f"labels_{stem}.ppm" if "colorized" in emit else None
        if "labels" in emit:
            imageio.write_label_map(seg, out / f"labels_{stem}.seg", color_path)
        else:
            imageio.save_image(color_path, imageio.colorize_labels(seg.labels))
    if "flow" in emit or "flow-viz" in emit:
        viz = out / f"flow_{stem}.ppm" if "flow-viz" in emit else None
        if "flow" in emit:
            imageio.write_flow(res.flow, out / f"flow_{stem}.csv", viz, labels=seg.labels)
        else:
            imageio.save_image(viz, imageio.flow_to_color(res.flow, seg.labels))
    if "semantics" in emit and res.semantics is not None:
        imageio.save_pgm(out / f"sem_{stem}.pgm", res.semantics.classes)


def run_stream(cfg: RunConfig) -> int:
    frames = resolve_frames(cfg.input)
    if not frames:
        print(f"error: no input frames found for {cfg.input!r}", file=sys.stderr)
        return EXIT_NO_INPUT
    sem_paths: list[Path] = []
    legend = None
    if cfg.semantics:
        sem_paths = resolve_frames(cfg.semantics, suffixes=(".pgm",))
        if len(sem_paths) < len(frames):
            print(
                f"error: {len(sem_paths)} semantic maps for {len(frames)} frames",
                file=sys.stderr,
            )
            return EXIT_NO_INPUT
        legend_path = cfg.legend or (sem_paths[0].parent / "legend.txt")
        if Path(legend_path).exists():
            legend = load_legend(legend_path)
    configure_threads(cfg.single_thread)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)

    state = StreamState(cfg.params)
    rows: list[tuple[int, str, float]] = []
    status = EXIT_OK
    start = time.perf_counter()
    done = 0
    for i, path in enumerate(frames):
        t0 = time.perf_counter()
        try:
            frame = load_frame(path)
            sem = load_semantic_map(sem_paths[i], legend) if sem_paths else None
        except (OSError, FormatError, ValueError) as exc:
            print(f"error: cannot decode frame {i} ({path}): {exc}", file=sys.stderr)
            status = EXIT_DECODE
            break
        decode_ms = (time.perf_counter() - t0) * 1e3
        try:
            res = process_frame(state, frame, sem)
        except StreamError as exc:
            print(f"error: {exc}", file=sys.stderr)
            status = EXIT_DECODE
            break
        t1 = time.perf_counter()
        _write_frame_artifacts(out, i, res, cfg.emit, legend)
        write_ms = (time.perf_counter() - t1) * 1e3
        rows.append((i, "decode", decode_ms))
        rows.extend((i, stage, ms) for stage, ms in res.timings.items())
        rows.append((i, "write", write_ms))
        rows.append((i, "total", (time.perf_counter() - t0) * 1e3))
        done += 1
        logger.info("frame %d: %d regions, %d fresh labels", i, res.segmentation.n_regions, len(res.fresh))
    elapsed = time.perf_counter() - start
    if "timings" in cfg.emit:
        fps = done / elapsed if elapsed > 0 else 0.0
        lines = ["frame,stage,ms"]
        lines += [f"{i},{stage},{ms:.3f}" for i, stage, ms in rows]
        lines.append(f"all,fps,{fps:.3f}")
        (out / "timings.csv").write_text("\n".join(lines) + "\n")
    return status


def _percentile(values, q):
    return float(np.percentile(np.asarray(values), q))


def run_bench(
    sizes: list[tuple[int, int]],
    frames: int,
    params: StreamParams,
    single_thread: bool = False,
    seed: int = 0,
) -> tuple[list[dict], str]:
    """Time the full per-frame pipeline on synthetic streams; the first frame is warm-up."""
    configure_threads(single_thread)
    # compile kernels outside the timed region
    warm = render_scene(busy_scene(32, 24, frames=2, n_shapes=2, seed=seed))
    warm_state = StreamState(params)
    for f in warm.frames:
        process_frame(warm_state, f)

    results = []
    lines = []
    for w, h in sizes:
        scene = render_scene(busy_scene(w, h, frames=frames + 1, seed=seed))
        state = StreamState(params)
        times = []
        for i, f in enumerate(scene.frames):
            t0 = time.perf_counter()
            process_frame(state, f)
            dt = time.perf_counter() - t0
            if i > 0:
                times.append(dt)
        med = statistics.median(times)
        rec = {
            "width": w,
            "height": h,
            "frames": len(times),
            "ms_median": med * 1e3,
            "ms_p95": _percentile(times, 95) * 1e3,
            "fps_median": 1.0 / med,
        }
        results.append(rec)
        lines.append(
            f"{w}x{h}: fps_median={rec['fps_median']:.2f}, ms_median={rec['ms_median']:.1f}, "
            f"ms_p95={rec['ms_p95']:.1f}"
        )
    lines.append(f"# {REFERENCE_NOTE}")
    return results, "\n".join(lines)


def _parse_size(text: str) -> tuple[int, int]:
    w, _, h = text.lower().partition("x")
    return int(w), int(h)


def _add_param_args(p: argparse.ArgumentParser) -> None:
    d = StreamParams()
    g = p.add_argument_group("segmentation parameters")
    g.add_argument("--k", type=float, default=d.k,
                   help="scale of observation k in the merge test Int(X) + k/|X| (default: %(default)s)")
    g.add_argument("--delta", type=int, default=d.delta,
                   help="minimum region size in pixels, delta; smaller regions are absorbed (default: %(default)s)")
    g.add_argument("--sigma", type=float, default=d.sigma,
                   help="Gaussian pre-smoothing standard deviation sigma, pixels (default: %(default)s)")
    g.add_argument("--radius-frac", type=float, default=d.radius_frac,
                   help="centroid radius for region matching, as a fraction of the image diagonal (default: %(default)s)")
    g.add_argument("--tau-safe", type=float, default=d.tau_safe,
                   help="safety test tolerance tau_safe: allowed share of seeded pixels disagreeing "
                        "with their region's dominant seed (default: %(default)s)")
    g.add_argument("--erode-iters", type=int, default=d.erode_iters,
                   help="erosion rounds (3x3 cross) used to rebuild seeds after a failed safety test (default: %(default)s)")
    g.add_argument("--theta-new", type=int, default=None,
                   help="theta_new: fragments smaller than this get a fresh label (default: same as --delta)")
    g.add_argument("--c-sem", type=float, default=d.c_sem,
                   help="c_sem: constant added to edge weights across semantic contours (default: %(default)s)")
    g.add_argument("--flow-max-frac", type=float, default=d.flow_max_frac,
                   help="flow_max as a fraction of the image diagonal; faster regions do not inherit "
                        "semantics (default: %(default)s)")


def _params_from(args) -> StreamParams:
    return StreamParams(
        k=args.k,
        delta=args.delta,
        sigma=args.sigma,
        radius_frac=args.radius_frac,
        tau_safe=args.tau_safe,
        erode_iters=args.erode_iters,
        theta_new=args.theta_new,
        c_sem=args.c_sem,
        flow_max_frac=args.flow_max_frac,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalseg",
        description="Causal, temporally consistent superpixel segmentation of frame sequences.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="segment a frame sequence")
    run.add_argument("input", help="directory of .ppm/.png frames, printf pattern (f_%%04d.ppm) or glob")
    run.add_argument("-o", "--output", required=True, help="output directory")
    run.add_argument("--semantics", default=None,
                     help="per-frame class-id PGMs (directory, pattern or glob), one per frame (default: none)")
    run.add_argument("--legend", default=None,
                     help="class legend file with lines 'id,name' (default: legend.txt next to the PGMs)")
    run.add_argument("--emit", default=DEFAULT_EMIT,
                     help=f"comma-separated artifacts from {', '.join(EMIT_CHOICES)} (default: %(default)s)")
    run.add_argument("--single-thread", action="store_true",
                     help="pin to one core (default: off; SEG_THREADS caps threads)")
    _add_param_args(run)

    bench = sub.add_parser("bench", help="time the pipeline on synthetic streams")
    bench.add_argument("--sizes", default="320x240,640x380", help="comma-separated WxH (default: %(default)s)")
    bench.add_argument("--frames", type=int, default=20, help="timed frames per size (default: %(default)s)")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--single-thread", action="store_true", help="pin to one core (default: off)")
    _add_param_args(bench)

    syn = sub.add_parser("synth", help="render a synthetic scene to PPM frames")
    syn.add_argument("-o", "--output", required=True)
    src = syn.add_mutually_exclusive_group()
    src.add_argument("--scene", help="scene file (key = value lines)")
    src.add_argument("--preset", choices=("square", "busy"), default="square")
    syn.add_argument("--width", type=int, default=96)
    syn.add_argument("--height", type=int, default=64)
    syn.add_argument("--frames", type=int, default=10)
    syn.add_argument("--noise", type=float, default=5.0)
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--flicker", type=float, default=None,
                     help="also write flickering class predictions with this per-region flip rate")
    return parser


def _cmd_synth(args) -> int:
    if args.scene:
        spec = SceneSpec.load(args.scene)
    elif args.preset == "busy":
        spec = busy_scene(args.width, args.height, frames=args.frames, seed=args.seed)
    else:
        spec = translating_square_scene(args.width, args.height, frames=args.frames,
                                         noise=args.noise, seed=args.seed)
    out = Path(args.output)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    spec.save(out / "scene.txt")
    scene = render_scene(spec)
    for i, f in enumerate(scene.frames):
        imageio.save_ppm(out / "frames" / f"{i:05d}.ppm", f.pixels)
    if args.flicker is not None:
        gt_sem = [np.minimum(g, 1) for g in scene.gt_labels]
        noisy = flicker_labels(gt_sem, args.flicker, seed=args.seed, regions=scene.gt_labels, start=1)
        (out / "semantics").mkdir(exist_ok=True)
        (out / "truth").mkdir(exist_ok=True)
        for i, (n, g) in enumerate(zip(noisy, gt_sem)):
            imageio.save_pgm(out / "semantics" / f"{i:05d}.pgm", n)
            imageio.save_pgm(out / "truth" / f"{i:05d}.pgm", g)
        (out / "semantics" / "legend.txt").write_text("0,background\n1,object\n")
    print(f"wrote {len(scene.frames)} frames to {out / 'frames'}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        params = _params_from(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_INPUT
    if args.command == "bench":
        _, report = run_bench(
            [_parse_size(s) for s in args.sizes.split(",")],
            args.frames,
            params,
            single_thread=args.single_thread,
            seed=args.seed,
        )
        print(report)
        return EXIT_OK
    emit = frozenset(e.strip() for e in args.emit.split(",") if e.strip())
    unknown = emit - set(EMIT_CHOICES)
    if unknown:
        print(f"error: unknown --emit values {sorted(unknown)}", file=sys.stderr)
        return EXIT_NO_INPUT
    cfg = RunConfig(
        args.input, args.output, params, args.semantics, args.legend, emit, args.single_thread
    )
    return run_stream(cfg)


if __name__ == "__main__":
    sys.exit(main())
