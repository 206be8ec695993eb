"""Command-line front end.

Subcommands: synth, render, hull, reconstruct, temp-map, metrics, sync-sim,
experiment. Options come from an optional key-value config file plus
command-line overrides; explicit flags always win. Exit codes: 0 success,
2 usage error, 3 data/format error, 4 acceptance-check failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import FormatError, FvrError
from .experiments import (
    EXPERIMENT_NAMES,
    SceneConfig,
    load_scene_config,
    run_experiment,
    scene_from_pairs,
)
from .geometry import load_cameras, save_cameras
from .imgio import Image, load_image, write_fim, write_pbm, write_ppm
from .preprocess import Rect, bounding_box, threshold_mask
from .radiometry import build_color_temp_map
from .reconstruct import (
    reconstruct_color,
    reconstruct_temperature,
    rmse_pixels,
    rmse_volume,
    write_trace_csv,
)
from .render import render_view
from .syncsim import (
    CcdTimingModel,
    StrobeConfig,
    estimate_offsets,
    estimate_t_per_row,
    load_scenario,
    save_offsets_csv,
    simulate_smear,
    suggest_shutter_resets,
)
from .volume import compute_visual_hull, load_hull, load_volume, save_hull, save_volume


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scene config file (key = value lines)")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one scene key; repeatable, wins over --config",
    )


def _scene(args) -> SceneConfig:
    cfg = SceneConfig()
    if args.config:
        cfg = load_scene_config(args.config, cfg)
    pairs = {}
    for item in args.overrides:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        k, _, v = item.partition("=")
        pairs[k.strip()] = v.strip()
    try:
        return scene_from_pairs(pairs, cfg)
    except FormatError as e:
        raise ValueError(str(e)) from e  # bad --set values are usage errors


def _cmd_synth(args) -> int:
    cfg = _scene(args)
    vols = cfg.synth_volumes()
    grids = [vols["red"], vols["green"], vols["blue"]]
    save_volume(args.out_volume, grids)
    if "temperature" in vols and args.out_temperature:
        save_volume(args.out_temperature, [vols["temperature"]])
    if args.out_cameras:
        save_cameras(args.out_cameras, cfg.cameras())
    print(f"wrote {args.out_volume} ({cfg.kind}, {cfg.grid_nx}x{cfg.grid_ny}x{cfg.grid_nz})")
    return 0


def _cmd_render(args) -> int:
    cfg = _scene(args)
    grids = load_volume(args.volume)
    cameras = load_cameras(args.cameras)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rcfg = cfg.render_config()
    for i, cam in enumerate(cameras):
        img = render_view(cam, grids, None, rcfg)
        if args.format in ("ppm", "both"):
            write_ppm(out / f"view_{i:02d}.ppm", img)
        if args.format in ("fim", "both"):
            write_fim(out / f"view_{i:02d}.fim", img)
    print(f"rendered {len(cameras)} views to {out}")
    return 0


def _load_images(paths) -> list[Image]:
    return [load_image(p) for p in paths]


def _cmd_hull(args) -> int:
    cfg = _scene(args)
    cameras = load_cameras(args.cameras)
    images = _load_images(args.images)
    masks = [threshold_mask(img, cfg.threshold)[0] for img in images]
    if args.out_masks:
        mask_dir = Path(args.out_masks)
        mask_dir.mkdir(parents=True, exist_ok=True)
        for i, m in enumerate(masks):
            write_pbm(mask_dir / f"mask_{i:02d}.pbm", m.bits)
    geom = cfg.grid_geometry(cameras)
    hull = compute_visual_hull(geom, [m.bits for m in masks], cameras)
    save_hull(args.out, hull, geom)
    inside = int(hull.inside_voxels().sum())
    total = geom.nx * geom.ny * geom.nz
    print(f"hull: {inside}/{total} voxels inside ({100.0 * inside / total:.1f}%)")
    return 0


def _cmd_reconstruct(args) -> int:
    cfg = _scene(args)
    cameras = load_cameras(args.cameras)
    images = [img.to_rgb() for img in _load_images(args.images)]
    geom = cfg.grid_geometry(cameras)
    rcfg = cfg.render_config()
    rec_cfg = cfg.reconstruction_config()
    snap_dir = Path(args.snapshots) if args.snapshots else None
    if snap_dir:
        snap_dir.mkdir(parents=True, exist_ok=True)

    if args.mode == "color":
        callback = None
        if snap_dir:
            state = {}

            def callback(tag, iteration, grid, rmse):
                state[tag] = grid
                zero = grid.copy()
                zero.values = np.zeros_like(zero.values)
                grids = [state.get(t, zero) for t in ("red", "green", "blue")]
                img = render_view(cameras[0], grids, None, rcfg)
                write_ppm(snap_dir / f"snap_{tag}_{iteration:04d}.ppm", img)

        res = reconstruct_color(
            images, cameras, geom, rec_cfg, render_cfg=rcfg,
            threshold=cfg.threshold, dilate=cfg.dilate, callback=callback,
        )
        save_volume(args.out_volume, res.grids)
        if args.trace:
            write_trace_csv(args.trace, res.traces)
        finals = {t: res.traces[t].rmse[-1] for t in ("red", "green", "blue")}
        print(
            "reconstructed color volume; final input-view RMSE "
            + " ".join(f"{t}={v:.3f}" for t, v in finals.items())
        )
    else:
        cmap = build_color_temp_map(cfg.t_min, cfg.t_max, cfg.t_step)
        snap_cb = None
        if snap_dir:

            def snap_cb(iteration, temp_grid, rgb_grids):
                img = render_view(cameras[0], rgb_grids, None, rcfg)
                write_ppm(snap_dir / f"snap_temp_{iteration:04d}.ppm", img)

        res = reconstruct_temperature(
            images, cameras, cmap, geom, rec_cfg, render_cfg=rcfg,
            threshold=cfg.threshold, dilate=cfg.dilate, snapshot_callback=snap_cb,
        )
        save_volume(args.out_volume, [res.temp_grid])
        if args.trace:
            write_trace_csv(args.trace, {"green": res.trace})
        print(
            f"reconstructed temperature volume; final green RMSE "
            f"{res.trace.rmse[-1]:.3f}, clamped {res.n_clamped_low}+{res.n_clamped_high}"
        )
    return 0


def _cmd_temp_map(args) -> int:
    cmap = build_color_temp_map(args.t_min, args.t_max, args.step)
    cmap.save_csv(args.out)
    print(f"wrote {args.out} ({cmap.temperatures.size} rows)")
    return 0


def _cmd_metrics(args) -> int:
    if args.volumes:
        ga = load_volume(args.a)
        gb = load_volume(args.b)
        hull, _ = load_hull(args.hull)
        for a, b in zip(ga, gb):
            print(f"{a.channel_tag}: vol_rmse = {rmse_volume(a, b, hull)!r}")
    else:
        a = load_image(args.a)
        b = load_image(args.b)
        if args.bbox:
            u0, v0, u1, v1 = args.bbox
            bbox = Rect(u0, v0, u1, v1)
        else:
            masks = [threshold_mask(img.to_rgb())[0] for img in (a, b)]
            bbox = bounding_box(masks)
        vals = rmse_pixels(a, b, bbox)
        print("rmse:", " ".join(repr(float(v)) for v in vals))
    return 0


def _cmd_sync_sim(args) -> int:
    cams, strobe = load_scenario(args.scenario)
    # phase 1: fast strobe to measure the row-transfer time
    measure_rate = args.measure_flash_rate or 30.0 * cams[0].frame_rate
    fast = StrobeConfig(f_flash=measure_rate, phase=strobe.phase, light_row=strobe.light_row)
    pattern0 = simulate_smear(cams[0], fast, frames=3)
    t_row = estimate_t_per_row(pattern0, fast.f_flash)
    # phase 2: flash rate = frame rate, one dot per camera
    patterns = [simulate_smear(c, strobe, frames=args.frames) for c in cams]
    offsets, worst = estimate_offsets(patterns, t_row)
    save_offsets_csv(args.out, offsets)
    print(f"estimated t_per_row: {t_row * 1e6:.3f} us (true {cams[0].t_per_row * 1e6:.3f} us)")
    print(f"worst-case sync error: {worst * 1e3:.3f} ms")
    plan = suggest_shutter_resets(offsets)
    if plan:
        for cam_i, delay in plan:
            print(f"  camera {cam_i}: delay shutter by {delay * 1e3:+.3f} ms")
    else:
        print("  cameras already aligned")
    if args.apply_plan and plan:
        delays = dict(plan)
        cams2 = [
            CcdTimingModel(
                c.n_rows, c.t_per_row, c.frame_rate, c.t_acquire,
                c.t_start_offset + delays.get(i, 0.0),
            )
            for i, c in enumerate(cams)
        ]
        patterns2 = [simulate_smear(c, strobe, frames=args.frames) for c in cams2]
        _, worst2 = estimate_offsets(patterns2, t_row)
        print(f"after plan: worst-case sync error {worst2 * 1e3:.3f} ms")
    return 0


def _cmd_experiment(args) -> int:
    cfg = _scene(args)
    report = run_experiment(
        args.name, cfg, args.out, snapshots=args.snapshots, save_renders=args.save_renders
    )
    for line in report.summary_lines():
        print(line)
    if args.check and not report.all_passed:
        return 4
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fvr",
        description="Sparse-view reconstruction of emissive volumes (flame, smoke).",
    )
    p.add_argument("--threads", type=int, default=0, help="worker threads (0 = machine default)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic volume and camera rig")
    _add_config_args(s)
    s.add_argument("--out-volume", required=True)
    s.add_argument("--out-cameras")
    s.add_argument("--out-temperature", help="also save the ground-truth temperature lattice")
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("render", help="render a volume from camera viewpoints")
    _add_config_args(s)
    s.add_argument("--volume", required=True)
    s.add_argument("--cameras", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--format", choices=("ppm", "fim", "both"), default="both")
    s.set_defaults(func=_cmd_render)

    s = sub.add_parser("hull", help="carve the visual hull from flame masks")
    _add_config_args(s)
    s.add_argument("--cameras", required=True)
    s.add_argument("--images", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--out-masks", help="directory for PBM mask exports")
    s.set_defaults(func=_cmd_hull)

    s = sub.add_parser("reconstruct", help="reconstruct a volume from view images")
    _add_config_args(s)
    s.add_argument("--cameras", required=True)
    s.add_argument("--images", nargs="+", required=True)
    s.add_argument("--out-volume", required=True)
    s.add_argument("--mode", choices=("color", "temperature"), default="color")
    s.add_argument("--trace", help="write per-iteration RMSE CSV here")
    s.add_argument("--snapshots", help="directory for per-iteration snapshot images")
    s.set_defaults(func=_cmd_reconstruct)

    s = sub.add_parser("temp-map", help="export the temperature/RGB lookup table")
    s.add_argument("--t-min", type=float, default=1000.0)
    s.add_argument("--t-max", type=float, default=2300.0)
    s.add_argument("--step", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_temp_map)

    s = sub.add_parser("metrics", help="RMSE between images or volumes")
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--volumes", action="store_true", help="compare FVR1 volumes inside a hull")
    s.add_argument("--hull", help="hull file (required with --volumes)")
    s.add_argument("--bbox", type=int, nargs=4, metavar=("U0", "V0", "U1", "V1"))
    s.set_defaults(func=_cmd_metrics)

    s = sub.add_parser("sync-sim", help="simulate CCD smear synchronization")
    s.add_argument("--scenario", required=True)
    s.add_argument("--frames", type=int, default=5)
    s.add_argument("--out", required=True, help="offsets CSV")
    s.add_argument("--measure-flash-rate", type=float, default=0.0)
    s.add_argument("--apply-plan", action="store_true")
    s.set_defaults(func=_cmd_sync_sim)

    s = sub.add_parser("experiment", help="run a named evaluation experiment")
    _add_config_args(s)
    s.add_argument("--name", choices=EXPERIMENT_NAMES, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--check", action="store_true", help="exit 4 if any check fails")
    s.add_argument("--snapshots", action="store_true")
    s.add_argument("--save-renders", action="store_true")
    s.set_defaults(func=_cmd_experiment)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        _kernels.set_threads(args.threads)
    try:
        return args.func(args)
    except (FvrError, OSError) as e:
        # bad or missing data (parse failures, empty hulls, no flame, ...)
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
