#!/usr/bin/env python3
"""Demonstrate the CCD smear synchronization workflow on a seeded scenario:
measure the row time with a fast strobe, estimate per-camera shutter
offsets at frame-rate flashing, and show the correction plan closing the
loop."""

import argparse

from fvr.syncsim import (
    CcdTimingModel,
    StrobeConfig,
    default_scenario,
    estimate_offsets,
    estimate_t_per_row,
    simulate_smear,
    suggest_shutter_resets,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cameras", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cams, strobe = default_scenario(n_cameras=args.cameras, seed=args.seed)
    print(f"{args.cameras} cameras at {cams[0].frame_rate} fps, "
          f"hidden offsets up to +/-2 ms")

    fast = StrobeConfig(f_flash=30 * cams[0].frame_rate, phase=strobe.phase,
                        light_row=strobe.light_row)
    t_row = estimate_t_per_row(simulate_smear(cams[0], fast, 3), fast.f_flash)
    print(f"measured t_per_row: {t_row * 1e6:.2f} us (true {cams[0].t_per_row * 1e6:.2f} us)")

    patterns = [simulate_smear(c, strobe, 3) for c in cams]
    offsets, worst = estimate_offsets(patterns, t_row)
    print(f"worst-case sync error before correction: {worst * 1e3:.3f} ms")
    plan = suggest_shutter_resets(offsets)
    for cam_i, delay in plan:
        print(f"  camera {cam_i}: shift shutter by {delay * 1e3:+.3f} ms")

    corrected = [
        CcdTimingModel(c.n_rows, c.t_per_row, c.frame_rate, c.t_acquire,
                       c.t_start_offset + dict(plan).get(i, 0.0))
        for i, c in enumerate(cams)
    ]
    patterns2 = [simulate_smear(c, strobe, 3) for c in corrected]
    _, worst2 = estimate_offsets(patterns2, t_row)
    print(f"worst-case sync error after correction:  {worst2 * 1e3:.3f} ms "
          f"(one row = {t_row * 1e3:.4f} ms)")


if __name__ == "__main__":
    main()
