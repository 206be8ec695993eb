"""CCD readout timing simulator and shutter-offset estimation.

A CCD frame alternates an acquisition phase with a row-by-row read phase.
A strobe flash that lands in the read phase deposits charge in the sensor
column of the light source while rows are mid-transfer, which shows up as
a bright dot displaced from the source: ``d = (t_flash - t_read_start) /
t_per_row`` rows above it in the current frame, and mirrored ``n - d``
rows below it in the next frame. Only one of the two lands inside the
image. Flashes during acquisition leave no dot.

With a flash rate far above the frame rate, the spacing of same-side dots
in one frame inverts to the per-row transfer time: ``t_per_row = 1 /
(spacing * f_flash)``. With the flash rate equal to the frame rate, each
camera shows a single stable dot whose distance to the source encodes the
camera's shutter phase, which is what the offset estimator uses.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, FvrError

ABOVE = "above"
BELOW = "below"


class ProtocolViolationError(FvrError, ValueError):
    """The observed smear pattern violates the estimation protocol."""


class FlashInAcquisitionError(FvrError, ValueError):
    """A camera shows no smear dot (the flash fell in acquisition)."""


class InsufficientDataError(FvrError, ValueError):
    """Not enough dots to estimate timing."""


@dataclass(frozen=True)
class CcdTimingModel:
    """Readout timing of one camera; times in seconds."""

    n_rows: int
    t_per_row: float
    frame_rate: float
    t_acquire: float
    t_start_offset: float = 0.0

    def __post_init__(self):
        if self.n_rows < 1:
            raise ValueError("n_rows must be >= 1")
        if self.t_per_row <= 0 or self.frame_rate <= 0 or self.t_acquire < 0:
            raise ValueError("timing parameters must be positive")
        if self.n_rows * self.t_per_row + self.t_acquire > 1.0 / self.frame_rate + 1e-12:
            raise ValueError("acquisition + read exceeds the frame period")

    @property
    def frame_period(self) -> float:
        return 1.0 / self.frame_rate

    @property
    def t_read(self) -> float:
        """Total image transfer time: n_rows * t_per_row."""
        return self.n_rows * self.t_per_row

    def read_start(self, frame: int) -> float:
        return self.t_start_offset + frame * self.frame_period + self.t_acquire


@dataclass(frozen=True)
class StrobeConfig:
    f_flash: float
    phase: float = 0.0
    light_row: int = 0

    def __post_init__(self):
        if self.f_flash <= 0:
            raise ValueError("flash rate must be positive")
        if self.light_row < 0:
            raise ValueError("light_row must be non-negative")


@dataclass
class SmearPattern:
    """Observed dots per frame: lists of (row, side) plus scene constants."""

    frames: list[list[tuple[int, str]]]
    light_row: int
    n_rows: int

    def __post_init__(self):
        for i, dots in enumerate(self.frames):
            for row, side in dots:
                if not (0 <= row < self.n_rows):
                    raise ValueError(f"frame {i}: dot row {row} outside [0, {self.n_rows})")
                if side not in (ABOVE, BELOW):
                    raise ValueError(f"frame {i}: bad side {side!r}")


def flash_dot_pair(n_rows: int, light_row: int, row_offset: int):
    """Both candidate dots of one read-phase flash, before image clipping.

    ``row_offset`` is the integer number of rows already transferred when
    the flash fires. Returns ((0, ABOVE, row), (1, BELOW, row)): the above
    dot belongs to the current frame, the mirrored below dot to the next;
    their distances to the source always sum to ``n_rows``.
    """
    if not (0 <= row_offset < n_rows):
        raise ValueError("row_offset must be in [0, n_rows)")
    above_row = light_row - row_offset
    below_row = light_row + (n_rows - row_offset)
    return (0, ABOVE, above_row), (1, BELOW, below_row)


def simulate_smear(cam: CcdTimingModel, strobe: StrobeConfig, frames: int) -> SmearPattern:
    """Dots produced by every strobe flash over ``frames`` frames.

    Dots are rasterized by flooring the row offset; dots falling outside
    the image are dropped. A flash instant is assigned to whichever phase
    contains it.
    """
    if frames < 1:
        raise ValueError("need at least one frame")
    if not (0 <= strobe.light_row < cam.n_rows):
        raise ValueError("light source row outside the image")
    out: list[list[tuple[int, str]]] = [[] for _ in range(frames)]
    # frame -1's read phase feeds below-side dots into frame 0
    for i in range(-1, frames):
        r0 = cam.read_start(i)
        r1 = r0 + cam.t_read
        m0 = math.ceil((r0 - strobe.phase) * strobe.f_flash - 1e-12)
        m1 = math.floor((r1 - strobe.phase) * strobe.f_flash)
        for m in range(max(m0, 0), m1 + 1):
            t_flash = strobe.phase + m / strobe.f_flash
            if not (r0 <= t_flash < r1):
                continue
            d = int(math.floor((t_flash - r0) / cam.t_per_row))
            d = min(d, cam.n_rows - 1)
            (df_a, side_a, row_a), (df_b, side_b, row_b) = flash_dot_pair(
                cam.n_rows, strobe.light_row, d
            )
            if 0 <= row_a < cam.n_rows and 0 <= i + df_a < frames:
                out[i + df_a].append((row_a, side_a))
            if 0 <= row_b < cam.n_rows and 0 <= i + df_b < frames:
                out[i + df_b].append((row_b, side_b))
    for dots in out:
        dots.sort()
    return SmearPattern(out, strobe.light_row, cam.n_rows)


def estimate_t_per_row(pattern: SmearPattern, f_flash: float) -> float:
    """Invert the mean same-side adjacent dot spacing: 1 / (spacing * f)."""
    if f_flash <= 0:
        raise ValueError("flash rate must be positive")
    spacings: list[int] = []
    for dots in pattern.frames:
        for side in (ABOVE, BELOW):
            rows = sorted(r for r, s in dots if s == side)
            spacings.extend(b - a for a, b in zip(rows, rows[1:]))
    if not spacings:
        raise InsufficientDataError(
            "need two adjacent same-side dots in one frame; raise the flash rate"
        )
    return 1.0 / (float(np.mean(spacings)) * f_flash)


def _single_dot(pattern: SmearPattern, cam_index: int) -> tuple[int, str]:
    for dots in pattern.frames:
        if len(dots) > 1:
            raise ProtocolViolationError(
                f"camera {cam_index}: multiple dots per frame; "
                "set the flash rate equal to the frame rate"
            )
        if dots:
            return dots[0]
    raise FlashInAcquisitionError(
        f"camera {cam_index}: no smear dot; the flash lands in the acquisition phase"
    )


def estimate_offsets(
    patterns: list[SmearPattern], t_per_row: float
) -> tuple[list[float], float]:
    """Relative shutter offsets (seconds, camera 0 as reference) and the
    worst-case pairwise synchronization error.

    Requires the flash rate to equal the frame rate so each camera shows a
    single dot, on the same side of the source for all cameras.
    """
    if not patterns:
        raise ValueError("need at least one pattern")
    if t_per_row <= 0:
        raise ValueError("t_per_row must be positive")
    rows_transferred = []
    sides = []
    for ci, pat in enumerate(patterns):
        row, side = _single_dot(pat, ci)
        if side == ABOVE:
            d = pat.light_row - row
        else:
            d = pat.n_rows - (row - pat.light_row)
        rows_transferred.append(d)
        sides.append(side)
    if len(set(sides)) > 1:
        raise ProtocolViolationError(
            "dots on mixed sides of the light source; adjust shutters until all "
            "cameras show the dot on the same side"
        )
    offsets = [(rows_transferred[0] - d) * t_per_row for d in rows_transferred]
    worst = max(offsets) - min(offsets)
    return offsets, worst


def suggest_shutter_resets(offsets: list[float]) -> list[tuple[int, float]]:
    """Signed per-camera delays aligning every camera to the median offset.

    Cameras already on the median are omitted, so an all-zero input yields
    an empty plan.
    """
    if not offsets:
        return []
    med = float(np.median(offsets))
    return [(i, med - off) for i, off in enumerate(offsets) if med - off != 0.0]


# --- scenario file ----------------------------------------------------------
#
# UTF-8 "key = value" lines: n_rows, t_per_row, frame_rate, t_acquire,
# f_flash, flash_phase, light_row, and offsets (one float per camera).

_SCN_KEYS = (
    "n_rows", "t_per_row", "frame_rate", "t_acquire", "f_flash", "flash_phase",
    "light_row", "offsets",
)


def save_scenario(path, cams: list[CcdTimingModel], strobe: StrobeConfig) -> None:
    c0 = cams[0]
    lines = [
        "# fvr sync scenario v1",
        f"n_rows = {c0.n_rows}",
        f"t_per_row = {c0.t_per_row!r}",
        f"frame_rate = {c0.frame_rate!r}",
        f"t_acquire = {c0.t_acquire!r}",
        f"f_flash = {strobe.f_flash!r}",
        f"flash_phase = {strobe.phase!r}",
        f"light_row = {strobe.light_row}",
        "offsets = " + " ".join(repr(c.t_start_offset) for c in cams),
    ]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_scenario(path) -> tuple[list[CcdTimingModel], StrobeConfig]:
    kv: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in _SCN_KEYS:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
            kv[key] = val.strip()
    missing = [k for k in _SCN_KEYS if k not in kv]
    if missing:
        raise FormatError(f"{path}: missing keys {missing}")
    try:
        offsets = [float(x) for x in kv["offsets"].split()]
        cams = [
            CcdTimingModel(
                n_rows=int(kv["n_rows"]),
                t_per_row=float(kv["t_per_row"]),
                frame_rate=float(kv["frame_rate"]),
                t_acquire=float(kv["t_acquire"]),
                t_start_offset=off,
            )
            for off in offsets
        ]
        strobe = StrobeConfig(
            f_flash=float(kv["f_flash"]),
            phase=float(kv["flash_phase"]),
            light_row=int(kv["light_row"]),
        )
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from e
    return cams, strobe


def default_scenario(
    n_cameras: int = 4, seed: int = 0, max_offset: float = 2e-3
) -> tuple[list[CcdTimingModel], StrobeConfig]:
    """A 1280x720 rig at 23.98 fps with flash rate matched to the frame rate
    and seeded hidden shutter offsets."""
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-max_offset, max_offset, size=n_cameras)
    cams = [
        CcdTimingModel(
            n_rows=720, t_per_row=54e-6, frame_rate=23.98, t_acquire=2e-3,
            t_start_offset=float(o),
        )
        for o in offsets
    ]
    strobe = StrobeConfig(f_flash=23.98, phase=0.015, light_row=360)
    return cams, strobe


def save_offsets_csv(path, offsets: list[float]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["camera", "offset_s"])
        for i, off in enumerate(offsets):
            w.writerow([i, repr(float(off))])
