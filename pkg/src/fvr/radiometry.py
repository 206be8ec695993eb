"""Black-body radiometry, the color/temperature lookup map, and scattering.

The temperature pipeline rests on two facts: a black body's spectral
radiance follows Planck's law, and over roughly 1000 K to 2300 K the green
channel of the resulting RGB color grows strictly with temperature, so the
map can be inverted through green alone.

RGB values use the CIE 1931 2-degree observer, linear sRGB primaries (D65),
negatives clipped, and a single global exposure scale chosen so the largest
channel value over the whole table is 255. The global scale is what keeps
the per-channel monotonicity intact; any per-temperature normalization
would destroy it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .cie_data import CIE_1931_2DEG
from .errors import FormatError

# CODATA exact SI values
PLANCK_H = 6.62607015e-34  # J s
LIGHT_SPEED = 299792458.0  # m / s
BOLTZMANN_K = 1.380649e-23  # J / K


@dataclass(frozen=True)
class PhysicalConstants:
    h: float = PLANCK_H
    c: float = LIGHT_SPEED
    k_B: float = BOLTZMANN_K


# linear sRGB (D65) from CIE XYZ
XYZ_TO_SRGB = np.array(
    [
        [3.2404542, -1.5371385, -0.4985314],
        [-0.9692660, 1.8760108, 0.0415560],
        [0.0556434, -0.2040259, 1.0572252],
    ]
)


def planck_radiance(lam, T):
    """Spectral radiance of a black body, W sr^-1 m^-3.

    ``lam`` is the wavelength in meters, ``T`` the temperature in kelvin;
    both may be arrays.
    """
    lam = np.asarray(lam, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if np.any(lam <= 0) or np.any(T <= 0):
        raise ValueError("wavelength and temperature must be positive")
    x = PLANCK_H * LIGHT_SPEED / (lam * BOLTZMANN_K * T)
    amp = 2.0 * PLANCK_H * LIGHT_SPEED**2 / lam**5
    with np.errstate(over="ignore", under="ignore"):
        out = np.where(x > 700.0, amp * np.exp(-np.minimum(x, 1e6)), amp / np.expm1(x))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class PhaseConfig:
    """Anisotropy of the single-scattering phase function."""

    g: float = 0.0

    def __post_init__(self):
        if not (-1.0 < self.g < 1.0):
            raise ValueError(f"g must be in (-1, 1), got {self.g}")


def phase_hg(cfg: PhaseConfig, mu) -> float:
    """Henyey-Greenstein-type phase density (sr^-1) at cos(angle) = mu.

    The denominator carries +2*g*mu, so for g != 0 the forward/backward
    labeling depends on the orientation convention of mu; the function
    integrates to 1 over the sphere either way. g = 0 is isotropic.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(np.abs(mu) > 1.0):
        raise ValueError("mu must lie in [-1, 1]")
    g = cfg.g
    val = (1.0 - g * g) / (4.0 * np.pi * (1.0 + g * g + 2.0 * g * mu) ** 1.5)
    if val.ndim == 0:
        return float(val)
    return val


@dataclass
class ColorTempMap:
    """Tabulated temperature -> RGB map, invertible through green."""

    t_min: float
    t_max: float
    step: float
    temperatures: np.ndarray
    entries: np.ndarray  # (N, 3) on the [0, 255] scale

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max):
            raise ValueError("need 0 < t_min < t_max")
        self.temperatures = np.asarray(self.temperatures, dtype=np.float64)
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.shape != (self.temperatures.size, 3):
            raise ValueError("entries must be (N, 3)")
        if not np.all(np.isfinite(self.entries)) or np.any(self.entries < 0):
            raise ValueError("entries must be finite and non-negative")
        g = self.entries[:, 1]
        if np.any(np.diff(g) <= 0):
            raise ValueError(
                "green channel is not strictly increasing over the requested range"
            )

    @property
    def green(self) -> np.ndarray:
        return self.entries[:, 1]

    def green_of(self, T):
        """Forward lookup of the green intensity at temperature T (kelvin)."""
        return np.interp(T, self.temperatures, self.green)

    def rgb_of(self, T) -> np.ndarray:
        """Forward lookup of all three channels; T may be an array."""
        T = np.asarray(T, dtype=np.float64)
        out = np.stack(
            [np.interp(T, self.temperatures, self.entries[:, c]) for c in range(3)],
            axis=-1,
        )
        return out

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f)
            w.writerow(["temperature_K", "red", "green", "blue"])
            for T, (r, g, b) in zip(self.temperatures, self.entries):
                w.writerow([repr(float(T)), repr(float(r)), repr(float(g)), repr(float(b))])

    @classmethod
    def load_csv(cls, path) -> "ColorTempMap":
        temps, rgb = [], []
        with open(path, "r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != ["temperature_K", "red", "green", "blue"]:
                raise FormatError(f"{path}: unexpected header {header}")
            for row in reader:
                temps.append(float(row[0]))
                rgb.append([float(x) for x in row[1:4]])
        temps = np.array(temps)
        if temps.size < 2:
            raise FormatError(f"{path}: need at least two rows")
        step = float(temps[1] - temps[0])
        return cls(float(temps[0]), float(temps[-1]), step, temps, np.array(rgb))


def spectrum_to_xyz(radiance_fn) -> np.ndarray:
    """Trapezoid integration of a spectral radiance function (of wavelength
    in meters) against the CIE matching functions over 380-780 nm."""
    lam_nm = CIE_1931_2DEG[:, 0]
    lam_m = lam_nm * 1e-9
    L = radiance_fn(lam_m)
    return np.array(
        [np.trapezoid(L * CIE_1931_2DEG[:, 1 + c], lam_m) for c in range(3)]
    )


def build_color_temp_map(
    t_min: float = 1000.0, t_max: float = 2300.0, step: float = 1.0
) -> ColorTempMap:
    """Tabulate black-body RGB over [t_min, t_max] at the given spacing.

    Raises if the green channel fails to increase strictly over the range
    (the range would not be invertible through green).
    """
    if not (0 < t_min < t_max):
        raise ValueError("need 0 < t_min < t_max")
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(np.floor((t_max - t_min) / step + 1e-9))
    temps = t_min + step * np.arange(n + 1)
    if temps[-1] < t_max - 1e-9 * t_max:
        temps = np.append(temps, t_max)

    lam_m = CIE_1931_2DEG[:, 0] * 1e-9
    # radiance matrix: one spectrum per tabulated temperature
    L = planck_radiance(lam_m[None, :], temps[:, None])
    xyz = np.stack(
        [np.trapezoid(L * CIE_1931_2DEG[:, 1 + c][None, :], lam_m, axis=1) for c in range(3)],
        axis=1,
    )
    rgb = xyz @ XYZ_TO_SRGB.T
    rgb = np.maximum(rgb, 0.0)
    peak = rgb.max()
    if peak <= 0:
        raise ValueError("degenerate spectrum: all channels zero")
    rgb = rgb / peak * 255.0  # peak element maps to exactly 255
    return ColorTempMap(float(t_min), float(t_max), float(step), temps, rgb)


def temp_from_green(cmap: ColorTempMap, g):
    """Invert the map through the green channel.

    Returns ``(kelvin, clamped)``; out-of-range greens are clamped to the
    nearest endpoint and flagged. Accepts scalars or arrays.
    """
    g_arr = np.asarray(g, dtype=np.float64)
    lo, hi = cmap.green[0], cmap.green[-1]
    clamped = (g_arr < lo) | (g_arr > hi)
    g_clipped = np.clip(g_arr, lo, hi)
    T = np.interp(g_clipped, cmap.green, cmap.temperatures)
    if g_arr.ndim == 0:
        return float(T), bool(clamped)
    return T, clamped


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic low-discrepancy direction set on the unit sphere."""
    if n < 1:
        raise ValueError("need at least one direction")
    i = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
