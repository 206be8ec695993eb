import numpy as np
import pytest

from fvr.errors import FormatError
from fvr.radiometry import (
    BOLTZMANN_K,
    LIGHT_SPEED,
    PLANCK_H,
    ColorTempMap,
    PhaseConfig,
    build_color_temp_map,
    phase_hg,
    planck_radiance,
    temp_from_green,
)

WIEN_B = 2.898e-3  # m K


@pytest.fixture(scope="module")
def cmap():
    return build_color_temp_map(1000.0, 2300.0, 1.0)


# --- Planck radiance --------------------------------------------------------


def test_planck_strictly_increasing_in_temperature():
    temps = np.linspace(300.0, 6000.0, 400)
    for lam in (450e-9, 550e-9, 650e-9):
        vals = planck_radiance(lam, temps)
        assert np.all(np.diff(vals) > 0)


def test_planck_underflows_at_low_temperature():
    assert planck_radiance(550e-9, 50.0) < 1e-100


def test_planck_wien_peak():
    # independent oracle: the displacement law b / T
    lams = np.linspace(100e-9, 10e-6, 200_001)
    vals = planck_radiance(lams, 2000.0)
    peak = lams[np.argmax(vals)]
    expected = WIEN_B / 2000.0
    assert abs(peak - expected) / expected < 0.01
    assert expected == pytest.approx(1.449e-6, rel=1e-3)


def test_planck_domain_errors():
    with pytest.raises(ValueError):
        planck_radiance(-1e-9, 1000.0)
    with pytest.raises(ValueError):
        planck_radiance(500e-9, 0.0)


def test_planck_formula_spot_value():
    # direct transcription of the law as an independent check
    lam, T = 600e-9, 1800.0
    x = PLANCK_H * LIGHT_SPEED / (lam * BOLTZMANN_K * T)
    expected = 2 * PLANCK_H * LIGHT_SPEED**2 / lam**5 / (np.exp(x) - 1.0)
    assert planck_radiance(lam, T) == pytest.approx(expected, rel=1e-12)


# --- color-temperature map --------------------------------------------------


def test_map_green_strictly_increasing(cmap):
    assert np.all(np.diff(cmap.green) > 0)


def test_map_exposure_peak_is_exactly_255(cmap):
    assert cmap.entries.max() == 255.0


def test_map_deep_red_at_low_temperature(cmap):
    r, g, b = cmap.entries[0]
    assert r > 100 * b if b > 0 else r > 0


def test_map_rejects_bad_ranges():
    with pytest.raises(ValueError):
        build_color_temp_map(2300.0, 1000.0, 1.0)
    with pytest.raises(ValueError):
        build_color_temp_map(1000.0, 2300.0, -1.0)


def test_temp_from_green_endpoints(cmap):
    t, clamped = temp_from_green(cmap, cmap.green[0])
    assert t == pytest.approx(cmap.t_min) and not clamped
    t, clamped = temp_from_green(cmap, cmap.green[-1])
    assert t == pytest.approx(cmap.t_max) and not clamped


def test_temp_from_green_round_trip(cmap):
    rng = np.random.default_rng(42)
    temps = rng.uniform(cmap.t_min, cmap.t_max, size=50)
    back, clamped = temp_from_green(cmap, cmap.green_of(temps))
    assert not clamped.any()
    assert np.all(np.abs(back - temps) <= cmap.step)


def test_temp_from_green_clamps_and_flags(cmap):
    t, clamped = temp_from_green(cmap, cmap.green[-1] * 2.0)
    assert clamped and t == cmap.t_max
    t, clamped = temp_from_green(cmap, -1.0)
    assert clamped and t == cmap.t_min


def test_map_validation_rejects_nonmonotonic_green():
    temps = np.array([1000.0, 1100.0, 1200.0])
    entries = np.array([[1.0, 2.0, 0.0], [2.0, 1.5, 0.0], [3.0, 3.0, 0.0]])
    with pytest.raises(ValueError):
        ColorTempMap(1000.0, 1200.0, 100.0, temps, entries)


def test_map_csv_round_trip(tmp_path, cmap):
    path = tmp_path / "map.csv"
    cmap.save_csv(path)
    back = ColorTempMap.load_csv(path)
    assert np.array_equal(back.temperatures, cmap.temperatures)
    assert np.array_equal(back.entries, cmap.entries)
    with open(path) as f:
        assert f.readline().strip() == "temperature_K,red,green,blue"


def test_map_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("kelvin,r,g,b\n1000,1,2,3\n")
    with pytest.raises(FormatError):
        ColorTempMap.load_csv(path)


# --- phase function ---------------------------------------------------------


def sphere_quadrature(fn, n_mu=100, n_phi=100):
    """Product rule: Gauss-Legendre in cos(theta) x uniform in phi."""
    mu, w = np.polynomial.legendre.leggauss(n_mu)
    total = 0.0
    for phi in np.linspace(0, 2 * np.pi, n_phi, endpoint=False):
        total += np.sum(w * fn(mu)) * (2 * np.pi / n_phi)
    return total


def test_phase_isotropic_value():
    cfg = PhaseConfig(0.0)
    rng = np.random.default_rng(7)
    for mu in rng.uniform(-1, 1, size=10):
        assert phase_hg(cfg, mu) == pytest.approx(1.0 / (4 * np.pi), rel=1e-12)


@pytest.mark.parametrize("g", [-0.5, 0.0, 0.5])
def test_phase_normalizes_over_sphere(g):
    total = sphere_quadrature(lambda mu: phase_hg(PhaseConfig(g), mu))
    assert total == pytest.approx(1.0, abs=1e-3)


def test_phase_spot_value_g_half():
    # direct evaluation: (1/4pi) * 0.75 / 1.25^1.5, cross-checked by the
    # normalization quadrature above
    expected = 0.75 / (4 * np.pi * 1.25**1.5)
    assert phase_hg(PhaseConfig(0.5), 0.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.0427, abs=5e-5)


def test_phase_domain_errors():
    with pytest.raises(ValueError):
        phase_hg(PhaseConfig(0.2), 1.5)
    with pytest.raises(ValueError):
        PhaseConfig(1.0)
    with pytest.raises(ValueError):
        PhaseConfig(-1.0)


@pytest.mark.parametrize("g", [-0.8, -0.3, 0.3, 0.8])
def test_phase_normalization_wide_range(g):
    total = sphere_quadrature(lambda mu: phase_hg(PhaseConfig(g), mu))
    assert total == pytest.approx(1.0, abs=1e-3)
