import numpy as np
import pytest

from fvr.errors import FormatError
from fvr.syncsim import (
    ABOVE,
    BELOW,
    CcdTimingModel,
    FlashInAcquisitionError,
    InsufficientDataError,
    ProtocolViolationError,
    SmearPattern,
    StrobeConfig,
    default_scenario,
    estimate_offsets,
    estimate_t_per_row,
    flash_dot_pair,
    load_scenario,
    save_offsets_csv,
    save_scenario,
    simulate_smear,
    suggest_shutter_resets,
)

T_ROW = 54e-6


def camera(offset=0.0, n_rows=720, frame_rate=23.98, t_acquire=2e-3, t_per_row=T_ROW):
    return CcdTimingModel(n_rows, t_per_row, frame_rate, t_acquire, offset)


def tall_camera(offset=0.0):
    # enough rows that a 24 Hz strobe leaves several dots per frame
    return CcdTimingModel(1600, T_ROW, 10.0, 2e-3, offset)


def test_timing_model_validation():
    with pytest.raises(ValueError):
        CcdTimingModel(720, 54e-6, 30.0, 20e-3)  # read + acquire > period
    with pytest.raises(ValueError):
        CcdTimingModel(0, 54e-6, 24.0, 1e-3)
    with pytest.raises(ValueError):
        StrobeConfig(0.0)


def test_flash_at_read_start_hits_light_row():
    cam = camera()
    strobe = StrobeConfig(f_flash=cam.frame_rate, phase=cam.read_start(0), light_row=360)
    pattern = simulate_smear(cam, strobe, frames=1)
    assert pattern.frames[0] == [(360, ABOVE)]


def test_flash_5p4ms_into_read_gives_100_rows():
    # 5.4 ms / 54 us per row = 100 rows of transfer before the flash
    cam = camera()
    strobe = StrobeConfig(f_flash=cam.frame_rate, phase=cam.read_start(0) + 5.4e-3,
                          light_row=360)
    pattern = simulate_smear(cam, strobe, frames=1)
    assert pattern.frames[0] == [(360 - 100, ABOVE)]


def test_fast_strobe_dot_spacing():
    # 24 flashes/s against 54 us rows: adjacent same-side dots must sit
    # 1/(54e-6 * 24) = 771.6 -> 771 or 772 rows apart
    cam = tall_camera()
    strobe = StrobeConfig(f_flash=24.0, phase=cam.read_start(0) + 1e-4, light_row=1500)
    pattern = simulate_smear(cam, strobe, frames=1)
    rows = sorted(r for r, side in pattern.frames[0] if side == ABOVE)
    assert len(rows) >= 2
    spacings = np.diff(rows)
    assert all(s in (771, 772) for s in spacings)


def test_flash_in_acquisition_produces_no_dot():
    cam = camera()
    strobe = StrobeConfig(f_flash=cam.frame_rate,
                          phase=cam.t_start_offset + 0.5 * cam.t_acquire, light_row=360)
    pattern = simulate_smear(cam, strobe, frames=3)
    assert all(dots == [] for dots in pattern.frames)


def test_dot_pair_mirrors_across_frames():
    # the same flash yields an above dot at d and a below dot at n - d
    for d in (0, 17, 359, 719):
        (fa, sa, ra), (fb, sb, rb) = flash_dot_pair(720, 400, d)
        assert (fa, sa) == (0, ABOVE) and (fb, sb) == (1, BELOW)
        assert (400 - ra) + (rb - 400) == 720


def test_simulated_below_dot_lands_in_next_frame():
    cam = camera()
    # flash late in the read phase: transfer offset d > light_row, so only
    # the mirrored below dot is visible, one frame later
    late = cam.read_start(0) + 600 * T_ROW + 0.3 * T_ROW
    strobe = StrobeConfig(f_flash=cam.frame_rate, phase=late, light_row=360)
    pattern = simulate_smear(cam, strobe, frames=3)
    assert pattern.frames[0] == []  # frame -1 read phase had no flash yet
    assert pattern.frames[1] == [(360 + 720 - 600, BELOW)]


def test_estimate_t_per_row_exact_inversion():
    pattern = SmearPattern([[(100, ABOVE), (350, ABOVE), (600, ABOVE)]], 650, 720)
    assert estimate_t_per_row(pattern, 24.0) == pytest.approx(1.0 / (250 * 24.0), rel=1e-12)


def test_estimate_t_per_row_from_simulation():
    cam = tall_camera()
    strobe = StrobeConfig(f_flash=24.0, phase=cam.read_start(0) + 1e-4, light_row=1500)
    pattern = simulate_smear(cam, strobe, frames=4)
    est = estimate_t_per_row(pattern, strobe.f_flash)
    assert abs(est - T_ROW) / T_ROW < 0.002  # within 0.2 percent


def test_estimate_t_per_row_insufficient():
    with pytest.raises(InsufficientDataError):
        estimate_t_per_row(SmearPattern([[(100, ABOVE)], [(90, BELOW)]], 650, 720), 24.0)


def pattern_with_dot(row, side=ABOVE, light_row=360, n=720):
    return SmearPattern([[(row, side)]], light_row, n)


def test_offsets_equidistant_dots():
    patterns = [pattern_with_dot(300) for _ in range(4)]
    offsets, worst = estimate_offsets(patterns, T_ROW)
    assert offsets == [0.0] * 4
    assert worst == 0.0


def test_offsets_paper_arithmetic():
    # 100 rows of dot-distance difference at 54 us per row is 5.4 ms of
    # shutter skew, versus 41.7 ms at frame level
    patterns = [pattern_with_dot(300), pattern_with_dot(200)]
    offsets, worst = estimate_offsets(patterns, T_ROW)
    assert worst == pytest.approx(100 * T_ROW, rel=1e-12)
    assert worst == pytest.approx(5.4e-3, rel=1e-9)
    assert worst < 1.0 / 23.98
    assert 1.0 / 23.98 == pytest.approx(41.7e-3, abs=5e-5)


def test_offsets_translation_invariant():
    base = [pattern_with_dot(310), pattern_with_dot(280), pattern_with_dot(255)]
    shifted = [pattern_with_dot(310 - 40), pattern_with_dot(280 - 40), pattern_with_dot(255 - 40)]
    o1, w1 = estimate_offsets(base, T_ROW)
    o2, w2 = estimate_offsets(shifted, T_ROW)
    rel1 = np.diff(o1)
    rel2 = np.diff(o2)
    assert np.allclose(rel1, rel2, atol=1e-15)
    assert w1 == w2


def test_offsets_mixed_sides_rejected():
    patterns = [pattern_with_dot(300, ABOVE), pattern_with_dot(500, BELOW)]
    with pytest.raises(ProtocolViolationError):
        estimate_offsets(patterns, T_ROW)


def test_offsets_no_dots_rejected():
    empty = SmearPattern([[], []], 360, 720)
    with pytest.raises(FlashInAcquisitionError):
        estimate_offsets([pattern_with_dot(300), empty], T_ROW)


def test_offsets_multiple_dots_rejected():
    bad = SmearPattern([[(100, ABOVE), (300, ABOVE)]], 650, 720)
    with pytest.raises(ProtocolViolationError):
        estimate_offsets([bad], T_ROW)


@pytest.mark.parametrize("seed", range(12))
def test_offsets_recovered_from_simulation(seed):
    rng = np.random.default_rng(seed)
    true_offsets = rng.uniform(-1.5e-3, 1.5e-3, size=5)
    cams = [camera(offset=o) for o in true_offsets]
    strobe = StrobeConfig(f_flash=cams[0].frame_rate, phase=0.015, light_row=360)
    patterns = [simulate_smear(c, strobe, frames=2) for c in cams]
    est, worst = estimate_offsets(patterns, T_ROW)
    true_rel = true_offsets - true_offsets[0]
    assert np.all(np.abs(np.array(est) - true_rel) <= T_ROW)


def test_resets_empty_for_aligned():
    assert suggest_shutter_resets([0.0, 0.0, 0.0]) == []


def test_resets_touch_only_outlier():
    plan = suggest_shutter_resets([0.0, 0.0, 2.7e-3, 0.0])
    assert len(plan) == 1
    cam_i, delay = plan[0]
    assert cam_i == 2
    assert delay == pytest.approx(-2.7e-3)


def test_resets_drive_error_below_one_row():
    rng = np.random.default_rng(99)
    true_offsets = rng.uniform(-1.5e-3, 1.5e-3, size=6)
    cams = [camera(offset=o) for o in true_offsets]
    strobe = StrobeConfig(f_flash=cams[0].frame_rate, phase=0.015, light_row=360)
    patterns = [simulate_smear(c, strobe, frames=2) for c in cams]
    est, worst0 = estimate_offsets(patterns, T_ROW)
    plan = dict(suggest_shutter_resets(est))
    cams2 = [camera(offset=c.t_start_offset + plan.get(i, 0.0)) for i, c in enumerate(cams)]
    patterns2 = [simulate_smear(c, strobe, frames=2) for c in cams2]
    _, worst1 = estimate_offsets(patterns2, T_ROW)
    assert worst1 <= T_ROW + 1e-12
    assert worst1 <= worst0


def test_scenario_round_trip(tmp_path):
    cams, strobe = default_scenario(n_cameras=3, seed=5)
    path = tmp_path / "scenario.txt"
    save_scenario(path, cams, strobe)
    cams2, strobe2 = load_scenario(path)
    assert len(cams2) == 3
    for a, b in zip(cams, cams2):
        assert a == b
    assert strobe2 == strobe


def test_scenario_rejects_unknown_key(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("n_rows = 720\nbogus = 3\n")
    with pytest.raises(FormatError):
        load_scenario(path)


def test_offsets_csv(tmp_path):
    path = tmp_path / "offsets.csv"
    save_offsets_csv(path, [0.0, 1.5e-3])
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "camera,offset_s"
    assert lines[1].startswith("0,")
    assert float(lines[2].split(",")[1]) == pytest.approx(1.5e-3)
