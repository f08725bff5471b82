import time

import numpy as np
import pytest

from workflowaug.exceptions import ConfigError, DataError
from workflowaug.services.temporal import (
    CANONICAL_STRIDES,
    CommandInterpolator,
    HaltonSampler,
    IdentityInterpolator,
    LinearInterpolator,
    SpeedSchedule,
    StrideTable,
    draw_schedule,
    get_interpolator,
    halton,
    label_at,
    predicted_length,
    retime,
    retime_labels,
    select_dense,
    upsample_full,
)


def radical_inverse(index: int, base: int) -> float:
    digits = []
    while index:
        index, d = divmod(index, base)
        digits.append(d)
    return sum(d / base ** (k + 1) for k, d in enumerate(digits))


def random_video(rng, n, size=(32, 32)):
    frames = [rng.integers(0, 256, size=(*size, 3), dtype=np.uint8) for _ in range(n)]
    labels = [int(c) for c in rng.integers(0, 4, size=n)]
    return frames, labels


# ---------- Halton ----------

@pytest.mark.parametrize(
    "index, base, expected",
    [(1, 2, 0.5), (2, 2, 0.25), (3, 2, 0.75), (1, 3, 1 / 3), (2, 3, 2 / 3), (3, 3, 1 / 9)],
)
def test_halton_values(index, base, expected):
    assert halton(index, base) == pytest.approx(expected, abs=1e-15)


def test_halton_matches_radical_inverse_oracle():
    for base in (2, 3):
        for index in range(1, 65):
            value = halton(index, base)
            assert abs(value - radical_inverse(index, base)) < 1e-12
            assert 0 <= value < 1


def test_halton_rejects_bad_arguments():
    with pytest.raises(ValueError):
        halton(0, 2)
    with pytest.raises(ValueError):
        halton(1, 1)


def test_sampler_agrees_with_scalar_halton():
    sampler = HaltonSampler(start=5)
    for index in range(5, 25):
        u1, u2 = sampler.next()
        assert u1 == pytest.approx(halton(index, 2), abs=1e-12)
        assert u2 == pytest.approx(halton(index, 3), abs=1e-12)
    assert sampler.counter == 25


def test_halton_grid_occupancy():
    points = HaltonSampler().take(1024)
    cells = np.zeros((4, 4), dtype=int)
    for u1, u2 in points:
        cells[int(u1 * 4), int(u2 * 4)] += 1
    assert cells.min() >= 48 and cells.max() <= 80


# ---------- Schedules ----------

def test_stride_table_mapping():
    table = StrideTable()
    assert table.from_unit(0.0) == 32
    assert table.from_unit(0.999999) == 128
    assert table.from_unit(0.5) == 80
    assert table.factor(64) == 1.0
    with pytest.raises(ConfigError):
        StrideTable((32, 64, 128))
    with pytest.raises(ConfigError):
        StrideTable((128, 100, 32))


class FixedSampler:
    def __init__(self, points):
        self.points = list(points)

    def next(self):
        return self.points.pop(0)


def test_zero_mad_gives_constant_lengths():
    schedule = draw_schedule(HaltonSampler(), video_length=2000, mean=40, mad=0)
    assert all(length == 40 for length, _ in schedule.parts[:-1])
    assert all(stride in CANONICAL_STRIDES for _, stride in schedule.parts)


def test_schedule_covers_video_and_truncates_last_part():
    schedule = draw_schedule(FixedSampler([(0.5, 0.0)] * 10), video_length=10, mean=5, mad=2)
    # stride 32 on 10 frames: positions 0, 32, ..., 576 -> 19 output frames
    assert schedule.parts == ((5, 32), (5, 32), (5, 32), (4, 32))
    assert predicted_length(schedule, 10) == 19


def test_schedule_is_deterministic():
    a = draw_schedule(HaltonSampler(17), 500, mean=30, mad=12)
    b = draw_schedule(HaltonSampler(17), 500, mean=30, mad=12)
    assert a == b
    assert SpeedSchedule.from_dict(a.to_dict()) == a


def test_schedule_rejects_bad_stats():
    with pytest.raises(ConfigError):
        draw_schedule(HaltonSampler(), 100, mean=0, mad=1)


def test_constant_schedule_lengths():
    assert SpeedSchedule.constant(100).total_length == 100
    assert predicted_length(SpeedSchedule.constant(100, stride=32), 100) == 199
    assert predicted_length(SpeedSchedule.constant(100, stride=128), 100) == 50


def test_larger_stride_never_longer():
    lengths = [predicted_length(SpeedSchedule(((10, s), (10**6, s))), 300) for s in sorted(CANONICAL_STRIDES)]
    assert lengths == sorted(lengths, reverse=True)


# ---------- Labels ----------

def test_label_boundary_table():
    labels = [7, 9]
    for s in range(1, 65):
        expected = 7 if s <= 32 else 9
        assert label_at(labels, s) == expected
    assert label_at(labels, 0) == 7


def test_retime_labels_half_speed():
    labels = [1, 1, 2, 2]
    out = retime_labels(labels, SpeedSchedule.constant(4, stride=32))
    # positions 0, 32, 64, ..., 192
    assert out == [1, 1, 1, 1, 2, 2, 2]


def test_retime_labels_empty():
    with pytest.raises(DataError):
        retime_labels([], SpeedSchedule.constant(1))


# ---------- Interpolators and re-timing ----------

def test_identity_round_trip():
    rng = np.random.default_rng(3)
    started = time.perf_counter()
    for _ in range(100):
        frames, labels = random_video(rng, int(rng.integers(2, 40)))
        out_frames, out_labels = retime(frames, labels, SpeedSchedule.constant(len(frames)), IdentityInterpolator())
        assert out_labels == labels
        assert all(np.array_equal(a, b) for a, b in zip(out_frames, frames))
        assert len(out_frames) == len(frames)
    assert time.perf_counter() - started < 30


def test_linear_interpolator():
    a = np.zeros((2, 2, 3), dtype=np.uint8)
    b = np.full((2, 2, 3), 100, dtype=np.uint8)
    interp = LinearInterpolator()
    assert np.array_equal(interp(a, b, 0.0), a)
    assert np.array_equal(interp(a, b, 1.0), b)
    assert interp(a, b, 0.25)[0, 0, 0] == 25


def test_upsample_counts():
    rng = np.random.default_rng(5)
    frames, labels = random_video(rng, 2, size=(4, 4))
    dense, dense_labels = upsample_full(frames, IdentityInterpolator(), labels)
    assert len(dense) == 65 and len(dense_labels) == 65
    assert np.array_equal(dense[0], frames[0]) and np.array_equal(dense[64], frames[1])


@pytest.mark.parametrize("stride", [128, 64, 43, 32])
def test_dense_then_stride_equals_direct(stride):
    rng = np.random.default_rng(stride)
    frames, labels = random_video(rng, 12)
    schedule = SpeedSchedule(((5, stride), (3, 64), (100, stride)))
    interp = LinearInterpolator()
    direct_frames, direct_labels = retime(frames, labels, schedule, interp)
    dense, dense_labels = upsample_full(frames, interp, labels)
    assert select_dense(dense_labels, schedule, len(frames)) == direct_labels
    picked = select_dense(dense, schedule, len(frames))
    assert len(picked) == len(direct_frames) == predicted_length(schedule, len(frames))
    assert all(np.array_equal(a, b) for a, b in zip(picked, direct_frames))


def test_retime_length_mismatch():
    frames = [np.zeros((2, 2, 3), dtype=np.uint8)] * 3
    with pytest.raises(DataError):
        retime(frames, [0, 0], SpeedSchedule.constant(3), IdentityInterpolator())


def test_get_interpolator():
    assert isinstance(get_interpolator("identity"), IdentityInterpolator)
    assert isinstance(get_interpolator("linear"), LinearInterpolator)
    hook = get_interpolator("cmd:interp {a} {b} {t} {out}")
    assert isinstance(hook, CommandInterpolator)
    with pytest.raises(ConfigError):
        get_interpolator("sepconv")
    with pytest.raises(ConfigError):
        CommandInterpolator("interp {a} {b}")
