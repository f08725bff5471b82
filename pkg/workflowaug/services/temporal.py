"""Temporal augmentation: re-timing videos over an interpolated sub-frame grid.

Original frame ``n`` sits at sub-frame position ``64 * n``. A schedule of
parts, each a number of output frames and a stride in sub-frames, moves a
cursor over that grid: stride 64 plays at normal speed, 32 at half speed,
128 at double speed. A position between frames ``n`` and ``n + 1`` at offset
``s`` is rendered by an interpolator with ``t = s / 64`` and takes the label
of frame ``n`` for ``s <= 32`` and of frame ``n + 1`` otherwise.

Part lengths and strides come from a 2-D Halton sequence so the combinations
cover the range evenly.
"""

import logging
import math
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Protocol, Sequence

import numpy as np
from scipy.stats import qmc

from workflowaug.exceptions import ConfigError, DataError
from workflowaug.storage import read_image, write_png

logger = logging.getLogger(__name__)

SUBFRAMES = 64
CANONICAL_STRIDES = (128, 116, 107, 98, 91, 85, 80, 75, 71, 67, 64,
                     58, 53, 49, 46, 43, 40, 38, 36, 34, 32)


# ---------- Halton sequence ----------

def halton(index: int, base: int) -> float:
    """Radical inverse of ``index`` in ``base``."""
    if index < 1 or base < 2:
        raise ValueError(f"halton needs index >= 1 and base >= 2, got ({index}, {base})")
    result = 0.0
    scale = 1.0 / base
    while index > 0:
        index, digit = divmod(index, base)
        result += digit * scale
        scale /= base
    return result


class HaltonSampler:
    """Unscrambled 2-D Halton points in bases (2, 3), starting at ``start``.

    Index 0 of the sequence is the origin, so the default start is 1.
    """

    bases = (2, 3)

    def __init__(self, start: int = 1):
        if start < 0:
            raise ValueError("start must be >= 0")
        self.start = start
        self.counter = start
        self._engine = qmc.Halton(d=2, scramble=False)
        if start:
            self._engine.fast_forward(start)

    def next(self) -> tuple[float, float]:
        u1, u2 = self._engine.random(1)[0]
        self.counter += 1
        return float(u1), float(u2)

    def take(self, n: int) -> np.ndarray:
        points = self._engine.random(n)
        self.counter += n
        return points


# ---------- Speed schedules ----------

@dataclass(frozen=True)
class StrideTable:
    strides: tuple = CANONICAL_STRIDES
    subframes: int = SUBFRAMES

    def __post_init__(self):
        strides = list(self.strides)
        if not strides or strides != sorted(strides, reverse=True):
            raise ConfigError("stride table must be sorted descending")
        if self.subframes not in strides:
            raise ConfigError(f"stride table must contain the identity stride {self.subframes}")

    def factor(self, stride: int) -> float:
        return stride / self.subframes

    def from_unit(self, u: float) -> int:
        """Map ``u`` in [0, 1) ascending onto the stride range; nearest entry, ties to the smaller."""
        low, high = min(self.strides), max(self.strides)
        value = low + u * (high - low)
        return min(sorted(self.strides), key=lambda s: abs(s - value))


@dataclass(frozen=True)
class SpeedSchedule:
    parts: tuple  # ((output length, stride), ...)

    @property
    def total_length(self) -> int:
        return sum(length for length, _ in self.parts)

    def to_dict(self) -> list:
        return [{"length": length, "stride": stride} for length, stride in self.parts]

    @classmethod
    def from_dict(cls, payload: list) -> "SpeedSchedule":
        return cls(tuple((int(p["length"]), int(p["stride"])) for p in payload))

    @classmethod
    def constant(cls, frame_count: int, stride: int = SUBFRAMES, subframes: int = SUBFRAMES) -> "SpeedSchedule":
        """One part at a fixed stride running to the end of the video."""
        return cls((((subframes * (frame_count - 1)) // stride + 1, stride),))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def draw_schedule(
    sampler: HaltonSampler,
    video_length: int,
    mean: float,
    mad: float,
    table: StrideTable = StrideTable(),
) -> SpeedSchedule:
    """Draw parts until the schedule reaches the end of the video.

    Part length is ``round(mean - mad + u1 * 2 * mad)`` output frames (at
    least one), stride the table entry nearest to ``u2`` interpolated across
    the stride range. The last part is cut where the cursor leaves the video.
    """
    if mean <= 0 or mad < 0:
        raise ConfigError(f"run-length statistics must have mean > 0 and MAD >= 0, got ({mean}, {mad})")
    if video_length < 1:
        raise DataError("cannot schedule an empty video")

    span = table.subframes * (video_length - 1)
    cursor = 0
    parts = []
    while True:
        u1, u2 = sampler.next()
        length = max(1, _round_half_up(mean - mad + u1 * 2 * mad))
        stride = table.from_unit(u2)
        available = (span - cursor) // stride + 1
        if available <= length:
            parts.append((available, stride))
            return SpeedSchedule(tuple(parts))
        parts.append((length, stride))
        cursor += length * stride


def positions(schedule: SpeedSchedule, frame_count: int, subframes: int = SUBFRAMES) -> Iterator[int]:
    """Sub-frame positions visited by a schedule over a video of ``frame_count`` frames."""
    span = subframes * (frame_count - 1)
    cursor = 0
    for length, stride in schedule.parts:
        for _ in range(length):
            if cursor > span:
                return
            yield cursor
            cursor += stride


def predicted_length(schedule: SpeedSchedule, frame_count: int, subframes: int = SUBFRAMES) -> int:
    span = subframes * (frame_count - 1)
    cursor = 0
    total = 0
    for length, stride in schedule.parts:
        available = (span - cursor) // stride + 1 if cursor <= span else 0
        if available <= length:
            return total + available
        total += length
        cursor += length * stride
    return total


def label_at(labels: Sequence[int], position: int, subframes: int = SUBFRAMES) -> int:
    n, s = divmod(position, subframes)
    if s <= subframes // 2:
        return labels[n]
    return labels[n + 1]


# ---------- Interpolators ----------

class Interpolator(Protocol):
    def __call__(self, frame_a: np.ndarray, frame_b: np.ndarray, t: float) -> np.ndarray: ...


class IdentityInterpolator:
    """Holds frame n until the next original frame; exact round trips."""

    name = "identity"

    def __call__(self, frame_a: np.ndarray, frame_b: np.ndarray, t: float) -> np.ndarray:
        return frame_b.copy() if t >= 1.0 else frame_a.copy()


class LinearInterpolator:
    """Cross-fade ``(1 - t) * A + t * B``, rounded."""

    name = "linear"

    def __call__(self, frame_a: np.ndarray, frame_b: np.ndarray, t: float) -> np.ndarray:
        if frame_a.shape != frame_b.shape:
            raise DataError(f"cannot interpolate frames of shapes {frame_a.shape} and {frame_b.shape}")
        mixed = (1.0 - t) * frame_a.astype(np.float64) + t * frame_b.astype(np.float64)
        return np.clip(np.rint(mixed), 0, 255).astype(np.uint8)


class CommandInterpolator:
    """External interpolator hook.

    The command template gets ``{a}``, ``{b}``, ``{t}`` and ``{out}``
    substituted; it must write the interpolated frame to ``{out}`` (PNG).
    """

    name = "command"

    def __init__(self, template: str, timeout: float = 120.0):
        if "{out}" not in template:
            raise ConfigError("interpolator command needs an {out} placeholder")
        self.template = template
        self.timeout = timeout

    def __call__(self, frame_a: np.ndarray, frame_b: np.ndarray, t: float) -> np.ndarray:
        with tempfile.TemporaryDirectory(prefix="interp-") as tmp:
            tmp = Path(tmp)
            a, b, out = tmp / "a.png", tmp / "b.png", tmp / "out.png"
            write_png(a, frame_a)
            write_png(b, frame_b)
            command = self.template.format(a=a, b=b, t=f"{t:.6f}", out=out)
            try:
                subprocess.run(shlex.split(command), check=True, timeout=self.timeout, capture_output=True)
            except (OSError, subprocess.SubprocessError) as e:
                raise DataError(f"interpolator command failed: {e}") from e
            frame = read_image(out)
            if frame is None:
                raise DataError(f"interpolator command produced no frame for t={t}")
            if frame.shape != frame_a.shape:
                raise DataError(f"interpolator returned shape {frame.shape}, expected {frame_a.shape}")
            return frame


def get_interpolator(name: str) -> Interpolator:
    if name == "identity":
        return IdentityInterpolator()
    if name == "linear":
        return LinearInterpolator()
    if name.startswith("cmd:"):
        return CommandInterpolator(name[len("cmd:"):].strip())
    raise ConfigError(f"unknown interpolator {name!r} (identity | linear | cmd:<template>)")


# ---------- Re-timing ----------

def iter_retime(
    frames: Sequence[np.ndarray],
    annotations: Sequence[int],
    schedule: SpeedSchedule,
    interpolator: Interpolator,
    subframes: int = SUBFRAMES,
) -> Iterator[tuple[np.ndarray, int]]:
    """Stream ``(frame, label)`` pairs of the re-timed video.

    ``frames`` only needs random access; frames n and n + 1 are read in
    ascending order.
    """
    if len(frames) != len(annotations):
        raise DataError(f"{len(frames)} frames but {len(annotations)} annotations")
    if not len(frames):
        raise DataError("cannot re-time an empty video")
    if predicted_length(schedule, len(frames), subframes) == 0:
        raise DataError("schedule covers zero frames")

    for position in positions(schedule, len(frames), subframes):
        n, s = divmod(position, subframes)
        if s == 0:
            frame = frames[n]
        else:
            frame = interpolator(frames[n], frames[n + 1], s / subframes)
        yield frame, label_at(annotations, position, subframes)


def retime(
    frames: Sequence[np.ndarray],
    annotations: Sequence[int],
    schedule: SpeedSchedule,
    interpolator: Interpolator,
    subframes: int = SUBFRAMES,
) -> tuple[list[np.ndarray], list[int]]:
    out_frames, out_labels = [], []
    for frame, label in iter_retime(frames, annotations, schedule, interpolator, subframes):
        out_frames.append(frame)
        out_labels.append(label)
    return out_frames, out_labels


def retime_labels(labels: Sequence[int], schedule: SpeedSchedule, subframes: int = SUBFRAMES) -> list[int]:
    """Annotation-only re-timing."""
    if not len(labels):
        raise DataError("cannot re-time an empty track")
    out = [label_at(labels, p, subframes) for p in positions(schedule, len(labels), subframes)]
    if not out:
        raise DataError("schedule covers zero frames")
    return out


def upsample_full(
    frames: Sequence[np.ndarray],
    interpolator: Interpolator,
    annotations: Sequence[int] | None = None,
    subframes: int = SUBFRAMES,
) -> tuple[list[np.ndarray], list[int] | None]:
    """Dense sub-frame sequence: every original frame plus ``subframes - 1`` interpolants per interval."""
    if len(frames) < 2:
        raise DataError("full up-sampling needs at least two frames")
    dense: list[np.ndarray] = []
    dense_labels: list[int] | None = [] if annotations is not None else None
    last = len(frames) - 1
    for n in range(last):
        dense.append(frames[n])
        for s in range(1, subframes):
            dense.append(interpolator(frames[n], frames[n + 1], s / subframes))
    dense.append(frames[last])
    if annotations is not None:
        dense_labels = [label_at(annotations, p, subframes) for p in range(subframes * last + 1)]
    return dense, dense_labels


def select_dense(dense: Sequence, schedule: SpeedSchedule, frame_count: int, subframes: int = SUBFRAMES) -> list:
    """Pick the scheduled positions out of an up-sampled sequence."""
    return [dense[p] for p in positions(schedule, frame_count, subframes)]
