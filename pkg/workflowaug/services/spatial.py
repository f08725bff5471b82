"""Spatial augmentation operators.

Seventeen operators: fifteen geometric, intensity and noise transforms plus
color inversion and channel shuffling. For every generated video each operator
is included with probability 0.33, its parameters are drawn from the
configured range, and the included operators run in a random order. One
parameter set covers a whole video so all its frames stay consistent.

Geometric sizes are given for the native 1080x1920 frame and scaled to the
actual frame size when applied. Intensity operators work through 256-entry
lookup tables so they are exact on uint8 buffers.
"""

import logging
import math
from dataclasses import dataclass, field

import cv2
import numpy as np

from workflowaug.config import Config
from workflowaug.exceptions import DataError

logger = logging.getLogger(__name__)

OPERATORS = (
    "center_crop",
    "padding",
    "rot90",
    "mirror",
    "zoom",
    "rotate",
    "contrast",
    "brightness_add",
    "brightness_mul",
    "gamma",
    "downsample",
    "rician_noise",
    "gaussian_noise",
    "gaussian_blur",
    "square_noise",
    "invert",
    "channel_shuffle",
)

NEUTRAL_PARAMS = {
    "zoom": {"factor": 1.0},
    "rotate": {"angle": 0.0},
    "contrast": {"factor": 1.0},
    "brightness_add": {"offset": 0.0},
    "brightness_mul": {"factor": 1.0},
    "gamma": {"gamma": 1.0},
    "downsample": {"factor": 1.0},
    "rician_noise": {"sigma": 0.0, "seed": 0},
    "gaussian_noise": {"sigma": 0.0, "seed": 0},
    "gaussian_blur": {"sigma": 0.0},
    "square_noise": {"count": 0, "min_side": 0, "max_side": 300, "seed": 0},
}


# ---------- Data Structures ----------

@dataclass(frozen=True)
class SpatialOp:
    kind: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params}


@dataclass(frozen=True)
class SpatialParamSet:
    """Operators in execution order, plus which of the 17 were drawn."""

    ops: tuple = ()
    selected: tuple = ()
    reference_size: tuple = (1080, 1920)

    @classmethod
    def identity(cls) -> "SpatialParamSet":
        return cls()

    def to_dict(self) -> dict:
        return {
            "ops": [op.to_dict() for op in self.ops],
            "selected": list(self.selected),
            "reference_size": list(self.reference_size),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SpatialParamSet":
        ops = []
        for entry in payload.get("ops", []):
            if entry["kind"] not in OPERATORS:
                raise DataError(f"unknown spatial operator {entry['kind']}")
            ops.append(SpatialOp(entry["kind"], dict(entry.get("params", {}))))
        return cls(
            ops=tuple(ops),
            selected=tuple(payload.get("selected", [op.kind for op in ops])),
            reference_size=tuple(payload.get("reference_size", (1080, 1920))),
        )


# ---------- Parameter drawing ----------

def _uniform(rng: np.random.Generator, bounds) -> float:
    low, high = bounds
    return float(rng.uniform(low, high))


def _integer(rng: np.random.Generator, low: int, high: int) -> int:
    return int(rng.integers(low, high + 1))


def _draw_op(kind: str, rng: np.random.Generator, ranges: dict) -> dict:
    bounds = ranges.get(kind)
    if kind in ("center_crop", "padding"):
        (h_min, w_min), (h_max, w_max) = bounds
        return {"height": _integer(rng, h_min, h_max), "width": _integer(rng, w_min, w_max)}
    if kind == "rot90":
        return {"k": _integer(rng, *bounds)}
    if kind == "mirror":
        return {"axis": str(bounds[int(rng.integers(len(bounds)))])}
    if kind == "zoom":
        return {"factor": _uniform(rng, bounds)}
    if kind == "rotate":
        return {"angle": _uniform(rng, bounds)}
    if kind in ("contrast", "brightness_mul", "downsample"):
        return {"factor": _uniform(rng, bounds)}
    if kind == "brightness_add":
        return {"offset": _uniform(rng, bounds)}
    if kind == "gamma":
        return {"gamma": _uniform(rng, bounds)}
    if kind in ("rician_noise", "gaussian_noise"):
        return {"sigma": _uniform(rng, bounds), "seed": int(rng.integers(2**31))}
    if kind == "gaussian_blur":
        return {"sigma": _uniform(rng, bounds)}
    if kind == "square_noise":
        # (count range, side range)
        (count_min, count_max), (side_min, side_max) = bounds
        return {
            "count": _integer(rng, count_min, count_max),
            "min_side": int(side_min),
            "max_side": int(side_max),
            "seed": int(rng.integers(2**31)),
        }
    if kind == "channel_shuffle":
        return {"order": [int(c) for c in rng.permutation(3)]}
    return {}


def draw_params(rng: np.random.Generator, config=None) -> SpatialParamSet:
    """Draw one parameter set.

    Inclusion flags come first, then the parameters of every operator in
    canonical order whether or not it was included, then the execution
    order. Each operator therefore always sees the same draws for a seed.
    """
    config = config or Config
    probability = config.SELECTION_PROBABILITY
    ranges = config.SPATIAL_RANGES
    included = rng.random(len(OPERATORS)) < probability
    params = {kind: _draw_op(kind, rng, ranges) for kind in OPERATORS}

    selected = tuple(kind for kind, keep in zip(OPERATORS, included) if keep)
    order = rng.permutation(len(selected)) if selected else []
    ops = tuple(SpatialOp(selected[i], params[selected[i]]) for i in order)
    return SpatialParamSet(ops=ops, selected=selected, reference_size=tuple(config.REFERENCE_FRAME_SIZE))


# ---------- Operators ----------

def _lut(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


_LEVELS = np.arange(256, dtype=np.float64)


def _apply_lut(frame: np.ndarray, table: np.ndarray) -> np.ndarray:
    return table[frame]


def _scaled(size: int, native: int, actual: int) -> int:
    return int(round(size * actual / native))


def center_crop(frame, params, ref):
    h, w = frame.shape[:2]
    ch = min(h, max(1, _scaled(params["height"], ref[0], h)))
    cw = min(w, max(1, _scaled(params["width"], ref[1], w)))
    top, left = (h - ch) // 2, (w - cw) // 2
    return frame[top:top + ch, left:left + cw].copy()


def padding(frame, params, ref):
    h, w = frame.shape[:2]
    th = max(h, _scaled(params["height"], ref[0], h))
    tw = max(w, _scaled(params["width"], ref[1], w))
    top, left = (th - h) // 2, (tw - w) // 2
    return cv2.copyMakeBorder(
        frame, top, th - h - top, left, tw - w - left, cv2.BORDER_CONSTANT, value=(0, 0, 0)
    )


def rot90(frame, params, ref):
    return np.ascontiguousarray(np.rot90(frame, int(params["k"])))


def mirror(frame, params, ref):
    axis = 1 if params["axis"] == "x" else 0
    return np.ascontiguousarray(np.flip(frame, axis=axis))


def zoom(frame, params, ref):
    factor = float(params["factor"])
    if factor == 1.0:
        return frame.copy()
    h, w = frame.shape[:2]
    size = (max(1, int(round(w * factor))), max(1, int(round(h * factor))))
    return cv2.resize(frame, size, interpolation=cv2.INTER_AREA if factor < 1 else cv2.INTER_LINEAR)


def rotate(frame, params, ref):
    angle = float(params["angle"])
    if angle == 0.0:
        return frame.copy()
    h, w = frame.shape[:2]
    matrix = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle, 1.0)
    return cv2.warpAffine(
        frame, matrix, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=(0, 0, 0)
    )


def contrast(frame, params, ref):
    return _apply_lut(frame, _lut((_LEVELS - 128.0) * float(params["factor"]) + 128.0))


def brightness_add(frame, params, ref):
    return _apply_lut(frame, _lut(_LEVELS + float(params["offset"])))


def brightness_mul(frame, params, ref):
    return _apply_lut(frame, _lut(_LEVELS * float(params["factor"])))


def gamma(frame, params, ref):
    return _apply_lut(frame, _lut(255.0 * (_LEVELS / 255.0) ** float(params["gamma"])))


def downsample(frame, params, ref):
    """Resize by the factor and back: loses detail, keeps the size."""
    factor = float(params["factor"])
    if factor == 1.0:
        return frame.copy()
    h, w = frame.shape[:2]
    small = cv2.resize(
        frame, (max(1, int(round(w * factor))), max(1, int(round(h * factor)))), interpolation=cv2.INTER_LINEAR
    )
    return cv2.resize(small, (w, h), interpolation=cv2.INTER_LINEAR)


def rician_noise(frame, params, ref, rng):
    sigma = float(params["sigma"])
    if sigma == 0.0:
        return frame.copy()
    x = frame.astype(np.float64)
    n1 = rng.standard_normal(frame.shape)
    n2 = rng.standard_normal(frame.shape)
    return _lut(np.sqrt((x + n1 * sigma) ** 2 + (n2 * sigma) ** 2))


def gaussian_noise(frame, params, ref, rng):
    sigma = float(params["sigma"])
    if sigma == 0.0:
        return frame.copy()
    return _lut(frame.astype(np.float64) + rng.standard_normal(frame.shape) * sigma)


def gaussian_blur(frame, params, ref):
    sigma = float(params["sigma"])
    if sigma == 0.0:
        return frame.copy()
    radius = int(math.ceil(3 * sigma))
    ksize = 2 * radius + 1
    return cv2.GaussianBlur(frame, (ksize, ksize), sigmaX=sigma, sigmaY=sigma, borderType=cv2.BORDER_REFLECT_101)


def square_noise(frame, params, ref, rng):
    count = int(params["count"])
    if count == 0:
        return frame.copy()
    out = frame.copy()
    h, w = frame.shape[:2]
    scale = min(h / ref[0], w / ref[1])
    for _ in range(count):
        side = int(rng.integers(params["min_side"], params["max_side"] + 1))
        side = max(1, min(h, w, int(round(side * scale))))
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        out[top:top + side, left:left + side] = rng.integers(0, 256, (side, side, 3), dtype=np.uint8)
    return out


def invert(frame, params, ref):
    return 255 - frame


def channel_shuffle(frame, params, ref):
    return np.ascontiguousarray(frame[..., list(params["order"])])


_DETERMINISTIC = {
    "center_crop": center_crop,
    "padding": padding,
    "rot90": rot90,
    "mirror": mirror,
    "zoom": zoom,
    "rotate": rotate,
    "contrast": contrast,
    "brightness_add": brightness_add,
    "brightness_mul": brightness_mul,
    "gamma": gamma,
    "downsample": downsample,
    "gaussian_blur": gaussian_blur,
    "invert": invert,
    "channel_shuffle": channel_shuffle,
}

_SEEDED = {
    "rician_noise": rician_noise,
    "gaussian_noise": gaussian_noise,
    "square_noise": square_noise,
}


def apply_op(op: SpatialOp, frame: np.ndarray, reference_size=(1080, 1920), frame_index: int = 0) -> np.ndarray:
    if op.kind in _DETERMINISTIC:
        return _DETERMINISTIC[op.kind](frame, op.params, reference_size)
    if op.kind in _SEEDED:
        # Noise differs per frame but is fixed by (operator seed, frame index).
        rng = np.random.default_rng([int(op.params["seed"]), frame_index])
        return _SEEDED[op.kind](frame, op.params, reference_size, rng)
    raise DataError(f"unknown spatial operator {op.kind}")


def apply(params: SpatialParamSet, frame: np.ndarray, frame_index: int = 0) -> np.ndarray:
    """Run the parameter set's operators in order on one RGB uint8 frame."""
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.dtype != np.uint8:
        raise DataError(f"expected an HxWx3 uint8 frame, got {frame.shape} {frame.dtype}")
    out = frame
    for op in params.ops:
        out = apply_op(op, out, params.reference_size, frame_index)
    return out if out is not frame else frame.copy()
