"""Application configuration."""

import json
import os

from dotenv import load_dotenv

from workflowaug.exceptions import ConfigError

load_dotenv()


def _pair(value: str) -> tuple[int, int]:
    a, b = value.split(",")
    return int(a), int(b)


def _number(default, value):
    if isinstance(value, bool):
        raise TypeError(f"expected a number, got {value!r}")
    if isinstance(default, int):
        number = float(value) if isinstance(value, str) else value
        if not isinstance(number, (int, float)) or number != int(number):
            raise ValueError(f"expected an integer, got {value!r}")
        return int(number)
    return float(value)


def _nested_tuple(value):
    if isinstance(value, (list, tuple)):
        return tuple(_nested_tuple(v) for v in value)
    return value


def _coerce(key: str, value):
    """Convert a file or flag value to the type of the ``Config`` default."""
    default = getattr(Config, key)
    if isinstance(default, bool):
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        if not isinstance(value, bool):
            raise TypeError(f"expected true or false, got {value!r}")
        return value
    if isinstance(default, (int, float)):
        return _number(default, value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise TypeError(f"expected a list, got {value!r}")
        return tuple(_number(default[0], v) for v in value)
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise TypeError(f"expected an object, got {value!r}")
        unknown = sorted(set(value) - set(default))
        if unknown:
            raise ValueError(f"unknown operators {unknown}")
        return {**default, **{k: _nested_tuple(v) for k, v in value.items()}}
    if not isinstance(value, (str, os.PathLike)):
        raise TypeError(f"expected a string, got {value!r}")
    return str(value)


class Config:
    # Inputs
    CATALOG_PATH = os.getenv("WORKFLOWAUG_CATALOG", "catalog.json")
    OUTPUT_DIR = os.getenv("WORKFLOWAUG_OUTPUT_DIR", "out")

    # Workflow graph
    GRAPH_MODE = os.getenv("GRAPH_MODE", "uniform")  # uniform | empirical
    GRAPH_OVERRIDE_PATH = os.getenv("GRAPH_OVERRIDE_PATH") or None
    START_MODE = os.getenv("START_MODE", "uniform")  # uniform | empirical
    DECAY = float(os.getenv("DECAY", "0.5"))
    CONTINUE_PROBABILITY = float(os.getenv("CONTINUE_PROBABILITY", "0.0"))
    MAX_WALK_LENGTH = int(os.getenv("MAX_WALK_LENGTH", "500"))

    # Generation
    NUM_VIDEOS = int(os.getenv("NUM_VIDEOS", "5000"))
    MAX_RESAMPLE = int(os.getenv("MAX_RESAMPLE", "100"))
    MASTER_SEED = int(os.getenv("MASTER_SEED", "0"))
    SPLIT_FRACTIONS = (0.6, 0.2, 0.2)
    JOBS = int(os.getenv("JOBS", "1"))

    # Annotation
    BINARIZE_THRESHOLD = float(os.getenv("BINARIZE_THRESHOLD", "0.5"))

    # Spatial augmentation (Table 1 ranges, geometric sizes in native pixels)
    SELECTION_PROBABILITY = 0.33
    REFERENCE_FRAME_SIZE = _pair(os.getenv("REFERENCE_FRAME_SIZE", "1080,1920"))
    SPATIAL_RANGES = {
        "center_crop": ((840, 1080), (1080, 1920)),
        "padding": ((1080, 2160), (1920, 3840)),
        "rot90": (1, 3),
        "mirror": ("x", "y"),
        "zoom": (0.03, 1.0),
        "rotate": (-90.0, 90.0),
        "contrast": (0.2, 2.0),
        "brightness_add": (-64.0, 64.0),
        "brightness_mul": (0.5, 1.5),
        "gamma": (0.2, 2.0),
        "downsample": (0.05, 2.0),
        "rician_noise": (0.0, 20.0),
        "gaussian_noise": (0.0, 20.0),
        "gaussian_blur": (0.0, 7.0),
        "square_noise": ((0, 32), (0, 300)),
        "invert": None,
        "channel_shuffle": None,
    }

    # Temporal augmentation
    TEMPORAL_AUGMENTATION = os.getenv("TEMPORAL_AUGMENTATION", "true").lower() == "true"
    SUBFRAMES = 64
    STRIDE_TABLE = (128, 116, 107, 98, 91, 85, 80, 75, 71, 67, 64,
                    58, 53, 49, 46, 43, 40, 38, 36, 34, 32)
    INTERPOLATOR = os.getenv("INTERPOLATOR", "linear")

    # Evaluation
    SCORE_STRIDE = int(os.getenv("SCORE_STRIDE", "15"))
    SCORE_MAX_FRAMES = int(os.getenv("SCORE_MAX_FRAMES", "0"))  # 0 = no cap

    # Split baseline
    SPLIT_K = int(os.getenv("SPLIT_K", "10"))

    @classmethod
    def from_file(cls, path: str | None = None) -> "Config":
        """Load a JSON config file on top of the defaults.

        Without a path the file named by WORKFLOWAUG_CONFIG is used, if any.
        """
        config = cls()
        path = path or os.getenv("WORKFLOWAUG_CONFIG")
        if not path:
            return config
        try:
            with open(path, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        if not isinstance(overrides, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return config.override(**{k.upper(): v for k, v in overrides.items()})

    def override(self, **values) -> "Config":
        """Set attributes in place; ``None`` values are ignored."""
        for key, value in values.items():
            if value is None:
                continue
            if not hasattr(Config, key):
                raise ConfigError(f"unknown config key {key}")
            try:
                value = _coerce(key, value)
            except (TypeError, ValueError, OverflowError) as e:
                raise ConfigError(f"{key}: {e}") from e
            setattr(self, key, value)
        return self

    def validate(self) -> "Config":
        if self.GRAPH_MODE not in ("uniform", "empirical"):
            raise ConfigError(f"GRAPH_MODE must be uniform or empirical, got {self.GRAPH_MODE}")
        if self.START_MODE not in ("uniform", "empirical"):
            raise ConfigError(f"START_MODE must be uniform or empirical, got {self.START_MODE}")
        if not 0 < self.DECAY <= 1:
            raise ConfigError(f"DECAY must be in (0, 1], got {self.DECAY}")
        if not 0 <= self.CONTINUE_PROBABILITY < 1:
            raise ConfigError(f"CONTINUE_PROBABILITY must be in [0, 1), got {self.CONTINUE_PROBABILITY}")
        if self.MAX_WALK_LENGTH < 2:
            raise ConfigError(f"MAX_WALK_LENGTH must be >= 2, got {self.MAX_WALK_LENGTH}")
        if self.NUM_VIDEOS < 0:
            raise ConfigError(f"NUM_VIDEOS must be >= 0, got {self.NUM_VIDEOS}")
        if self.MAX_RESAMPLE < 1:
            raise ConfigError(f"MAX_RESAMPLE must be >= 1, got {self.MAX_RESAMPLE}")
        if not 0 <= self.SELECTION_PROBABILITY <= 1:
            raise ConfigError("SELECTION_PROBABILITY must be in [0, 1]")
        if not 0 <= self.BINARIZE_THRESHOLD < 1:
            raise ConfigError("BINARIZE_THRESHOLD must be in [0, 1)")
        strides = list(self.STRIDE_TABLE)
        if not strides or strides != sorted(strides, reverse=True) or self.SUBFRAMES not in strides:
            raise ConfigError(f"STRIDE_TABLE must be sorted descending and contain {self.SUBFRAMES}")
        if any(s < 1 for s in strides):
            raise ConfigError("STRIDE_TABLE entries must be positive")
        if self.SCORE_STRIDE < 1:
            raise ConfigError(f"SCORE_STRIDE must be >= 1, got {self.SCORE_STRIDE}")
        if self.SCORE_MAX_FRAMES < 0:
            raise ConfigError("SCORE_MAX_FRAMES must be >= 0")
        if self.SPLIT_K < 1:
            raise ConfigError(f"SPLIT_K must be >= 1, got {self.SPLIT_K}")
        if self.JOBS < 1:
            raise ConfigError(f"JOBS must be >= 1, got {self.JOBS}")
        if len(self.SPLIT_FRACTIONS) != 3 or abs(sum(self.SPLIT_FRACTIONS) - 1) > 1e-9:
            raise ConfigError("SPLIT_FRACTIONS must be three fractions summing to 1")
        self._validate_spatial_ranges()
        return self

    def _validate_spatial_ranges(self):
        for kind, bounds in self.SPATIAL_RANGES.items():
            if bounds is None or kind == "mirror":
                continue
            try:
                if kind in ("center_crop", "padding"):
                    (h_min, w_min), (h_max, w_max) = bounds
                    pairs = [(h_min, h_max), (w_min, w_max)]
                elif kind == "square_noise":
                    (count_min, count_max), (side_min, side_max) = bounds
                    pairs = [(count_min, count_max), (side_min, side_max)]
                else:
                    low, high = bounds
                    pairs = [(low, high)]
                for low, high in pairs:
                    if low > high:
                        raise ConfigError(f"SPATIAL_RANGES[{kind}]: low bound {low} above high bound {high}")
            except (TypeError, ValueError) as e:
                raise ConfigError(f"SPATIAL_RANGES[{kind}]: malformed range {bounds!r}") from e
        axes = self.SPATIAL_RANGES.get("mirror")
        if not axes or not set(axes) <= {"x", "y"}:
            raise ConfigError("SPATIAL_RANGES[mirror] must list one or both of the axes x and y")

    def to_dict(self) -> dict:
        return {
            key: getattr(self, key)
            for key in dir(Config)
            if key.isupper()
        }
