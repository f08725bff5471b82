import numpy as np
import pytest

from workflowaug.config import Config
from workflowaug.models import ClassCatalog, LabelTrack
from workflowaug.seed_corpus import demo_catalog, demo_tracks


def make_track(video_id: str, runs: list[tuple[int, int]]) -> LabelTrack:
    """Label track from ``[(class, length), ...]``."""
    frames = []
    for class_id, length in runs:
        frames.extend([class_id] * length)
    return LabelTrack(video_id, tuple(frames))


def random_track(rng: np.random.Generator, video_id: str, length: int, num_classes: int) -> LabelTrack:
    """Random runs over classes 0..num_classes-1, idle included."""
    frames = []
    while len(frames) < length:
        frames.extend([int(rng.integers(num_classes))] * int(rng.integers(1, 40)))
    return LabelTrack(video_id, tuple(frames[:length]))


@pytest.fixture
def toy_catalog() -> ClassCatalog:
    # 1 knife, 2 phaco, 3 micromanipulator, 4 phaco & micromanipulator, 5 cotton
    return ClassCatalog.build(
        ["knife", "phaco", "micromanipulator", "cotton"],
        [
            {"tools": ["knife"], "phase": "incision"},
            {"tools": ["phaco"], "phase": "phaco"},
            {"tools": ["micromanipulator"], "phase": "phaco"},
            {"tools": ["phaco", "micromanipulator"], "phase": "phaco"},
            {"tools": ["cotton"], "phase": "closing"},
        ],
        phases=["incision", "phaco", "closing"],
    )


@pytest.fixture
def config() -> Config:
    return Config().override(TEMPORAL_AUGMENTATION=False, MAX_RESAMPLE=20)


@pytest.fixture
def demo():
    return demo_catalog(), demo_tracks()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
