"""Frame sources resolving (video id, frame index) to RGB pixel buffers."""

import logging
import threading
from collections import OrderedDict
from pathlib import Path
from typing import Protocol

import numpy as np

from workflowaug.exceptions import DataError, FrameNotFoundError
from workflowaug.storage import read_image

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class FrameSource(Protocol):
    def get(self, video_id: str, index: int) -> np.ndarray: ...


class MemoryFrameSource:
    """Frames held in memory: ``{video_id: [frame, ...]}``."""

    def __init__(self, videos: dict):
        self.videos = videos

    def get(self, video_id: str, index: int) -> np.ndarray:
        frames = self.videos.get(video_id)
        if frames is None or not 0 <= index < len(frames):
            raise FrameNotFoundError(video_id, index)
        return frames[index]


class DirectoryFrameSource:
    """One sub-directory of image files per video, frames in file-name order.

    Decoded frames are kept in a small LRU cache since consecutive output
    frames mostly read the same source pair.
    """

    def __init__(self, root: str | Path, cache_size: int = 64):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DataError(f"frame directory {self.root} does not exist")
        self.cache_size = cache_size
        self._listing: dict[str, list[Path]] = {}
        self._cache: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def _files(self, video_id: str) -> list[Path]:
        if video_id not in self._listing:
            directory = self.root / video_id
            files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES) \
                if directory.is_dir() else []
            if not files:
                logger.warning(f"No frames for video {video_id} under {self.root}")
            self._listing[video_id] = files
        return self._listing[video_id]

    def get(self, video_id: str, index: int) -> np.ndarray:
        key = (video_id, index)
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
            files = self._files(video_id)

        if not 0 <= index < len(files):
            raise FrameNotFoundError(video_id, index)
        frame = read_image(files[index])
        if frame is None:
            raise FrameNotFoundError(video_id, index)

        with self._lock:
            self._cache[key] = frame
            if len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return frame
