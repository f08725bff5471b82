"""File persistence helpers.

Every artifact is a plain file. Writes go to a temporary file in the target
directory and are moved into place with ``os.replace`` so readers never see a
partial file.
"""

import json
import logging
import os
import tempfile
from pathlib import Path

import cv2
import numpy as np

from workflowaug.exceptions import DataError

logger = logging.getLogger(__name__)


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path: str | Path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def dumps_json(payload) -> str:
    """Canonical JSON: sorted keys, fixed indent, trailing newline."""
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: str | Path, payload) -> Path:
    return atomic_write_text(path, dumps_json(payload))


def read_json(path: str | Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise DataError(f"{path} is not valid UTF-8") from e
    except json.JSONDecodeError as e:
        raise DataError(f"{path} is not valid JSON: {e}") from e


def write_png(path: str | Path, frame: np.ndarray) -> Path:
    """Write an RGB frame as PNG (OpenCV stores BGR)."""
    ok, buf = cv2.imencode(".png", cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
    if not ok:
        raise DataError(f"failed to encode frame for {path}")
    return atomic_write_bytes(path, buf.tobytes())


def read_image(path: str | Path) -> np.ndarray | None:
    """Read an image file as an RGB uint8 array, or None if unreadable."""
    frame = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if frame is None:
        logger.warning(f"Unreadable image {path}")
        return None
    return cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
