"""Annotation ingestion.

Raw annotation files hold, per frame, the fraction of experts that marked each
tool as in contact. They are binarized (strict ``>`` threshold) and the set of
active tools of each frame is mapped through the catalog's combo map to a
single class, giving one class per frame.
"""

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from workflowaug.exceptions import CatalogError, DataError, ParseError
from workflowaug.models import IDLE, ClassCatalog, LabelTrack, RawTrack, Run
from workflowaug.storage import atomic_write_text, dumps_json, read_json

logger = logging.getLogger(__name__)

LABEL_HEADER = ["frame", "class_id", "class_name"]


# ---------- Catalog ----------

def load_catalog(path: str | Path) -> ClassCatalog:
    payload = read_json(path)
    try:
        return ClassCatalog.build(
            payload["tools"],
            payload["classes"],
            phases=payload.get("phases"),
            start_names=payload.get("starts"),
            final_names=payload.get("finals"),
        )
    except (KeyError, TypeError) as e:
        raise CatalogError(f"malformed catalog {path}: {e}") from e


def dump_catalog(catalog: ClassCatalog, path: str | Path) -> Path:
    return atomic_write_text(path, dumps_json(catalog.to_dict()))


# ---------- Raw tracks ----------

def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError("not valid UTF-8", str(path)) from e
    except OSError as e:
        raise ParseError(f"cannot read file: {e}", str(path)) from e


def parse_raw_track(path: str | Path, catalog: ClassCatalog) -> RawTrack:
    """Parse a per-video annotation CSV into a RawTrack.

    The header names the frame column followed by tool columns in any order;
    every catalog tool must be present. Frame numbering may start at 0 or 1
    and is normalized to 0.
    """
    path = Path(path)
    text = _read_text(path)
    return _parse_raw_text(text, path.stem, catalog, str(path))


def _parse_raw_text(text: str, video_id: str, catalog: ClassCatalog, source: str) -> RawTrack:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty track", source) from None

    tool_index = {name: i for i, name in enumerate(catalog.tool_names)}
    columns = [h.strip() for h in header[1:]]
    unknown = [c for c in columns if c not in tool_index]
    if unknown:
        raise ParseError(f"unknown tool column {unknown[0]!r}", source, 1)
    if len(set(columns)) != len(columns):
        raise ParseError("duplicate tool column", source, 1)
    missing = set(tool_index) - set(columns)
    if missing:
        raise ParseError(f"missing tool columns {sorted(missing)}", source, 1)
    order = [tool_index[c] for c in columns]

    rows: list[np.ndarray] = []
    first_index = None
    for line_no, record in enumerate(reader, start=2):
        if not record or all(not cell.strip() for cell in record):
            continue
        if len(record) != len(header):
            raise ParseError("malformed row", source, line_no)
        try:
            frame_index = int(record[0])
            values = [float(cell) for cell in record[1:]]
        except ValueError:
            raise ParseError("malformed row", source, line_no) from None

        if first_index is None:
            if frame_index not in (0, 1):
                raise ParseError("frame index must start at 0 or 1", source, line_no)
            first_index = frame_index
        if frame_index != first_index + len(rows):
            raise ParseError("non-contiguous frame index", source, line_no)
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ParseError("value out of range", source, line_no)

        row = np.empty(len(order), dtype=np.float64)
        row[order] = values
        rows.append(row)

    if not rows:
        raise ParseError("empty track", source)
    return RawTrack(video_id, np.vstack(rows))


def binarize(raw: RawTrack, threshold: float = 0.5) -> np.ndarray:
    """Boolean tool vectors per frame; strictly greater than the threshold is active."""
    return raw.rows > threshold


def to_label_track(raw: RawTrack, catalog: ClassCatalog, threshold: float = 0.5) -> LabelTrack:
    active = binarize(raw, threshold)
    combos, inverse = np.unique(active, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)

    combo_classes = []
    for k, combo in enumerate(combos):
        tool_set = frozenset(int(t) for t in np.flatnonzero(combo))
        try:
            combo_classes.append(catalog.class_for_tools(tool_set))
        except CatalogError as e:
            frame = int(np.flatnonzero(inverse == k)[0])
            raise CatalogError(f"{raw.video_id} frame {frame}: {e}") from None

    labels = np.asarray(combo_classes, dtype=np.int64)[inverse]
    return LabelTrack(raw.video_id, tuple(int(c) for c in labels))


def expand_track(track: LabelTrack, catalog: ClassCatalog) -> RawTrack:
    """Turn a label track back into 0/1 tool vectors."""
    rows = np.zeros((len(track), len(catalog.tools)), dtype=np.float64)
    for frame, class_id in enumerate(track.frames):
        for tool in catalog.expand(class_id):
            rows[frame, tool] = 1.0
    return RawTrack(track.video_id, rows)


def runs(track: LabelTrack) -> list[Run]:
    """Maximal constant-class runs as half-open spans."""
    labels = track.as_array()
    if labels.size == 0:
        raise DataError(f"track {track.video_id} is empty")
    cuts = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], cuts))
    ends = np.concatenate((cuts, [labels.size]))
    return [Run(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def active_runs(track: LabelTrack) -> list[Run]:
    return [r for r in runs(track) if r.class_id != IDLE]


# ---------- Label tracks ----------

def write_label_track(track: LabelTrack, catalog: ClassCatalog, path: str | Path) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LABEL_HEADER)
    for frame, class_id in enumerate(track.frames):
        writer.writerow([frame, class_id, catalog.name(class_id)])
    return atomic_write_text(path, buf.getvalue())


def read_label_track(path: str | Path, catalog: ClassCatalog) -> LabelTrack:
    path = Path(path)
    text = _read_text(path)
    return _parse_label_text(text, path.stem, catalog, str(path))


def _parse_label_text(text: str, video_id: str, catalog: ClassCatalog, source: str) -> LabelTrack:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ParseError("empty track", source)
    header = [h.strip() for h in header]
    if "class_id" not in header:
        raise ParseError("label file needs a class_id column", source, 1)
    col = header.index("class_id")

    frames = []
    for line_no, record in enumerate(reader, start=2):
        if not record:
            continue
        try:
            class_id = int(record[col])
        except (ValueError, IndexError):
            raise ParseError("malformed row", source, line_no) from None
        if not 0 <= class_id < len(catalog):
            raise ParseError(f"class id {class_id} not in catalog", source, line_no)
        frames.append(class_id)
    if not frames:
        raise ParseError("empty track", source)
    return LabelTrack(video_id, tuple(frames))


def load_track_file(path: str | Path, catalog: ClassCatalog, threshold: float = 0.5) -> LabelTrack:
    """Load either a raw annotation CSV or a label CSV, decided by the header."""
    path = Path(path)
    text = _read_text(path)
    first_line = text.split("\n", 1)[0]
    if "class_id" in [h.strip() for h in first_line.split(",")]:
        return _parse_label_text(text, path.stem, catalog, str(path))
    raw = _parse_raw_text(text, path.stem, catalog, str(path))
    return to_label_track(raw, catalog, threshold)


def load_tracks(
    directory: str | Path,
    catalog: ClassCatalog,
    exclude: list[str] | tuple = (),
    threshold: float = 0.5,
    jobs: int = 1,
) -> list[LabelTrack]:
    """Load every ``*.csv`` in a directory, sorted by video id."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    files = sorted(p for p in directory.glob("*.csv") if p.stem not in set(exclude))
    if not files:
        raise DataError(f"no annotation files in {directory}")

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        tracks = list(pool.map(lambda p: load_track_file(p, catalog, threshold), files))

    skipped = len(exclude)
    logger.info(f"Loaded {len(tracks)} tracks from {directory}" + (f" ({skipped} excluded)" if skipped else ""))
    return tracks
