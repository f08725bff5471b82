"""Segment database.

Source videos are cut at the midpoint of every non-idle class run, so each
segment is centered on one class transition. Idle runs never own a cut point
and stay inside the enclosing segment. The segments of one video partition it
exactly, which makes the split lossless.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from workflowaug.exceptions import DataError
from workflowaug.models import IDLE, LabelTrack
from workflowaug.services.annotation import runs
from workflowaug.storage import atomic_write_text, dumps_json, read_json

logger = logging.getLogger(__name__)

START, TRANSITION, FINAL = "start", "transition", "final"


# ---------- Data Structures ----------

@dataclass(frozen=True)
class Segment:
    """A span ``[start, end)`` of a source video plus its per-frame classes."""

    id: str
    video_id: str
    start: int
    end: int
    from_class: int
    to_class: int
    via_idle: bool
    phase: Optional[str]
    classes: tuple
    kind: str  # start | transition | final

    def __len__(self) -> int:
        return self.end - self.start

    @property
    def key(self) -> tuple[int, int, bool]:
        return self.from_class, self.to_class, self.via_idle

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "video_id": self.video_id,
            "start": self.start,
            "end": self.end,
            "from": self.from_class,
            "to": self.to_class,
            "via_idle": self.via_idle,
            "phase": self.phase,
            "kind": self.kind,
            "classes_rle": rle_encode(self.classes),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Segment":
        classes = rle_decode(payload["classes_rle"])
        segment = cls(
            id=payload["id"],
            video_id=payload["video_id"],
            start=int(payload["start"]),
            end=int(payload["end"]),
            from_class=int(payload["from"]),
            to_class=int(payload["to"]),
            via_idle=bool(payload["via_idle"]),
            phase=payload.get("phase"),
            classes=classes,
            kind=payload["kind"],
        )
        if len(classes) != len(segment) or len(segment) <= 0:
            raise DataError(f"segment {segment.id}: span and class run-length encoding disagree")
        return segment


@dataclass(frozen=True)
class SegmentStats:
    segment_count: int = 0
    transition_type_count: int = 0
    variant_key_count: int = 0
    per_type_counts: dict = field(default_factory=dict)
    largest_type: Optional[str] = None
    largest_type_count: int = 0
    mean_segments_per_type: Optional[float] = None
    single_segment_types: int = 0
    length_q25: Optional[float] = None
    length_median: Optional[float] = None
    length_q75: Optional[float] = None
    length_mean_abs_dev: Optional[float] = None
    length_median_abs_dev: Optional[float] = None
    length_min: Optional[int] = None
    length_max: Optional[int] = None
    run_length_mean: Optional[float] = None
    run_length_mad: Optional[float] = None
    defined: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SegmentDb:
    segments: tuple
    index: dict  # (from, to, via_idle) -> segment ids of transition segments
    starts: dict  # class -> start segment ids
    finals: dict  # class -> final segment ids
    stats: SegmentStats

    def get(self, segment_id: str) -> Segment:
        return self._by_id[segment_id]

    @cached_property
    def _by_id(self) -> dict:
        return {s.id: s for s in self.segments}


def rle_encode(classes) -> list[list[int]]:
    encoded: list[list[int]] = []
    for c in classes:
        if encoded and encoded[-1][0] == c:
            encoded[-1][1] += 1
        else:
            encoded.append([int(c), 1])
    return encoded


def rle_decode(encoded) -> tuple:
    out: list[int] = []
    for c, n in encoded:
        out.extend([int(c)] * int(n))
    return tuple(out)


def type_name(from_class: int, to_class: int) -> str:
    return f"{from_class}->{to_class}"


# ---------- Splitting ----------

def split_video(track: LabelTrack, phases: Mapping[int, Optional[str]]) -> list[Segment]:
    """Cut a track at the midpoints of its non-idle runs.

    Cut ``p_i = floor((start_i + end_i) / 2)`` for each non-idle run. The head
    ``[0, p_1)`` is the start segment of the first class, ``[p_i, p_{i+1})``
    the transition from run i to run i+1 and ``[p_m, end)`` the final segment.
    A head that would be empty (a one-frame first run at frame 0) is dropped.
    """
    active = [r for r in runs(track) if r.class_id != IDLE]
    if not active:
        raise DataError(f"track {track.video_id} has no non-idle run")

    cuts = [(r.start + r.end) // 2 for r in active]
    frames = track.frames
    pieces = []

    first = active[0].class_id
    pieces.append((0, cuts[0], first, first, False, START))
    for i in range(len(active) - 1):
        a, b = active[i], active[i + 1]
        via_idle = a.end != b.start
        pieces.append((cuts[i], cuts[i + 1], a.class_id, b.class_id, via_idle, TRANSITION))
    last = active[-1].class_id
    pieces.append((cuts[-1], len(frames), last, last, False, FINAL))

    segments = []
    for start, end, from_class, to_class, via_idle, kind in pieces:
        if end <= start:
            continue
        segments.append(Segment(
            id=f"{track.video_id}/{len(segments):04d}",
            video_id=track.video_id,
            start=start,
            end=end,
            from_class=from_class,
            to_class=to_class,
            via_idle=via_idle,
            phase=phases.get(to_class),
            classes=tuple(frames[start:end]),
            kind=kind,
        ))
    return segments


# ---------- Database ----------

def build_db(segments: list[Segment]) -> SegmentDb:
    index: dict = defaultdict(list)
    starts: dict = defaultdict(list)
    finals: dict = defaultdict(list)
    seen: set = set()
    for segment in segments:
        if segment.id in seen:
            raise DataError(f"duplicate segment id {segment.id}")
        seen.add(segment.id)
        if segment.kind == TRANSITION:
            index[segment.key].append(segment.id)
        elif segment.kind == START:
            starts[segment.from_class].append(segment.id)
        elif segment.kind == FINAL:
            finals[segment.to_class].append(segment.id)
        else:
            raise DataError(f"segment {segment.id} has unknown kind {segment.kind}")

    segments = tuple(segments)
    db = SegmentDb(
        segments=segments,
        index=dict(index),
        starts=dict(starts),
        finals=dict(finals),
        stats=compute_stats(segments),
    )
    logger.info(
        f"Segment database: {len(segments)} segments, "
        f"{db.stats.transition_type_count} transition types"
    )
    return db


def build_db_from_tracks(tracks: list[LabelTrack], phases: Mapping[int, Optional[str]]) -> SegmentDb:
    segments: list[Segment] = []
    for track in tracks:
        segments.extend(split_video(track, phases))
    return build_db(segments)


def query(db: SegmentDb, from_class: int, to_class: int) -> dict[bool, list[str]]:
    """Available via-idle variants of a transition and their segment ids."""
    variants = {}
    for via_idle in (False, True):
        ids = db.index.get((from_class, to_class, via_idle))
        if ids:
            variants[via_idle] = list(ids)
    return variants


def source_tracks(db: SegmentDb) -> list[LabelTrack]:
    """Reassemble the source tracks from their segments."""
    return _reassemble(db.segments)


def _reassemble(segments) -> list[LabelTrack]:
    by_video: dict = defaultdict(list)
    for segment in segments:
        by_video[segment.video_id].append(segment)
    tracks = []
    for video_id in sorted(by_video):
        frames: list[int] = []
        for segment in sorted(by_video[video_id], key=lambda s: s.start):
            frames.extend(segment.classes)
        tracks.append(LabelTrack(video_id, tuple(frames)))
    return tracks


def _quartiles(values) -> tuple[float, float, float]:
    q25, q50, q75 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return float(q25), float(q50), float(q75)


def compute_stats(segments) -> SegmentStats:
    if not segments:
        return SegmentStats()

    type_counts = Counter(
        type_name(s.from_class, s.to_class) for s in segments if s.kind == TRANSITION
    )
    variant_keys = {s.key for s in segments if s.kind == TRANSITION}
    lengths = np.array([len(s) for s in segments], dtype=np.float64)
    q25, median, q75 = _quartiles(lengths)

    run_lengths = [
        r.length
        for track in _reassemble(segments)
        for r in runs(track)
    ]
    run_array = np.asarray(run_lengths, dtype=np.float64)
    run_mean = float(run_array.mean())

    largest = None
    largest_count = 0
    if type_counts:
        largest, largest_count = sorted(type_counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]

    return SegmentStats(
        segment_count=len(segments),
        transition_type_count=len(type_counts),
        variant_key_count=len(variant_keys),
        per_type_counts=dict(sorted(type_counts.items())),
        largest_type=largest,
        largest_type_count=largest_count,
        mean_segments_per_type=(
            float(sum(type_counts.values()) / len(type_counts)) if type_counts else None
        ),
        single_segment_types=sum(1 for n in type_counts.values() if n == 1),
        length_q25=q25,
        length_median=median,
        length_q75=q75,
        length_mean_abs_dev=float(np.mean(np.abs(lengths - lengths.mean()))),
        length_median_abs_dev=float(np.median(np.abs(lengths - median))),
        length_min=int(lengths.min()),
        length_max=int(lengths.max()),
        run_length_mean=run_mean,
        run_length_mad=float(np.mean(np.abs(run_array - run_mean))),
        defined=True,
    )


def dump_manifest(db: SegmentDb, path: str | Path) -> Path:
    payload = {
        "segments": [s.to_dict() for s in db.segments],
        "index": {
            f"{a}->{b}:{'idle' if via else 'direct'}": ids
            for (a, b, via), ids in sorted(db.index.items())
        },
        "stats": db.stats.to_dict(),
    }
    return atomic_write_text(path, dumps_json(payload))


def load_manifest(path: str | Path) -> SegmentDb:
    payload = read_json(path)
    try:
        segments = [Segment.from_dict(s) for s in payload["segments"]]
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed segment manifest {path}: {e}") from e
    return build_db(segments)


# ---------- Corpus statistics ----------

@dataclass(frozen=True)
class VideoStats:
    video_id: str
    length: int
    label_changes: int
    distinct_labels: int
    run_lengths: tuple


@dataclass(frozen=True)
class CorpusStats:
    videos: tuple
    length: tuple  # (25th percentile, median, 75th percentile)
    label_changes: tuple
    distinct_labels: tuple
    sequence_length: tuple

    def to_dict(self) -> dict:
        return {
            "videos": [
                {
                    "video_id": v.video_id,
                    "length": v.length,
                    "label_changes": v.label_changes,
                    "distinct_labels": v.distinct_labels,
                }
                for v in self.videos
            ],
            "length": list(self.length),
            "label_changes": list(self.label_changes),
            "distinct_labels": list(self.distinct_labels),
            "sequence_length": list(self.sequence_length),
        }


def video_stats(track: LabelTrack) -> VideoStats:
    track_runs = runs(track)
    return VideoStats(
        video_id=track.video_id,
        length=len(track),
        label_changes=len(track_runs) - 1,
        distinct_labels=len(set(track.frames)),
        run_lengths=tuple(r.length for r in track_runs),
    )


def corpus_stats(tracks: list[LabelTrack]) -> CorpusStats:
    if not tracks:
        raise DataError("corpus statistics need at least one track")
    videos = tuple(video_stats(t) for t in tracks)
    return CorpusStats(
        videos=videos,
        length=_quartiles([v.length for v in videos]),
        label_changes=_quartiles([v.label_changes for v in videos]),
        distinct_labels=_quartiles([v.distinct_labels for v in videos]),
        sequence_length=_quartiles([n for v in videos for n in v.run_lengths]),
    )


def class_distribution(tracks: list[LabelTrack], num_classes: Optional[int] = None) -> dict[int, float]:
    """Percentage of frames per class over all tracks."""
    counts: Counter = Counter()
    for track in tracks:
        counts.update(track.frames)
    total = sum(counts.values())
    classes = range(num_classes) if num_classes is not None else sorted(counts)
    if total == 0:
        return {c: 0.0 for c in classes}
    return {c: 100.0 * counts.get(c, 0) / total for c in classes}
