"""Video assembly: from sampled class sequences to edit decision lists.

An AssemblyPlan lists source spans in playback order together with one
spatial parameter set and one speed schedule for the whole video. The plan
is the reproducible recipe: plan file plus source corpus give the output.
The split baseline produces the same plan type with one strided span.
"""

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import cv2
import numpy as np

from workflowaug.config import Config
from workflowaug.exceptions import ConfigError, DataError, UncoveredTransitionError, WalkError
from workflowaug.models import LabelTrack
from workflowaug.services import spatial, temporal
from workflowaug.services.segment_db import (
    FINAL,
    START,
    TRANSITION,
    SegmentDb,
    query,
    rle_decode,
    rle_encode,
)
from workflowaug.services.workflow_graph import WorkflowGraph, sample_sequence
from workflowaug.storage import atomic_write_text, dumps_json, read_json, write_png

logger = logging.getLogger(__name__)

ASSEMBLY, SPLIT = "assembly", "split"


# ---------- Data Structures ----------

@dataclass(frozen=True)
class SegmentRef:
    """A source span ``[start, end)`` taken every ``step`` frames."""

    segment_id: str
    video_id: str
    start: int
    end: int
    from_class: Optional[int] = None
    to_class: Optional[int] = None
    via_idle: bool = False
    kind: str = TRANSITION
    step: int = 1

    def indices(self) -> range:
        return range(self.start, self.end, self.step)

    def to_dict(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "video_id": self.video_id,
            "start": self.start,
            "end": self.end,
            "from": self.from_class,
            "to": self.to_class,
            "via_idle": self.via_idle,
            "kind": self.kind,
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SegmentRef":
        return cls(
            segment_id=payload["segment_id"],
            video_id=payload["video_id"],
            start=int(payload["start"]),
            end=int(payload["end"]),
            from_class=payload.get("from"),
            to_class=payload.get("to"),
            via_idle=bool(payload.get("via_idle", False)),
            kind=payload.get("kind", TRANSITION),
            step=int(payload.get("step", 1)),
        )


@dataclass(frozen=True)
class AssemblyPlan:
    plan_id: str
    seed: int
    kind: str
    sequence: tuple  # sampled class sequence (empty for split plans)
    segments: tuple  # SegmentRef, in playback order
    spatial: spatial.SpatialParamSet
    schedule: Optional[temporal.SpeedSchedule]
    labels: tuple  # per source frame, before re-timing
    output_labels: tuple  # per output frame

    def frame_refs(self) -> list[tuple[str, int]]:
        return [(ref.video_id, i) for ref in self.segments for i in ref.indices()]

    def __len__(self) -> int:
        return len(self.output_labels)

    def check_chaining(self) -> None:
        if self.kind != ASSEMBLY:
            return
        segs = self.segments
        if not segs or segs[0].kind != START or segs[-1].kind != FINAL:
            raise DataError(f"plan {self.plan_id} must open with a start and close with a final segment")
        for a, b in zip(segs, segs[1:]):
            if a.to_class != b.from_class:
                raise DataError(
                    f"plan {self.plan_id}: segment {a.segment_id} ends in class {a.to_class} "
                    f"but {b.segment_id} starts in class {b.from_class}"
                )

    def to_dict(self, config_hash: Optional[str] = None) -> dict:
        return {
            "header": {
                "plan_id": self.plan_id,
                "kind": self.kind,
                "seed": self.seed,
                "config_hash": config_hash,
            },
            "sequence": list(self.sequence),
            "segments": [ref.to_dict() for ref in self.segments],
            "spatial": self.spatial.to_dict(),
            "schedule": self.schedule.to_dict() if self.schedule is not None else None,
            "labels_rle": rle_encode(self.labels),
            "output_labels_rle": rle_encode(self.output_labels),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "AssemblyPlan":
        try:
            header = payload["header"]
            schedule = payload.get("schedule")
            plan = cls(
                plan_id=header["plan_id"],
                seed=int(header["seed"]),
                kind=header["kind"],
                sequence=tuple(int(c) for c in payload.get("sequence", [])),
                segments=tuple(SegmentRef.from_dict(s) for s in payload["segments"]),
                spatial=spatial.SpatialParamSet.from_dict(payload["spatial"]),
                schedule=temporal.SpeedSchedule.from_dict(schedule) if schedule is not None else None,
                labels=rle_decode(payload["labels_rle"]),
                output_labels=rle_decode(payload["output_labels_rle"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"malformed plan: {e}") from e
        if len(plan.frame_refs()) != len(plan.labels):
            raise DataError(f"plan {plan.plan_id}: {len(plan.frame_refs())} frame references, {len(plan.labels)} labels")
        plan.check_chaining()
        return plan

    def output_track(self) -> LabelTrack:
        return LabelTrack(self.plan_id, self.output_labels)


HASH_EXCLUDED = ("OUTPUT_DIR", "JOBS")


def config_hash(config=None) -> str:
    """Digest of the settings that influence plan content."""
    config = config or Config
    payload = {k: getattr(config, k) for k in dir(Config) if k.isupper() and k not in HASH_EXCLUDED}
    return hashlib.sha256(dumps_json(payload).encode("utf-8")).hexdigest()


def derive_seed(master_seed: int, index: int) -> int:
    """Independent per-item seed from (master seed, index)."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, dtype=np.uint64)[0])


# ---------- Assembly ----------

def _pick(rng: np.random.Generator, ids: list[str]) -> str:
    return ids[int(rng.integers(len(ids)))]


def find_uncovered(db: SegmentDb, sequence: list[int]) -> Optional[UncoveredTransitionError]:
    if not db.starts.get(sequence[0]):
        return UncoveredTransitionError(
            (sequence[0], sequence[0]), f"no start segment for class {sequence[0]}"
        )
    for a, b in zip(sequence, sequence[1:]):
        if not query(db, a, b):
            return UncoveredTransitionError((a, b))
    if not db.finals.get(sequence[-1]):
        return UncoveredTransitionError(
            (sequence[-1], sequence[-1]), f"no final segment for class {sequence[-1]}"
        )
    return None


def _ref(segment) -> SegmentRef:
    return SegmentRef(
        segment_id=segment.id,
        video_id=segment.video_id,
        start=segment.start,
        end=segment.end,
        from_class=segment.from_class,
        to_class=segment.to_class,
        via_idle=segment.via_idle,
        kind=segment.kind,
    )


def draw_temporal(rng: np.random.Generator, db: SegmentDb, frame_count: int, config=None) -> temporal.SpeedSchedule:
    config = config or Config
    table = temporal.StrideTable(tuple(config.STRIDE_TABLE), config.SUBFRAMES)
    if not config.TEMPORAL_AUGMENTATION:
        return temporal.SpeedSchedule.constant(frame_count, config.SUBFRAMES, config.SUBFRAMES)
    if not db.stats.defined:
        raise DataError("segment database has no run-length statistics for temporal augmentation")
    sampler = temporal.HaltonSampler(start=int(rng.integers(1, 2**20)))
    return temporal.draw_schedule(
        sampler, frame_count, db.stats.run_length_mean, db.stats.run_length_mad, table
    )


def assemble(
    graph: WorkflowGraph,
    db: SegmentDb,
    seed: int,
    config=None,
    plan_id: Optional[str] = None,
) -> AssemblyPlan:
    """Sample a covered class sequence and turn it into a plan.

    Walks whose sequence needs a start, transition or final segment the
    database lacks are rejected and resampled, up to MAX_RESAMPLE times.
    """
    config = config or Config
    rng = np.random.default_rng(seed)
    plan_id = plan_id or f"plan-{seed}"

    last_error: Optional[Exception] = None
    sequence = None
    for attempt in range(config.MAX_RESAMPLE):
        walk_seed = int(rng.integers(2**63))
        try:
            candidate = sample_sequence(
                graph,
                walk_seed,
                config.MAX_WALK_LENGTH,
                decay=config.DECAY,
                continue_probability=config.CONTINUE_PROBABILITY,
                start_mode=config.START_MODE,
            )
        except WalkError as e:
            last_error = e
            logger.debug(f"{plan_id}: walk {attempt} rejected: {e}")
            continue
        uncovered = find_uncovered(db, candidate)
        if uncovered is not None:
            last_error = uncovered
            logger.debug(f"{plan_id}: walk {attempt} rejected: {uncovered}")
            continue
        sequence = candidate
        break

    if sequence is None:
        logger.warning(f"{plan_id}: no usable walk in {config.MAX_RESAMPLE} attempts")
        raise last_error

    segments = [db.get(_pick(rng, db.starts[sequence[0]]))]
    for a, b in zip(sequence, sequence[1:]):
        variants = query(db, a, b)
        via_idle = sorted(variants)[int(rng.integers(len(variants)))]
        segments.append(db.get(_pick(rng, variants[via_idle])))
    segments.append(db.get(_pick(rng, db.finals[sequence[-1]])))

    labels = tuple(c for s in segments for c in s.classes)
    spatial_params = spatial.draw_params(rng, config)
    schedule = draw_temporal(rng, db, len(labels), config)
    output_labels = tuple(temporal.retime_labels(labels, schedule, config.SUBFRAMES))

    plan = AssemblyPlan(
        plan_id=plan_id,
        seed=seed,
        kind=ASSEMBLY,
        sequence=tuple(sequence),
        segments=tuple(_ref(s) for s in segments),
        spatial=spatial_params,
        schedule=schedule,
        labels=labels,
        output_labels=output_labels,
    )
    plan.check_chaining()
    logger.debug(
        f"{plan_id}: {len(sequence)} classes, {len(segments)} segments, "
        f"{len(labels)} -> {len(output_labels)} frames, {len(spatial_params.ops)} spatial ops"
    )
    return plan


def generate_plans(
    graph: WorkflowGraph,
    db: SegmentDb,
    num: int,
    master_seed: int,
    config=None,
    jobs: int = 1,
) -> list[AssemblyPlan]:
    """``num`` plans, one per derived seed; the result does not depend on ``jobs``."""
    config = config or Config

    def build(index: int) -> AssemblyPlan:
        return assemble(graph, db, derive_seed(master_seed, index), config, plan_id=f"gen{index:05d}")

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        plans = list(pool.map(build, range(num)))
    logger.info(f"Generated {len(plans)} plans (master seed {master_seed}, {jobs} jobs)")
    return plans


def partition_plans(plans: list[AssemblyPlan], fractions=(0.6, 0.2, 0.2), seed: int = 0) -> dict[str, list[str]]:
    """Shuffle plan ids and cut them into train/val/test."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ConfigError(f"split fractions must be three non-negative values summing to 1, got {fractions}")
    ids = [p.plan_id for p in plans]
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(len(ids) * fractions[0]))
    n_val = int(round(len(ids) * fractions[1]))
    shuffled = [ids[i] for i in order]
    return {
        "train": sorted(shuffled[:n_train]),
        "val": sorted(shuffled[n_train:n_train + n_val]),
        "test": sorted(shuffled[n_train + n_val:]),
    }


# ---------- Split baseline ----------

def split_augment(track: LabelTrack, k: int = 10, seed: int = 0, config=None) -> list[AssemblyPlan]:
    """Sub-video ``i`` takes frames ``i, i + k, i + 2k, ...`` of the source.

    Every sub-video draws its own spatial parameters; there is no re-timing.
    """
    config = config or Config
    if k <= 0:
        raise ConfigError(f"k must be positive, got {k}")
    if len(track) < k:
        raise DataError(f"track {track.video_id} has {len(track)} frames, fewer than k={k}")

    plans = []
    for i in range(k):
        rng = np.random.default_rng(derive_seed(seed, i))
        labels = tuple(track.frames[i::k])
        ref = SegmentRef(
            segment_id=f"{track.video_id}/split{i:02d}",
            video_id=track.video_id,
            start=i,
            end=len(track),
            kind=SPLIT,
            step=k,
        )
        plans.append(AssemblyPlan(
            plan_id=f"{track.video_id}_sub{i:02d}",
            seed=seed,
            kind=SPLIT,
            sequence=(),
            segments=(ref,),
            spatial=spatial.draw_params(rng, config),
            schedule=None,
            labels=labels,
            output_labels=labels,
        ))
    return plans


# ---------- Rendering ----------

class _PlanFrames:
    """Random-access view of a plan's source frames after spatial augmentation.

    Source frames are resized to the size of the plan's first frame, so spans
    cut from videos of different resolution join into one output size.
    """

    def __init__(self, plan: AssemblyPlan, source):
        self.plan = plan
        self.source = source
        self.refs = plan.frame_refs()
        self._size: Optional[tuple] = None
        self._recent: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.refs)

    def _source_frame(self, n: int) -> np.ndarray:
        video_id, index = self.refs[n]
        frame = self.source.get(video_id, index)
        if self._size is None:
            first = frame if n == 0 else self.source.get(*self.refs[0])
            self._size = first.shape[:2]
        if frame.shape[:2] != self._size:
            logger.debug(f"Plan {self.plan.plan_id}: resizing {video_id} frame {frame.shape[:2]} to {self._size}")
            h, w = self._size
            frame = cv2.resize(frame, (w, h), interpolation=cv2.INTER_AREA)
        return frame

    def __getitem__(self, n: int) -> np.ndarray:
        if n in self._recent:
            return self._recent[n]
        frame = spatial.apply(self.plan.spatial, self._source_frame(n), frame_index=n)
        if len(self._recent) >= 2:
            self._recent.pop(min(self._recent))
        self._recent[n] = frame
        return frame


def iter_render(plan: AssemblyPlan, source, interpolator=None, subframes: int = temporal.SUBFRAMES) -> Iterator[tuple[np.ndarray, int]]:
    """Stream ``(frame, label)``: spatial augmentation first, then re-timing."""
    frames = _PlanFrames(plan, source)
    if plan.schedule is None:
        for n, label in enumerate(plan.output_labels):
            yield frames[n], label
        return
    interpolator = interpolator or temporal.IdentityInterpolator()
    yield from temporal.iter_retime(frames, plan.labels, plan.schedule, interpolator, subframes)


def render(plan: AssemblyPlan, source, interpolator=None) -> tuple[list[np.ndarray], list[int]]:
    frames, labels = [], []
    for frame, label in iter_render(plan, source, interpolator):
        frames.append(frame)
        labels.append(label)
    if labels != list(plan.output_labels):
        raise DataError(f"plan {plan.plan_id}: rendered labels disagree with the plan")
    return frames, labels


def render_to_directory(plan: AssemblyPlan, source, out_dir: str | Path, interpolator=None) -> int:
    """Write the rendered frames as ``000000.png, ...``; returns the frame count."""
    out_dir = Path(out_dir)
    count = 0
    for count, (frame, _) in enumerate(iter_render(plan, source, interpolator), start=1):
        write_png(out_dir / f"{count - 1:06d}.png", frame)
    if count != len(plan.output_labels):
        raise DataError(f"plan {plan.plan_id}: rendered {count} frames, expected {len(plan.output_labels)}")
    logger.debug(f"Rendered {plan.plan_id}: {count} frames to {out_dir}")
    return count


# ---------- Persistence ----------

def dump_plan(plan: AssemblyPlan, path: str | Path, config=None) -> Path:
    return atomic_write_text(path, dumps_json(plan.to_dict(config_hash(config))))


def load_plan(path: str | Path) -> AssemblyPlan:
    return AssemblyPlan.from_dict(read_json(path))


def dump_params(plan: AssemblyPlan, path: str | Path) -> Path:
    return atomic_write_text(path, dumps_json({"plan_id": plan.plan_id, "spatial": plan.spatial.to_dict()}))
