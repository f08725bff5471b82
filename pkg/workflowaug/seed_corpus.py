"""Write the packaged demo corpus: a small, deliberately skewed surgery set.

One class (phacoemulsifier handpiece) holds about 60 % of the frames and one
(capsulorhexis forceps) about 1 %. Most videos follow the plain
knife -> phaco -> I/A -> cotton workflow; a few detour through the
micromanipulator combination, one through the forceps.

Usage:
    python -m workflowaug.seed_corpus [OUT_DIR] [--frames]
"""

import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from workflowaug.models import IDLE, ClassCatalog, LabelTrack
from workflowaug.services.annotation import dump_catalog, expand_track
from workflowaug.storage import atomic_write_text, write_png

logger = logging.getLogger(__name__)

DEMO_TOOLS = [
    "primary incision knife",
    "phacoemulsifier handpiece",
    "micromanipulator",
    "irrigation/aspiration handpiece",
    "capsulorhexis forceps",
    "cotton",
]

DEMO_PHASES = ["incision", "capsulorhexis", "phacoemulsification", "irrigation", "closing"]

DEMO_CLASSES = [
    {"tools": ["primary incision knife"], "phase": "incision"},
    {"tools": ["phacoemulsifier handpiece"], "phase": "phacoemulsification"},
    {"tools": ["phacoemulsifier handpiece", "micromanipulator"], "phase": "phacoemulsification"},
    {"tools": ["irrigation/aspiration handpiece"], "phase": "irrigation"},
    {"tools": ["capsulorhexis forceps"], "phase": "capsulorhexis"},
    {"tools": ["cotton"], "phase": "closing"},
]

KNIFE, PHACO, PHACO_MICRO, IA, FORCEPS, COTTON = range(1, 7)

LEAD_IDLE = 30
TAIL_IDLE = 50

# (video id, [(class, run length), ...]); IDLE entries are gaps between runs
DEMO_LAYOUTS = (
    [(f"demo{i:02d}", [(KNIFE, 40), (PHACO, 600), (IA, 120), (COTTON, 80)]) for i in range(1, 7)]
    + [
        ("demo07", [(KNIFE, 40), (PHACO, 300), (PHACO_MICRO, 80), (PHACO, 300), (IA, 120), (COTTON, 80)]),
        ("demo08", [(KNIFE, 40), (PHACO, 300), (PHACO_MICRO, 80), (PHACO, 300), (IA, 120), (COTTON, 80)]),
        ("demo09", [(KNIFE, 40), (PHACO, 300), (PHACO_MICRO, 80), (PHACO, 300), (IA, 120), (IDLE, 10), (COTTON, 80)]),
        ("demo10", [(KNIFE, 40), (PHACO, 300), (FORCEPS, 96), (PHACO, 300), (IA, 120), (COTTON, 80)]),
    ]
)

# per-class RGB used for the synthetic demo frames
CLASS_COLORS = {
    IDLE: (20, 20, 20),
    KNIFE: (200, 60, 60),
    PHACO: (60, 200, 60),
    PHACO_MICRO: (60, 200, 200),
    IA: (60, 60, 200),
    FORCEPS: (200, 200, 60),
    COTTON: (230, 230, 230),
}


def demo_catalog() -> ClassCatalog:
    return ClassCatalog.build(
        DEMO_TOOLS,
        DEMO_CLASSES,
        phases=DEMO_PHASES,
        start_names=["primary incision knife"],
        final_names=["cotton"],
    )


def demo_tracks(seed: int = 0, jitter: int = 5) -> list[LabelTrack]:
    """Label tracks of the demo corpus; run lengths get a small seeded jitter (forceps runs excepted)."""
    rng = np.random.default_rng(seed)
    tracks = []
    for video_id, layout in DEMO_LAYOUTS:
        frames = [IDLE] * LEAD_IDLE
        for class_id, length in layout:
            if class_id not in (IDLE, FORCEPS) and jitter:
                length += int(rng.integers(-jitter, jitter + 1))
            frames.extend([class_id] * length)
        frames.extend([IDLE] * TAIL_IDLE)
        tracks.append(LabelTrack(video_id, tuple(frames)))
    return tracks


def raw_annotation_csv(track: LabelTrack, catalog: ClassCatalog, rng: np.random.Generator, first_index: int = 0) -> str:
    """Fractional expert-agreement CSV: active tools at 0.8 or 1.0, inactive at 0.0 or 0.5."""
    binary = expand_track(track, catalog).rows
    active = rng.choice([0.8, 1.0], size=binary.shape)
    inactive = rng.choice([0.0, 0.5], size=binary.shape, p=[0.9, 0.1])
    values = np.where(binary > 0, active, inactive)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame"] + catalog.tool_names)
    for n, row in enumerate(values):
        writer.writerow([n + first_index] + [f"{v:g}" for v in row])
    return buf.getvalue()


def demo_frames(track: LabelTrack, size: tuple = (24, 32), seed: int = 0):
    """Small synthetic RGB frames: class color plus a moving bar and mild noise."""
    rng = np.random.default_rng(seed)
    h, w = size
    for n, class_id in enumerate(track.frames):
        frame = np.empty((h, w, 3), dtype=np.uint8)
        frame[:] = CLASS_COLORS[class_id]
        frame[:, (n % w)] = 255
        noise = rng.integers(-8, 9, size=frame.shape)
        yield np.clip(frame.astype(np.int16) + noise, 0, 255).astype(np.uint8)


def write_demo_corpus(out_dir: str | Path, seed: int = 0, frames: bool = False, frame_size: tuple = (24, 32)) -> dict:
    out_dir = Path(out_dir)
    catalog = demo_catalog()
    tracks = demo_tracks(seed)
    rng = np.random.default_rng(seed + 1)

    catalog_path = dump_catalog(catalog, out_dir / "catalog.json")
    annotations = out_dir / "annotations"
    for k, track in enumerate(tracks):
        # every other file numbers its frames from 1
        text = raw_annotation_csv(track, catalog, rng, first_index=k % 2)
        atomic_write_text(annotations / f"{track.video_id}.csv", text)

    result = {"catalog": catalog_path, "annotations": annotations}
    if frames:
        frame_root = out_dir / "frames"
        for k, track in enumerate(tracks):
            for n, frame in enumerate(demo_frames(track, frame_size, seed=seed + k)):
                write_png(frame_root / track.video_id / f"{n:06d}.png", frame)
        result["frames"] = frame_root

    total = sum(len(t) for t in tracks)
    logger.info(f"Wrote demo corpus to {out_dir}: {len(tracks)} videos, {total} frames")
    return result


def main():
    logging.basicConfig(level=logging.INFO, format="%(asctime)s [%(levelname)s] %(message)s")
    out_dir = sys.argv[1] if len(sys.argv) > 1 else "demo"
    write_demo_corpus(out_dir, frames="--frames" in sys.argv[2:])


if __name__ == "__main__":
    main()
