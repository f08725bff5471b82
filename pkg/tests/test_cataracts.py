"""Checks against the real Cataracts training annotations.

Set WORKFLOWAUG_CATARACTS_DIR to a directory holding ``catalog.json`` and
``annotations/*.csv``. Video train04 is left out as in the published corpus
statistics; WORKFLOWAUG_CATARACTS_EXCLUDE overrides the comma-separated list.
"""

import os
from pathlib import Path

import pytest

from workflowaug.services.annotation import load_catalog, load_tracks
from workflowaug.services.segment_db import build_db_from_tracks, corpus_stats

CATARACTS_DIR = os.getenv("WORKFLOWAUG_CATARACTS_DIR")

pytestmark = pytest.mark.skipif(not CATARACTS_DIR, reason="WORKFLOWAUG_CATARACTS_DIR not set")


@pytest.fixture(scope="module")
def cataracts():
    root = Path(CATARACTS_DIR)
    catalog = load_catalog(root / "catalog.json")
    exclude = [v for v in os.getenv("WORKFLOWAUG_CATARACTS_EXCLUDE", "train04").split(",") if v]
    return catalog, load_tracks(root / "annotations", catalog, exclude, jobs=4)


def test_corpus_statistics(cataracts):
    _, tracks = cataracts
    assert len(tracks) == 24
    stats = corpus_stats(tracks)
    assert stats.length == pytest.approx((13993, 14525, 18061), abs=0.5)
    assert stats.label_changes[1] == 49


def test_transition_types(cataracts):
    catalog, tracks = cataracts
    db = build_db_from_tracks(tracks, catalog.phase_map())
    assert db.stats.transition_type_count == 124
