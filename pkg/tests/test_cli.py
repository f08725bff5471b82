import json
import shutil

import networkx as nx
import numpy as np
import pytest
from click.testing import CliRunner

from workflowaug.cli import cli
from workflowaug.seed_corpus import COTTON, KNIFE, PHACO
from workflowaug.services.assembler import load_plan
from workflowaug.services.workflow_graph import WorkflowGraph, dump_graph, load_graph
from workflowaug.storage import read_image


def invoke(*args):
    return CliRunner().invoke(cli, [str(a) for a in args])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    result = invoke("seed-demo", root, "--frames")
    assert result.exit_code == 0, result.output
    return root


@pytest.fixture(scope="module")
def built(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("built")
    catalog = corpus / "catalog.json"
    assert invoke("extract-workflow", corpus / "annotations", "--catalog", catalog, "--out", out / "graph.json").exit_code == 0
    assert invoke("build-segments", corpus / "annotations", "--catalog", catalog, "--out", out / "segments.json").exit_code == 0
    return out


def write_config(path, **values):
    path.write_text(json.dumps(values))
    return path


# ---------- Corpus ----------

def test_seed_demo(corpus):
    assert (corpus / "catalog.json").exists()
    assert len(list((corpus / "annotations").glob("*.csv"))) == 10
    assert len(list((corpus / "frames" / "demo01").glob("*.png"))) > 0


def test_extract_workflow(corpus, built, tmp_path):
    graph = load_graph(built / "graph.json")
    assert graph.starts == {KNIFE} and graph.finals == {COTTON}
    assert graph.base_weights(PHACO).tolist() == pytest.approx([1 / 3] * 3)
    assert (built / "graph_phases.json").exists()

    result = invoke("extract-workflow", corpus / "annotations", "--catalog", corpus / "catalog.json", "--out", tmp_path / "graph.json")
    assert "starts: primary incision knife" in result.output
    assert "finals: cotton" in result.output


def test_extract_empirical_weights(corpus, tmp_path):
    result = invoke(
        "extract-workflow", corpus / "annotations", "--catalog", corpus / "catalog.json",
        "--mode", "empirical", "--out", tmp_path / "graph.json",
    )
    assert result.exit_code == 0, result.output
    weights = sorted(load_graph(tmp_path / "graph.json").base_weights(PHACO).tolist())
    assert weights == pytest.approx([1 / 14, 3 / 14, 10 / 14])


def test_extract_from_empty_directory(corpus, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = invoke("extract-workflow", empty, "--catalog", corpus / "catalog.json", "--out", tmp_path / "g.json")
    assert result.exit_code == 3
    assert "no annotation files" in result.output


def test_build_segments_is_reproducible(corpus, built, tmp_path):
    result = invoke("build-segments", corpus / "annotations", "--catalog", corpus / "catalog.json", "--out", tmp_path / "segments.json")
    assert result.exit_code == 0, result.output
    assert "transition types" in result.output
    assert (tmp_path / "segments.json").read_bytes() == (built / "segments.json").read_bytes()
    assert (tmp_path / "segments_stats.json").exists()


def test_invalid_config(corpus, tmp_path):
    config = write_config(tmp_path / "config.json", decay=2.0)
    result = invoke("--config", config, "extract-workflow", corpus / "annotations", "--catalog", corpus / "catalog.json")
    assert result.exit_code == 2
    assert "DECAY" in result.output

    config = write_config(tmp_path / "bad.json", no_such_setting=1)
    assert invoke("--config", config, "seed-demo", tmp_path / "x").exit_code == 2


def test_config_file_values_are_type_checked(corpus, tmp_path):
    args = ("extract-workflow", corpus / "annotations", "--catalog", corpus / "catalog.json", "--out", tmp_path / "g.json")
    result = invoke("--config", write_config(tmp_path / "text.json", decay="0.3"), *args)
    assert result.exit_code == 0, result.output

    result = invoke("--config", write_config(tmp_path / "word.json", decay="half"), *args)
    assert result.exit_code == 2
    assert "DECAY" in result.output

    ranges = write_config(tmp_path / "ranges.json", spatial_ranges={"zoom": [1.0, 0.5]})
    result = invoke("--config", ranges, *args)
    assert result.exit_code == 2
    assert "SPATIAL_RANGES[zoom]" in result.output


def test_non_utf8_annotation_file(corpus, tmp_path):
    annotations = tmp_path / "annotations"
    shutil.copytree(corpus / "annotations", annotations)
    (annotations / "bad.csv").write_bytes(b"frame,\xff\xfe\n0,1\n")
    result = invoke("build-segments", annotations, "--catalog", corpus / "catalog.json", "--out", tmp_path / "s.json")
    assert result.exit_code == 3
    assert "bad.csv: not valid UTF-8" in result.output


# ---------- Generation ----------

def generate(corpus, built, out, *extra):
    return invoke(
        "generate", "--catalog", corpus / "catalog.json", "--graph", built / "graph.json",
        "--segments", built / "segments.json", "--out", out, *extra,
    )


def test_generate_is_reproducible(corpus, built, tmp_path):
    for name in ("a", "b"):
        result = generate(corpus, built, tmp_path / name, "--num", 5, "--seed", 11, "--split")
        assert result.exit_code == 0, result.output
    assert "train: 3, val: 1, test: 1" in result.output

    plans = sorted(p.name for p in (tmp_path / "a" / "plans").iterdir())
    assert plans == [f"gen{i:05d}.json" for i in range(5)]
    for sub in ("plans", "labels"):
        for path in (tmp_path / "a" / sub).iterdir():
            assert path.read_bytes() == (tmp_path / "b" / sub / path.name).read_bytes()
    assert json.loads((tmp_path / "a" / "split.json").read_text())["val"]


def test_generate_dump_params(corpus, built, tmp_path):
    result = generate(corpus, built, tmp_path, "--num", 2, "--dump-params", "--no-temporal")
    assert result.exit_code == 0, result.output
    params = json.loads((tmp_path / "params" / "gen00001.json").read_text())
    assert params["plan_id"] == "gen00001"
    assert params["spatial"] == load_plan(tmp_path / "plans" / "gen00001.json").spatial.to_dict()


def test_render_without_augmentation_copies_source_frames(corpus, built, tmp_path):
    config = write_config(
        tmp_path / "config.json", selection_probability=0.0, temporal_augmentation=False, interpolator="identity"
    )
    result = invoke(
        "--config", config, "generate", "--catalog", corpus / "catalog.json", "--graph", built / "graph.json",
        "--segments", built / "segments.json", "--out", tmp_path / "out", "--num", 1,
        "--render", "--frames", corpus / "frames",
    )
    assert result.exit_code == 0, result.output
    plan = load_plan(tmp_path / "out" / "plans" / "gen00000.json")
    rendered = sorted((tmp_path / "out" / "frames" / "gen00000").iterdir())
    assert len(rendered) == len(plan)
    for n, (video_id, index) in enumerate(plan.frame_refs()[:100]):
        source = read_image(corpus / "frames" / video_id / f"{index:06d}.png")
        assert np.array_equal(read_image(rendered[n]), source)


def test_render_needs_frames(corpus, built, tmp_path):
    result = generate(corpus, built, tmp_path, "--num", 1, "--render")
    assert result.exit_code == 2


def test_generate_uncovered_transition(corpus, built, tmp_path):
    graph = nx.DiGraph()
    graph.add_edge(KNIFE, COTTON, weight=1.0)
    path = dump_graph(WorkflowGraph(graph, frozenset({KNIFE}), frozenset({COTTON})), tmp_path / "graph.json")
    config = write_config(tmp_path / "config.json", max_resample=3)
    result = invoke(
        "--config", config, "generate", "--catalog", corpus / "catalog.json", "--graph", path,
        "--segments", built / "segments.json", "--out", tmp_path / "out", "--num", 1,
    )
    assert result.exit_code == 3
    assert f"{KNIFE} -> {COTTON}" in result.output


def test_generate_needs_a_graph(corpus, built, tmp_path):
    result = invoke(
        "generate", "--catalog", corpus / "catalog.json", "--segments", built / "segments.json",
        "--out", tmp_path, "--num", 1,
    )
    assert result.exit_code == 2


def test_split_baseline(corpus, tmp_path):
    result = invoke("split-baseline", corpus / "annotations", "--catalog", corpus / "catalog.json", "--k", 10, "--out", tmp_path)
    assert result.exit_code == 0, result.output
    assert "wrote 100 sub-video plans from 10 videos" in result.output
    assert len(list((tmp_path / "labels").glob("*.csv"))) == 100
    assert (tmp_path / "labels" / "demo03_sub07.csv").exists()


# ---------- Statistics and evaluation ----------

def test_stats_against_generated(corpus, built, tmp_path):
    assert generate(corpus, built, tmp_path / "gen", "--num", 40, "--no-temporal").exit_code == 0
    result = invoke(
        "stats", corpus / "annotations", "--generated", tmp_path / "gen" / "labels",
        "--catalog", corpus / "catalog.json", "--out", tmp_path / "stats.json",
    )
    assert result.exit_code == 0, result.output
    assert "rarest source class: capsulorhexis forceps" in result.output

    report = json.loads((tmp_path / "stats.json").read_text())
    for name in ("source", "generated"):
        assert sum(report[name]["class_distribution"].values()) == pytest.approx(100.0, abs=0.01)
    assert report["source"]["label_changes"][1] == 5
    assert report["comparison"]["rare_class_uplift"] > 1.0
    assert report["comparison"]["generated_min_max_ratio"] > report["comparison"]["source_min_max_ratio"]


def test_evaluate_perfect_prediction(corpus, built, tmp_path):
    assert generate(corpus, built, tmp_path / "gen", "--num", 3, "--no-temporal").exit_code == 0
    labels = tmp_path / "gen" / "labels"
    result = invoke("evaluate", labels, labels, "--catalog", corpus / "catalog.json", "--stride", 1, "--out", tmp_path / "eval")
    assert result.exit_code == 0, result.output
    assert "ACC 1.0000" in result.output
    report = json.loads((tmp_path / "eval" / "metrics.json").read_text())
    assert report["overall"]["acc"] == 1.0
    assert (tmp_path / "eval" / "metrics.txt").read_text() in result.output


def test_evaluate_missing_prediction(corpus, built, tmp_path):
    assert generate(corpus, built, tmp_path / "gen", "--num", 2, "--no-temporal").exit_code == 0
    pred = tmp_path / "pred"
    pred.mkdir()
    source = tmp_path / "gen" / "labels" / "gen00000.csv"
    (pred / source.name).write_bytes(source.read_bytes())
    result = invoke("evaluate", tmp_path / "gen" / "labels", pred, "--catalog", corpus / "catalog.json", "--out", tmp_path / "eval")
    assert result.exit_code == 3
    assert "gen00001.csv" in result.output
