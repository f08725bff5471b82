"""Command-line front-end.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 bad input data.
Settings come from the defaults, then the JSON file named by ``--config`` (or
WORKFLOWAUG_CONFIG), then the command flags.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from workflowaug.config import Config
from workflowaug.exceptions import ConfigError, DataError
from workflowaug.models import LabelTrack
from workflowaug.seed_corpus import write_demo_corpus
from workflowaug.services import annotation, assembler, metrics, segment_db, temporal, workflow_graph
from workflowaug.services.frame_source import DirectoryFrameSource
from workflowaug.storage import atomic_write_text, write_json

logger = logging.getLogger(__name__)


class WorkflowAugGroup(click.Group):
    """Maps library errors to exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except ConfigError as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(2)
        except DataError as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(3)


def _config(ctx, **flags) -> Config:
    config = ctx.obj
    config.override(**{k.upper(): v for k, v in flags.items()})
    return config.validate()


def _catalog(config):
    return annotation.load_catalog(config.CATALOG_PATH)


def _out_dir(config, out) -> Path:
    return Path(out or config.OUTPUT_DIR)


catalog_option = click.option("--catalog", "catalog_path", type=click.Path(), help="Class catalog JSON.")


@click.group(cls=WorkflowAugGroup)
@click.option("--config", "config_path", type=click.Path(), envvar="WORKFLOWAUG_CONFIG", help="JSON config file.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
@click.pass_context
def cli(ctx, config_path, verbose):
    """Workflow-graph based augmentation of annotated surgery videos."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(message)s",
    )
    ctx.obj = Config.from_file(config_path)


# ---------- Corpus ----------

@cli.command("seed-demo")
@click.argument("out_dir", type=click.Path(file_okay=False), default="demo")
@click.option("--frames/--no-frames", default=False, help="Also write synthetic PNG frames.")
@click.option("--seed", type=int, default=0)
def seed_demo(out_dir, frames, seed):
    """Write the skewed demo corpus and its catalog."""
    paths = write_demo_corpus(out_dir, seed=seed, frames=frames)
    for name, path in sorted(paths.items()):
        click.echo(f"{name}: {path}")


@cli.command("extract-workflow")
@click.argument("annotations", type=click.Path(exists=True, file_okay=False))
@catalog_option
@click.option("--mode", type=click.Choice(["uniform", "empirical"]), default=None, help="Edge weight mode.")
@click.option("--exclude", multiple=True, help="Video id to leave out (repeatable).")
@click.option("--out", type=click.Path(), default=None, help="Graph file (default OUTPUT_DIR/graph.json).")
@click.option("--jobs", type=int, default=None)
@click.pass_context
def extract_workflow(ctx, annotations, catalog_path, mode, exclude, out, jobs):
    """Extract the workflow graph from annotation files."""
    config = _config(ctx, catalog_path=catalog_path, graph_mode=mode, jobs=jobs)
    catalog = _catalog(config)
    tracks = annotation.load_tracks(annotations, catalog, exclude, config.BINARIZE_THRESHOLD, config.JOBS)
    graph = workflow_graph.extract_graph(tracks, catalog, config.GRAPH_MODE)

    out = Path(out) if out else _out_dir(config, None) / "graph.json"
    workflow_graph.dump_graph(graph, out, catalog)
    report = workflow_graph.phase_report(graph, catalog)
    write_json(out.with_name(out.stem + "_phases.json"), report)

    click.echo(f"graph: {out} ({len(graph.nodes)} classes, {len(graph.edges())} transitions)")
    click.echo("starts: " + ", ".join(catalog.name(s) for s in sorted(graph.starts)))
    click.echo("finals: " + ", ".join(catalog.name(f) for f in sorted(graph.finals)))
    for phase, entry in report.items():
        click.echo(f"  {phase}: {', '.join(entry['classes'])}")


@cli.command("build-segments")
@click.argument("annotations", type=click.Path(exists=True, file_okay=False))
@catalog_option
@click.option("--exclude", multiple=True, help="Video id to leave out (repeatable).")
@click.option("--out", type=click.Path(), default=None, help="Manifest file (default OUTPUT_DIR/segments.json).")
@click.option("--jobs", type=int, default=None)
@click.pass_context
def build_segments(ctx, annotations, catalog_path, exclude, out, jobs):
    """Split the source tracks into transition segments."""
    config = _config(ctx, catalog_path=catalog_path, jobs=jobs)
    catalog = _catalog(config)
    tracks = annotation.load_tracks(annotations, catalog, exclude, config.BINARIZE_THRESHOLD, config.JOBS)
    db = segment_db.build_db_from_tracks(tracks, catalog.phase_map())

    out = Path(out) if out else _out_dir(config, None) / "segments.json"
    segment_db.dump_manifest(db, out)
    write_json(out.with_name(out.stem + "_stats.json"), db.stats.to_dict())

    s = db.stats
    click.echo(f"manifest: {out}")
    click.echo(f"segments: {s.segment_count}, transition types: {s.transition_type_count}, "
               f"with via-idle variants: {s.variant_key_count}")
    click.echo(f"largest type: {s.largest_type} ({s.largest_type_count} segments), "
               f"single-segment types: {s.single_segment_types}")
    click.echo(f"segment length quartiles: {s.length_q25:.1f} / {s.length_median:.1f} / {s.length_q75:.1f}")
    click.echo(f"class run length: mean {s.run_length_mean:.2f}, MAD {s.run_length_mad:.2f}")


# ---------- Generation ----------

def _load_graph(config, graph_path):
    path = graph_path or config.GRAPH_OVERRIDE_PATH
    if not path:
        raise ConfigError("no workflow graph given (--graph or GRAPH_OVERRIDE_PATH)")
    return workflow_graph.load_graph(path)


def _write_outputs(plans, catalog, config, out_dir: Path, render: bool, frames_dir, dump_params: bool, jobs: int):
    for plan in plans:
        assembler.dump_plan(plan, out_dir / "plans" / f"{plan.plan_id}.json", config)
        annotation.write_label_track(plan.output_track(), catalog, out_dir / "labels" / f"{plan.plan_id}.csv")
        if dump_params:
            assembler.dump_params(plan, out_dir / "params" / f"{plan.plan_id}.json")

    if render:
        if not frames_dir:
            raise ConfigError("--render needs --frames pointing at the source frame directories")
        source = DirectoryFrameSource(frames_dir)
        interpolator = temporal.get_interpolator(config.INTERPOLATOR)

        def render_one(plan):
            return assembler.render_to_directory(plan, source, out_dir / "frames" / plan.plan_id, interpolator)

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            counts = list(pool.map(render_one, plans))
        click.echo(f"rendered {sum(counts)} frames")


@cli.command()
@catalog_option
@click.option("--graph", "graph_path", type=click.Path(exists=True, dir_okay=False), help="Workflow graph file.")
@click.option("--segments", "segments_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Segment manifest.")
@click.option("--num", type=int, default=None, help="Number of videos.")
@click.option("--seed", type=int, default=None, help="Master seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--render", is_flag=True, help="Render frames as well as plans.")
@click.option("--frames", "frames_dir", type=click.Path(exists=True, file_okay=False), help="Source frame root.")
@click.option("--interpolator", default=None, help="identity | linear | cmd:<template>")
@click.option("--split", is_flag=True, help="Write a train/val/test partition of the plans.")
@click.option("--dump-params", is_flag=True, help="Write the spatial parameter sets standalone.")
@click.option("--temporal/--no-temporal", "temporal_augmentation", default=None)
@click.option("--jobs", type=int, default=None)
@click.pass_context
def generate(ctx, catalog_path, graph_path, segments_path, num, seed, out, render, frames_dir,
             interpolator, split, dump_params, temporal_augmentation, jobs):
    """Generate artificial videos as edit decision lists."""
    config = _config(
        ctx, catalog_path=catalog_path, num_videos=num, master_seed=seed, interpolator=interpolator,
        temporal_augmentation=temporal_augmentation, jobs=jobs, output_dir=out,
    )
    catalog = _catalog(config)
    graph = _load_graph(config, graph_path)
    db = segment_db.load_manifest(segments_path)

    plans = assembler.generate_plans(graph, db, config.NUM_VIDEOS, config.MASTER_SEED, config, config.JOBS)
    out_dir = _out_dir(config, out)
    _write_outputs(plans, catalog, config, out_dir, render, frames_dir, dump_params, config.JOBS)

    if split:
        partition = assembler.partition_plans(plans, config.SPLIT_FRACTIONS, config.MASTER_SEED)
        write_json(out_dir / "split.json", partition)
        click.echo(", ".join(f"{name}: {len(ids)}" for name, ids in partition.items()))
    click.echo(f"generated {len(plans)} plans in {out_dir}")


@cli.command("split-baseline")
@click.argument("annotations", type=click.Path(exists=True, file_okay=False))
@catalog_option
@click.option("--k", type=int, default=None, help="Sub-videos per source video.")
@click.option("--seed", type=int, default=None, help="Master seed.")
@click.option("--exclude", multiple=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--render", is_flag=True)
@click.option("--frames", "frames_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--dump-params", is_flag=True)
@click.option("--jobs", type=int, default=None)
@click.pass_context
def split_baseline(ctx, annotations, catalog_path, k, seed, exclude, out, render, frames_dir, dump_params, jobs):
    """Baseline: every k-th frame of each source video becomes a sub-video."""
    config = _config(ctx, catalog_path=catalog_path, split_k=k, master_seed=seed, jobs=jobs, output_dir=out)
    catalog = _catalog(config)
    tracks = annotation.load_tracks(annotations, catalog, exclude, config.BINARIZE_THRESHOLD, config.JOBS)

    plans = []
    for index, track in enumerate(tracks):
        plans.extend(assembler.split_augment(
            track, config.SPLIT_K, assembler.derive_seed(config.MASTER_SEED, index), config
        ))
    out_dir = _out_dir(config, out)
    _write_outputs(plans, catalog, config, out_dir, render, frames_dir, dump_params, config.JOBS)
    click.echo(f"wrote {len(plans)} sub-video plans from {len(tracks)} videos to {out_dir}")


# ---------- Statistics ----------

def _quartile_line(name: str, values) -> str:
    q25, median, q75 = values
    return f"{name:<18}{q25:>10.1f}{median:>10.1f}{q75:>10.1f}"


def _orderings(tracks: list[LabelTrack]) -> set:
    pairs = set()
    for track in tracks:
        sequence = [r.class_id for r in annotation.active_runs(track)]
        pairs.update(zip(sequence, sequence[1:]))
    return pairs


def comparison_report(source: list[LabelTrack], generated: list[LabelTrack] | None, catalog) -> dict:
    corpora = {"source": source}
    if generated:
        corpora["generated"] = generated
    report: dict = {}
    for name, tracks in corpora.items():
        stats = segment_db.corpus_stats(tracks)
        report[name] = {
            **stats.to_dict(),
            "class_distribution": {
                catalog.name(c): p for c, p in segment_db.class_distribution(tracks, len(catalog)).items()
            },
            "orderings": len(_orderings(tracks)),
            "max_orderings_per_video": max(len(_orderings([t])) for t in tracks),
        }
    if generated:
        src = segment_db.class_distribution(source, len(catalog))
        gen = segment_db.class_distribution(generated, len(catalog))
        present = [c for c in src if src[c] > 0]
        rare = min(present, key=lambda c: (src[c], c))
        report["comparison"] = {
            "rare_class": catalog.name(rare),
            "rare_class_uplift": gen[rare] / src[rare],
            "uplift": {catalog.name(c): gen[c] / src[c] for c in present},
            "source_min_max_ratio": min(src[c] for c in present) / max(src[c] for c in present),
            "generated_min_max_ratio": min(gen[c] for c in present) / max(gen[c] for c in present),
            "label_change_median_increase": (
                report["generated"]["label_changes"][1] / report["source"]["label_changes"][1] - 1.0
                if report["source"]["label_changes"][1] else None
            ),
        }
    return report


def format_comparison(report: dict) -> str:
    names = [n for n in ("source", "generated") if n in report]
    lines = [f"{'':<18}{'25th':>10}{'median':>10}{'75th':>10}"]
    for name in names:
        lines.append(f"[{name}] {len(report[name]['videos'])} videos")
        for key, label in (("length", "video length"), ("sequence_length", "sequence length"),
                           ("label_changes", "label changes"), ("distinct_labels", "distinct labels")):
            lines.append(_quartile_line(label, report[name][key]))
        lines.append(f"{'orderings':<18}{report[name]['orderings']:>10} "
                     f"(max per video {report[name]['max_orderings_per_video']})")

    lines += ["", "Class distribution (%)", f"{'class':<36}" + "".join(f"{n:>12}" for n in names)]
    classes = list(report["source"]["class_distribution"])
    for c in classes:
        lines.append(f"{c:<36}" + "".join(f"{report[n]['class_distribution'][c]:>12.2f}" for n in names))

    if "comparison" in report:
        cmp = report["comparison"]
        lines += [
            "",
            f"rarest source class: {cmp['rare_class']} (x{cmp['rare_class_uplift']:.2f})",
            f"min/max class ratio: {cmp['source_min_max_ratio']:.4f} -> {cmp['generated_min_max_ratio']:.4f}",
        ]
        if cmp["label_change_median_increase"] is not None:
            lines.append(f"median label changes: {100 * cmp['label_change_median_increase']:+.1f} %")
    return "\n".join(lines) + "\n"


@cli.command()
@click.argument("annotations", type=click.Path(exists=True, file_okay=False))
@click.option("--generated", type=click.Path(exists=True, file_okay=False), help="Generated label directory.")
@catalog_option
@click.option("--exclude", multiple=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Also write the report as JSON.")
@click.pass_context
def stats(ctx, annotations, generated, catalog_path, exclude, out):
    """Corpus statistics and class distribution, source against generated."""
    config = _config(ctx, catalog_path=catalog_path)
    catalog = _catalog(config)
    source = annotation.load_tracks(annotations, catalog, exclude, config.BINARIZE_THRESHOLD, config.JOBS)
    gen = annotation.load_tracks(generated, catalog, jobs=config.JOBS) if generated else None

    report = comparison_report(source, gen, catalog)
    if out:
        write_json(out, report)
    click.echo(format_comparison(report), nl=False)


# ---------- Evaluation ----------

@cli.command()
@click.argument("truth_dir", type=click.Path(exists=True, file_okay=False))
@click.argument("pred_dir", type=click.Path(exists=True, file_okay=False))
@catalog_option
@click.option("--stride", type=int, default=None, help="Score every n-th frame.")
@click.option("--max-frames", type=int, default=None, help="Scored frames per video (0 = all).")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.pass_context
def evaluate(ctx, truth_dir, pred_dir, catalog_path, stride, max_frames, out):
    """Score per-frame predictions against ground truth."""
    config = _config(ctx, catalog_path=catalog_path, score_stride=stride, score_max_frames=max_frames)
    catalog = _catalog(config)
    truth = annotation.load_tracks(truth_dir, catalog, threshold=config.BINARIZE_THRESHOLD, jobs=config.JOBS)

    pairs = []
    for track in truth:
        path = Path(pred_dir) / f"{track.video_id}.csv"
        if not path.exists():
            raise DataError(f"missing prediction file {path}")
        pairs.append((track, annotation.read_label_track(path, catalog)))

    cm = metrics.confusion_for_tracks(pairs, config.SCORE_STRIDE, config.SCORE_MAX_FRAMES, len(catalog))
    names = {c.index: c.name for c in catalog.classes}
    report = metrics.evaluate(cm, names)
    text = metrics.format_report(report)

    out_dir = _out_dir(config, out)
    write_json(out_dir / "metrics.json", report.to_dict())
    atomic_write_text(out_dir / "metrics.txt", text)
    click.echo(text, nl=False)
    logger.info(f"Scored {cm.total} frames of {len(pairs)} videos (stride {config.SCORE_STRIDE})")
