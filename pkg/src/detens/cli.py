"""``detens`` command-line interface.

Every pipeline stage is a subcommand. Options may also come from a JSON
config file (``--config``); flags given on the command line win. Each run
logs its full configuration as a ``config`` line that can be saved and fed
back through ``--config`` to repeat the run.

Exit status: 0 on success, 1 on pipeline errors, 2 on usage errors.
Verbosity follows the ``DETENS_LOG`` environment variable (e.g. ``DEBUG``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

from . import __version__
from .core import VOC_CLASSES, DatasetManifest, ModelSpec
from .ensemble import (
    NMS_THRESHOLD,
    SCORE_FLOOR,
    EnsembleMember,
    nms_all,
    read_detections,
    regress_scored,
    run_ensemble,
    score_proposals,
    scored_to_dict,
    voc_detection_lines,
    write_detections,
)
from .evaluation import evaluate, render_table, results_from_json, results_to_json, write_pr_curves
from .exceptions import DetensError
from .ingest import (
    add_sampled_negatives,
    drop_unlabelled_images,
    effective_sizes,
    filter_small_objects,
    load_feature_store,
    map_coco_labels,
    merge_manifests,
    parse_coco_json,
    parse_voc_xml,
    read_manifest,
    read_proposals,
    write_manifest,
)
from .io import atomic_write
from .learn import load_regressors, load_svms, save_regressor, save_svm
from .pipeline import train_class_regressors, train_class_svms
from .synthetic import SyntheticSpec, write_synthetic

log = logging.getLogger("detens")

_NOT_CONFIG = {"func", "config", "echo_config", "command"}


# --- subcommand implementations ------------------------------------------------

def _echo_manifest_stats(manifest, out):
    sizes = effective_sizes(manifest)
    log.info("wrote %s: %d images (%d with SVM ground truth)", out, sizes["images"],
             sizes["images_with_svm_ground_truth"])


def cmd_convert_voc(args):
    files = []
    for p in map(Path, args.inputs):
        files.extend(sorted(p.glob("*.xml")) if p.is_dir() else [p])
    if not files:
        raise DetensError("no VOC XML inputs given")
    records = []
    for f in files:
        try:
            records.append(parse_voc_xml(f.read_bytes(), args.source, args.split))
        except DetensError as exc:
            raise DetensError(f"{f}: {exc}") from None
    manifest = DatasetManifest(args.name or Path(args.output).stem, records)
    write_manifest(manifest, args.output)
    _echo_manifest_stats(manifest, args.output)


def cmd_convert_coco(args):
    manifest = parse_coco_json(Path(args.input).read_bytes(), name=Path(args.output).stem, split=args.split)
    write_manifest(manifest, args.output)
    _echo_manifest_stats(manifest, args.output)


def cmd_map_classes(args):
    manifest = map_coco_labels(read_manifest(args.input))
    if args.drop_empty:
        manifest = drop_unlabelled_images(manifest)
    write_manifest(manifest, args.output)
    _echo_manifest_stats(manifest, args.output)


def cmd_filter_small(args):
    sources = None if args.all_sources else ("coco2014",)
    manifest, removed = filter_small_objects(read_manifest(args.input), args.min_side, sources)
    if args.drop_empty:
        manifest = drop_unlabelled_images(manifest)
    write_manifest(manifest, args.output)
    log.info("removed %d small objects", removed)
    _echo_manifest_stats(manifest, args.output)


def cmd_sample_negatives(args):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        manifest, short = add_sampled_negatives(read_manifest(args.input), args.per_gt, args.seed, args.max_attempts)
    if short:
        log.warning("negative sampling fell short on %d images", short)
    write_manifest(manifest, args.output)


def cmd_merge(args):
    if not args.inputs:
        raise DetensError("merge needs at least one input manifest")
    merged = merge_manifests([read_manifest(p) for p in args.inputs], name=args.name)
    write_manifest(merged, args.output)
    _echo_manifest_stats(merged, args.output)


def _parse_classes(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return list(value)
    if str(value).isdigit():
        return int(value)
    return [c.strip() for c in str(value).split(",") if c.strip()]


def cmd_gen_synthetic(args):
    classes = _parse_classes(args.classes)
    spec = SyntheticSpec(
        n_images=args.n_images,
        image_size=(args.width, args.height),
        classes=classes if classes is not None else 5,
        boxes_per_image=(args.boxes_min, args.boxes_max),
        noise=args.noise,
        seed=args.seed,
        n_models=args.n_models,
    )
    paths = write_synthetic(spec, args.output)
    log.info("wrote %s, %s and %d feature files (dim %d)", paths["manifest"], paths["proposals"],
             len(paths["features"]), spec.feature_dim)


def _training_inputs(args):
    manifest = read_manifest(args.manifest)
    proposals = read_proposals(args.proposals)
    store = load_feature_store(args.features, ModelSpec(args.model_name, args.feature_dim))
    store.validate_against(proposals)
    return manifest, proposals, store


def cmd_train_svm(args):
    manifest, proposals, store = _training_inputs(args)
    models = train_class_svms(
        manifest, proposals, store, _parse_classes(args.classes), args.C, args.rounds, args.negative_iou,
        args.cache_cap, args.initial_per_image, args.seed, args.jobs,
    )
    for m in models.values():
        save_svm(m, args.output, args.model_name)
    log.info("saved %d SVMs to %s", len(models), args.output)


def cmd_train_bbox(args):
    manifest, proposals, store = _training_inputs(args)
    regs = train_class_regressors(manifest, proposals, store, _parse_classes(args.classes), args.ridge_lambda,
                                  args.match_iou, args.jobs)
    for r in regs.values():
        save_regressor(r, args.output, args.model_name)
    log.info("saved %d box regressors to %s", len(regs), args.output)


def _load_member(spec_str, bbox_reg=True):
    try:
        name, features, models_dir = spec_str.split(":", 2)
    except ValueError:
        raise DetensError(f"member must be NAME:FEATURES:MODEL_DIR, got {spec_str!r}") from None
    svms = load_svms(models_dir, name)
    if not svms:
        raise DetensError(f"no SVM models for {name!r} in {models_dir}")
    dim = next(iter(svms.values())).feature_dim
    store = load_feature_store(features, ModelSpec(name, dim))
    regs = load_regressors(models_dir, name) if bbox_reg else {}
    return EnsembleMember(svms, store, regs, name)


def cmd_score(args):
    member = _load_member(f"{args.model_name}:{args.features}:{args.models}", bbox_reg=args.bbox_reg)
    proposals = read_proposals(args.proposals)
    scored = score_proposals(member.svms, member.store, proposals, member.name)
    if member.regressors:
        scored = regress_scored(scored, member.regressors, member.store)
    atomic_write(args.output, "".join(json.dumps(scored_to_dict(sb)) + "\n" for sb in scored))


def cmd_ensemble(args):
    if not args.member:
        raise DetensError("ensemble needs at least one --member")
    proposals = read_proposals(args.proposals)
    members = [_load_member(m, args.bbox_reg) for m in args.member]
    for m in members:
        m.store.validate_against(proposals)
    sizes = None
    if args.manifest:
        sizes = {r.image_id: (r.width, r.height) for r in read_manifest(args.manifest).records}
    dets = run_ensemble(proposals, members, args.nms_threshold, args.score_floor, sizes, args.order)
    write_detections(dets, args.output)
    if args.voc_dir:
        for c in VOC_CLASSES:
            atomic_write(Path(args.voc_dir) / f"comp4_det_{c.replace(' ', '_')}.txt", voc_detection_lines(dets, c))
    log.info("wrote %d detections to %s", len(dets), args.output)


def cmd_nms(args):
    dets = nms_all(read_detections(args.dets), args.threshold)
    write_detections(dets, args.output)


def cmd_eval(args):
    result = evaluate(read_detections(args.dets), read_manifest(args.gt), args.iou, args.ap_method)
    name = args.name or Path(args.dets).stem
    table = render_table([(name, result)])
    sys.stdout.write(table)
    if result.excluded_classes:
        log.info("classes without ground truth (excluded from mAP): %s", ", ".join(result.excluded_classes))
    if args.output:
        out = Path(args.output)
        atomic_write(out / "report.txt", table)
        atomic_write(out / "report.json", results_to_json([(name, result)]))
        write_pr_curves(result, out)


def cmd_report(args):
    results = []
    for item in args.result or []:
        path = item.split("=", 1)[-1]
        loaded = results_from_json(Path(path).read_text(encoding="utf-8"))
        if "=" in item:
            loaded = [(item.split("=", 1)[0], r) for _, r in loaded]
        results.extend(loaded)
    if not results:
        raise DetensError("report needs at least one --result")
    table = render_table(results)
    sys.stdout.write(table)
    if args.output:
        atomic_write(args.output, table)
        atomic_write(Path(args.output).with_suffix(".json"), results_to_json(results))


# --- argument parsing ----------------------------------------------------------

def _add_model_inputs(p):
    p.add_argument("--manifest", help="training manifest (JSON lines)")
    p.add_argument("--proposals", help="proposals file (JSON lines)")
    p.add_argument("--features", help="feature file for this network")
    p.add_argument("--model-name", help="network name stored in model files")
    p.add_argument("--feature-dim", type=int, help="expected feature dimension")
    p.add_argument("--classes", help="comma-separated VOC classes (default: all present)")
    p.add_argument("-o", "--output", help="model directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="detens", description="Ensemble object-detection pipeline toolkit.")
    parser.add_argument("--version", action="version", version=f"detens {__version__}")
    parser.add_argument("--config", help="JSON config file (flags win on conflict)")
    parser.add_argument("--echo-config", help="also write the config echo to this file")
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    parser.add_argument("--jobs", type=int, default=1, help="max worker threads")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    cmds = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        cmds[name] = p
        return p

    p = add("convert-voc", cmd_convert_voc, "VOC XML files or directories -> manifest")
    p.add_argument("inputs", nargs="*")
    p.add_argument("-o", "--output")
    p.add_argument("--source", default="voc2012", choices=["voc2007", "voc2012"])
    p.add_argument("--split", default="train")
    p.add_argument("--name")

    p = add("convert-coco", cmd_convert_coco, "COCO instances JSON -> manifest")
    p.add_argument("input", nargs="?")
    p.add_argument("-o", "--output")
    p.add_argument("--split", default="trainval")

    p = add("map-classes", cmd_map_classes, "map COCO labels onto the 20 VOC classes")
    p.add_argument("input", nargs="?")
    p.add_argument("-o", "--output")
    p.add_argument("--drop-empty", action="store_true", help="drop images left without VOC objects")

    p = add("filter-small", cmd_filter_small, "remove small COCO ground-truth boxes")
    p.add_argument("input", nargs="?")
    p.add_argument("-o", "--output")
    p.add_argument("--min-side", type=float, default=30)
    p.add_argument("--all-sources", action="store_true", help="filter VOC boxes too")
    p.add_argument("--drop-empty", action="store_true")

    p = add("sample-negatives", cmd_sample_negatives, "add background boxes with no GT overlap")
    p.add_argument("input", nargs="?")
    p.add_argument("-o", "--output")
    p.add_argument("--per-gt", type=int, default=3)
    p.add_argument("--max-attempts", type=int, default=100)

    p = add("merge", cmd_merge, "concatenate manifests")
    p.add_argument("inputs", nargs="*")
    p.add_argument("-o", "--output")
    p.add_argument("--name")

    p = add("gen-synthetic", cmd_gen_synthetic, "write a synthetic manifest, proposals and oracle features")
    p.add_argument("-o", "--output", help="output directory")
    p.add_argument("--n-images", type=int, default=50)
    p.add_argument("--classes", default="5", help="class count or comma-separated names")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--n-models", type=int, default=2)
    p.add_argument("--width", type=int, default=500)
    p.add_argument("--height", type=int, default=375)
    p.add_argument("--boxes-min", type=int, default=1)
    p.add_argument("--boxes-max", type=int, default=3)

    p = add("train-svm", cmd_train_svm, "train per-class SVMs with hard-negative mining")
    _add_model_inputs(p)
    p.add_argument("--C", type=float, default=1e-3)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--negative-iou", type=float, default=0.3)
    p.add_argument("--cache-cap", type=int, default=50_000)
    p.add_argument("--initial-per-image", type=int, default=None,
                   help="random negatives per image in the first cache (default: all)")

    p = add("train-bbox", cmd_train_bbox, "train per-class box regressors")
    _add_model_inputs(p)
    p.add_argument("--ridge-lambda", type=float, default=1000.0)
    p.add_argument("--match-iou", type=float, default=0.6)

    p = add("score", cmd_score, "score proposals with one network's SVMs")
    p.add_argument("--models", help="model directory")
    p.add_argument("--model-name")
    p.add_argument("--features")
    p.add_argument("--proposals")
    p.add_argument("--no-bbox-reg", dest="bbox_reg", action="store_false")
    p.add_argument("-o", "--output")

    p = add("ensemble", cmd_ensemble, "average networks, regress, NMS -> detections")
    p.add_argument("--proposals")
    p.add_argument("--member", action="append", help="NAME:FEATURES:MODEL_DIR (repeat per network)")
    p.add_argument("--manifest", help="manifest for image sizes (boxes are clipped)")
    p.add_argument("--nms-threshold", type=float, default=NMS_THRESHOLD)
    p.add_argument("--score-floor", type=float, default=SCORE_FLOOR)
    p.add_argument("--order", choices=["average_first", "nms_first"], default="average_first")
    p.add_argument("--no-bbox-reg", dest="bbox_reg", action="store_false")
    p.add_argument("--voc-dir", help="also write VOC per-class text files here")
    p.add_argument("-o", "--output")

    p = add("nms", cmd_nms, "greedy NMS per image and class on a detections file")
    p.add_argument("--dets")
    p.add_argument("--threshold", type=float, default=NMS_THRESHOLD)
    p.add_argument("-o", "--output")

    p = add("eval", cmd_eval, "PASCAL-style AP/mAP of detections against a manifest")
    p.add_argument("--dets")
    p.add_argument("--gt")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--ap-method", choices=["area", "11point"], default="area")
    p.add_argument("--name")
    p.add_argument("-o", "--output", help="report directory")

    p = add("report", cmd_report, "render eval JSON results as a table")
    p.add_argument("--result", action="append", help="[NAME=]PATH to an eval report.json")
    p.add_argument("-o", "--output")

    return parser, cmds


# required options per command; checked after config defaults are merged
_REQUIRED = {
    "convert-voc": ["output"],
    "convert-coco": ["input", "output"],
    "map-classes": ["input", "output"],
    "filter-small": ["input", "output"],
    "sample-negatives": ["input", "output"],
    "merge": ["output"],
    "gen-synthetic": ["output"],
    "train-svm": ["manifest", "proposals", "features", "model_name", "feature_dim", "output"],
    "train-bbox": ["manifest", "proposals", "features", "model_name", "feature_dim", "output"],
    "score": ["models", "model_name", "features", "proposals", "output"],
    "ensemble": ["proposals", "output"],
    "nms": ["dets", "output"],
    "eval": ["dets", "gt"],
    "report": [],
}


def config_echo(args) -> dict:
    values = {}
    for k, v in sorted(vars(args).items()):
        if k in _NOT_CONFIG:
            continue
        values[k] = str(v) if isinstance(v, Path) else v
    return {"command": args.command, "args": values}


def _load_config(path):
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if "args" in cfg:
        return cfg.get("command"), dict(cfg["args"])
    return cfg.pop("command", None), cfg


def _setup_logging():
    level = os.environ.get("DETENS_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def parse_args(argv):
    parser, cmds = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            command, values = _load_config(known.config)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {known.config}: {exc}")
        if command and not any(a in cmds for a in argv):
            argv = list(argv) + [command]
        target = command or next((a for a in argv if a in cmds), None)
        if target is None:
            parser.error("config file names no command and none was given")
        global_keys = {"seed", "jobs"}
        parser.set_defaults(**{k: v for k, v in values.items() if k in global_keys})
        cmds[target].set_defaults(**{k: v for k, v in values.items() if k not in global_keys})
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        parser.exit(2, "detens: error: a command is required\n")
    missing = [k for k in _REQUIRED[args.command] if getattr(args, k, None) in (None, "")]
    if missing:
        cmds[args.command].error("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


def run_command(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _setup_logging()
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    echo = config_echo(args)
    log.info("config %s", json.dumps(echo, sort_keys=True))
    if args.echo_config:
        atomic_write(args.echo_config, json.dumps(echo, indent=1, sort_keys=True) + "\n")
    try:
        args.func(args)
    except (DetensError, OSError, ValueError, KeyError) as exc:
        msg = str(exc)
        if isinstance(exc, FileNotFoundError) and exc.filename:
            msg = f"file not found: {exc.filename}"
        print(f"detens {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
