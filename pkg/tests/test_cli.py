import json
import subprocess
import sys

from detens.cli import run_command
from detens.core import Annotation, BBox, ClassLabel, DatasetManifest, ImageRecord
from detens.ensemble import Detection, write_detections
from detens.ingest import read_manifest, write_manifest


def manifest_of(n, prefix, name):
    recs = [ImageRecord(f"{prefix}_{i:06d}", 300, 200, [Annotation(BBox(10, 10, 90, 120), ClassLabel.voc("cat"))])
            for i in range(n)]
    return DatasetManifest(name, recs)


def test_merge_dataset_sizes(tmp_path):
    a, b, out = tmp_path / "voc2012.jsonl", tmp_path / "voc2007.jsonl", tmp_path / "out.jsonl"
    write_manifest(manifest_of(5717, "2012", "voc2012"), a)
    write_manifest(manifest_of(5011, "2007", "voc2007"), b)
    assert run_command(["merge", str(a), str(b), "-o", str(out)]) == 0
    assert len(read_manifest(out)) == 10_728


def test_eval_perfect_detections(tmp_path, capsys):
    m = manifest_of(4, "img", "gt")
    gt, dets = tmp_path / "gt.jsonl", tmp_path / "d.jsonl"
    write_manifest(m, gt)
    write_detections([Detection(r.image_id, "cat", BBox(10, 10, 90, 120), 1.0) for r in m.records], dets)
    assert run_command(["eval", "--dets", str(dets), "--gt", str(gt), "-o", str(tmp_path / "rep")]) == 0
    row = capsys.readouterr().out.splitlines()[2].split()
    assert row[-1] == "100.0"
    report = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert report[0]["mAP"] == 1.0
    assert (tmp_path / "rep" / "pr_cat.csv").exists()


def test_missing_feature_file(tmp_path, capsys):
    m = tmp_path / "m.jsonl"
    p = tmp_path / "p.jsonl"
    write_manifest(manifest_of(1, "x", "m"), m)
    p.write_text('{"image_id": "x_000000", "boxes": [[10, 10, 90, 120]]}\n')
    missing = tmp_path / "nowhere" / "feats.defv"
    code = run_command(["train-svm", "--manifest", str(m), "--proposals", str(p), "--features", str(missing),
                        "--model-name", "GoogleNet", "--feature-dim", "1024", "-o", str(tmp_path / "models")])
    assert code == 1
    err = capsys.readouterr().err
    assert "detens train-svm: error:" in err and str(missing) in err


def test_usage_errors(capsys):
    assert run_command(["frobnicate"]) == 2
    assert run_command(["merge", "a.jsonl"]) == 2
    assert run_command(["eval", "--bogus-flag", "1"]) == 2
    assert run_command([]) == 2


def test_pipeline_error_is_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    assert run_command(["map-classes", str(bad), "-o", str(tmp_path / "o.jsonl")]) == 1
    assert "detens map-classes: error:" in capsys.readouterr().err


def test_config_echo_reproduces_run(tmp_path):
    echo = tmp_path / "echo.json"
    assert run_command(["--seed", "7", "--echo-config", str(echo), "gen-synthetic", "-o", str(tmp_path / "a"),
                        "--n-images", "6", "--noise", "0.2", "--classes", "dog,cat"]) == 0
    cfg = json.loads(echo.read_text())
    assert cfg["command"] == "gen-synthetic" and cfg["args"]["seed"] == 7
    cfg["args"]["output"] = str(tmp_path / "b")
    replay = tmp_path / "replay.json"
    replay.write_text(json.dumps(cfg))
    assert run_command(["--config", str(replay)]) == 0
    for f in (tmp_path / "a").iterdir():
        assert (tmp_path / "b" / f.name).read_bytes() == f.read_bytes()


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "gen-synthetic", "n_images": 3, "output": str(tmp_path / "x")}))
    assert run_command(["--config", str(cfg), "gen-synthetic", "--n-images", "5"]) == 0
    assert len(read_manifest(tmp_path / "x" / "manifest.jsonl")) == 5


def test_conversions_and_idempotence(tmp_path, voc_xml, coco_json):
    (tmp_path / "voc").mkdir()
    (tmp_path / "voc" / "2008_000123.xml").write_bytes(voc_xml)
    (tmp_path / "coco.json").write_bytes(coco_json)
    steps = [
        ["convert-voc", str(tmp_path / "voc"), "-o", "{out}/voc.jsonl"],
        ["convert-coco", str(tmp_path / "coco.json"), "-o", "{out}/coco.jsonl"],
        ["filter-small", "{out}/coco.jsonl", "-o", "{out}/coco_f.jsonl"],
        ["map-classes", "{out}/coco_f.jsonl", "-o", "{out}/coco_m.jsonl"],
        ["merge", "{out}/voc.jsonl", "{out}/coco_m.jsonl", "-o", "{out}/all.jsonl"],
        ["--seed", "3", "sample-negatives", "{out}/all.jsonl", "-o", "{out}/all_neg.jsonl"],
    ]
    for out in ("r1", "r2"):
        (tmp_path / out).mkdir()
        for step in steps:
            assert run_command([s.format(out=tmp_path / out) for s in step]) == 0, step
    for f in (tmp_path / "r1").iterdir():
        assert (tmp_path / "r2" / f.name).read_bytes() == f.read_bytes()
    merged = read_manifest(tmp_path / "r1" / "all_neg.jsonl")
    assert len(merged) == 4
    coco = read_manifest(tmp_path / "r1" / "coco_f.jsonl")
    # the 12-pixel-wide crowd airplane falls under the 30-pixel filter
    assert sum(len(r.annotations) for r in coco.records) == 3


def test_end_to_end_cli(tmp_path, capsys):
    d = tmp_path / "syn"
    assert run_command(["gen-synthetic", "-o", str(d), "--n-images", "20", "--classes", "3"]) == 0
    members = []
    for m in ("synth0", "synth1"):
        common = ["--manifest", str(d / "manifest.jsonl"), "--proposals", str(d / "proposals.jsonl"),
                  "--features", str(d / f"features_{m}.defv"), "--model-name", m, "--feature-dim", "7",
                  "-o", str(tmp_path / "models")]
        assert run_command(["train-svm", *common, "--initial-per-image", "5"]) == 0
        assert run_command(["train-bbox", *common, "--ridge-lambda", "0.001"]) == 0
        members += ["--member", f"{m}:{d / f'features_{m}.defv'}:{tmp_path / 'models'}"]
    dets = tmp_path / "dets.jsonl"
    assert run_command(["ensemble", "--proposals", str(d / "proposals.jsonl"), *members,
                        "--manifest", str(d / "manifest.jsonl"), "-o", str(dets),
                        "--voc-dir", str(tmp_path / "voc")]) == 0
    assert run_command(["nms", "--dets", str(dets), "-o", str(tmp_path / "dets2.jsonl")]) == 0
    capsys.readouterr()
    assert run_command(["eval", "--dets", str(dets), "--gt", str(d / "manifest.jsonl"), "--name", "ens",
                        "-o", str(tmp_path / "rep")]) == 0
    assert capsys.readouterr().out.splitlines()[2].split()[-1] == "100.0"
    assert run_command(["report", "--result", f"two nets={tmp_path / 'rep' / 'report.json'}",
                        "-o", str(tmp_path / "table.txt")]) == 0
    assert "two nets" in (tmp_path / "table.txt").read_text()
    assert run_command(["score", "--models", str(tmp_path / "models"), "--model-name", "synth0",
                        "--features", str(d / "features_synth0.defv"), "--proposals", str(d / "proposals.jsonl"),
                        "-o", str(tmp_path / "scores.jsonl")]) == 0


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "detens.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("detens ")
