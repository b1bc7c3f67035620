import argparse
import json
import re
from pathlib import Path

import pytest

from sweetdeep import cli

SMALL = """
seed: 1
generator:
  cohort: {n_nd: 15, n_t2d: 12, n_pd: 6, instances_mean: 8, instances_std: 2}
model: {epochs: 4, batch_size: 64}
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL)
    return str(path)


def run(*argv):
    return cli.main([str(a) for a in argv])


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def subparsers():
    parser = cli.build_parser()
    (action,) = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    return action.choices


def test_every_subcommand_exists():
    names = set(subparsers())
    assert {"gen-ecg", "gen-cohort", "ecg-qc", "extract", "folds", "train", "evaluate", "screen", "experiment", "report"} <= names


@pytest.mark.parametrize("name", sorted(subparsers()))
def test_help_documents_every_flag(name, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main([name, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    flags_in_help = set(re.findall(r"(?<![\w-])--?[a-z][\w-]*", text))
    for action in subparsers()[name]._actions:
        assert action.help not in (None, "", argparse.SUPPRESS), action.dest
        for flag in action.option_strings:
            assert flag in flags_in_help, flag
        if not action.option_strings and action.dest != "help":
            assert action.dest in text


def test_missing_input_is_exit_3(tmp_path, capsys):
    code = run("folds", "--cohort", tmp_path / "nope.jsonl", "--out", tmp_path / "f.json")
    err = json.loads(capsys.readouterr().err)
    assert code == 3 and err["code"] == 3 and err["error"] == "FileNotFoundError"


def test_config_error_is_exit_5(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: {epochs: -1}\n")
    code = run("gen-cohort", "--config", bad, "--out", tmp_path / "c.jsonl")
    assert code == 5 and json.loads(capsys.readouterr().err)["error"] == "ConfigError"


def test_schema_error_is_exit_4(tmp_path, capsys):
    bad = tmp_path / "c.jsonl"
    bad.write_text('{"patient_id": 1}\n')
    code = run("folds", "--cohort", bad, "--out", tmp_path / "f.json")
    assert code == 4 and json.loads(capsys.readouterr().err)["error"] == "SchemaError"


def test_corrupt_model_is_exit_11(tmp_path, small_cfg, capsys):
    run("gen-cohort", "--config", small_cfg, "--out", tmp_path / "c.jsonl")
    run("folds", "--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--out", tmp_path / "f.json")
    models = tmp_path / "m"
    models.mkdir()
    for k in range(3):
        (models / f"fold_{k}.json").write_text("{}")
    code = run("evaluate", "--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--folds", tmp_path / "f.json",
               "--models", models, "--out-dir", tmp_path / "e")  # fmt: skip
    assert code == 11 and json.loads(capsys.readouterr().err)["error"] == "ModelLoadError"


def test_unknown_variant_is_config_error(tmp_path, small_cfg, capsys):
    run("gen-cohort", "--config", small_cfg, "--out", tmp_path / "c.jsonl")
    code = run("train", "--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--variant", "giant",
               "--out-dir", tmp_path / "m")  # fmt: skip
    assert code == 5


def pipeline(root: Path, cfg: str | None, extra=()):
    c = ["--config", cfg] if cfg else []
    assert run("gen-cohort", *c, *extra, "--out", root / "c.jsonl") == 0
    assert run("folds", *c, *extra, "--cohort", root / "c.jsonl", "--out", root / "f.json") == 0
    assert run("train", *c, *extra, "--cohort", root / "c.jsonl", "--folds", root / "f.json", "--out-dir", root / "m") == 0
    common = ["--cohort", root / "c.jsonl", "--folds", root / "f.json", "--models", root / "m"]
    assert run("evaluate", *c, *extra, *common, "--out-dir", root / "e", "--svg") == 0
    assert run("screen", *c, *extra, *common, "--out-dir", root / "s", "--svg") == 0


def test_default_smoke_path(tmp_path):
    pipeline(tmp_path, None)
    doc = json.loads((tmp_path / "e" / "metrics.json").read_text())
    for level in ("instance", "patient"):
        for key in ("accuracy", "macro_f1", "sensitivity", "specificity", "ece"):
            assert doc[level][key] is not None
    assert doc["patient"]["accuracy"] >= 90.0
    header = (tmp_path / "s" / "verdicts.csv").read_text().splitlines()[0]
    assert header == "patient_id,n_instances,p_t2d,verdict"


def test_pipeline_is_idempotent(tmp_path, small_cfg):
    pipeline(tmp_path / "a", small_cfg)
    pipeline(tmp_path / "b", small_cfg)
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a.keys() == b.keys() and len(a) > 15
    assert a == b
    run("report", tmp_path / "a" / "e" / "metrics.json", "--out-dir", tmp_path / "ra")
    run("report", tmp_path / "a" / "e" / "metrics.json", "--out-dir", tmp_path / "rb")
    assert tree_bytes(tmp_path / "ra") == tree_bytes(tmp_path / "rb")


def test_seed_flag_changes_streams(tmp_path, small_cfg):
    for name, seed in (("a", 3), ("b", 3), ("c", 4)):
        run("gen-cohort", "--config", small_cfg, "--seed", seed, "--out", tmp_path / f"{name}.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "c.jsonl").read_bytes()


def test_threshold_monotone_via_cli(tmp_path, small_cfg):
    pipeline(tmp_path, small_cfg)
    common = ["--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--folds", tmp_path / "f.json",
              "--models", tmp_path / "m"]  # fmt: skip
    run("evaluate", *common, "--threshold", 0.4, "--out-dir", tmp_path / "lo")
    run("evaluate", *common, "--threshold", 0.6, "--out-dir", tmp_path / "hi")
    lo = json.loads((tmp_path / "lo" / "metrics.json").read_text())["instance"]
    hi = json.loads((tmp_path / "hi" / "metrics.json").read_text())["instance"]
    assert hi["specificity"] >= lo["specificity"]
    assert hi["sensitivity"] <= lo["sensitivity"]


def test_experiment_reports_input_width(tmp_path, small_cfg, capsys):
    pipeline(tmp_path, small_cfg)
    out = tmp_path / "x.json"
    assert run("experiment", "--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--folds", tmp_path / "f.json",
               "--variant", "no-time", "--out", out) == 0  # fmt: skip
    (row,) = json.loads(out.read_text())["variants"]
    assert row["input_width"] == 27
    capsys.readouterr()
    assert run("report", out, tmp_path / "s" / "abstention.json", tmp_path / "e" / "metrics.json") == 0
    text = capsys.readouterr().out
    assert "no-time" in text and " 27 " in text and "Coverage" in text


def test_screen_with_single_model(tmp_path, small_cfg):
    pipeline(tmp_path, small_cfg)
    assert run("train", "--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--full", "--out-dir", tmp_path / "full") == 0
    assert (tmp_path / "full" / "full_trace.csv").read_text().startswith("epoch,loss,accuracy\n")
    assert run("screen", "--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--model", tmp_path / "full" / "full.json",
               "--no-abstain", "--out-dir", tmp_path / "fs") == 0  # fmt: skip
    rows = (tmp_path / "fs" / "verdicts.csv").read_text().splitlines()[1:]
    assert len(rows) == 33
    assert all(r.split(",")[3] in ("ND", "T2D") for r in rows)
    pd = (tmp_path / "fs" / "distribution_PD.csv").read_text().splitlines()
    assert sum(int(r.split(",")[2]) for r in pd[1:]) == 6


def test_ecg_chain(tmp_path, small_cfg):
    assert run("gen-ecg", "--config", small_cfg, "--out-dir", tmp_path / "ecg", "--count", 2, "--duration", 30,
               "--spike-rate", 4) == 0  # fmt: skip
    assert (tmp_path / "ecg" / "rec_000.truth.json").exists()
    recs = sorted((tmp_path / "ecg").glob("rec_???.csv"))
    for name in ("a", "b"):
        assert run("ecg-qc", *recs, "--out-beats", tmp_path / f"beats_{name}.json",
                   "--out-table", tmp_path / f"qc_{name}.csv") == 0  # fmt: skip
    assert (tmp_path / "beats_a.json").read_bytes() == (tmp_path / "beats_b.json").read_bytes()
    table = (tmp_path / "qc_a.csv").read_text().splitlines()
    assert table[0] == "recording_id,beats_total,beats_accepted,survival_fraction,instance_accepted"
    assert len(table) == 3
    lines = [
        {"recording_id": "rec_000", "patient_id": "p1", "label": "T2D", "ppg_bp": [1] * 10, "bia": [2] * 10,
         "age": 50, "family_history": 1, "timestamp_s": 1704103200},
        {"recording_id": "rec_001", "patient_id": "p1", "label": 1, "ppg_bp": [1] * 10, "bia": [2] * 10,
         "age": 50, "family_history": 1},
    ]  # fmt: skip
    prov = tmp_path / "prov.jsonl"
    prov.write_text("".join(json.dumps(x) + "\n" for x in lines))
    assert run("extract", "--beats", tmp_path / "beats_a.json", "--provided", prov, "--out", tmp_path / "i.jsonl") == 0
    out = [json.loads(x) for x in (tmp_path / "i.jsonl").read_text().splitlines()]
    assert len(out) == 2 and all(len(r["features"]) == 35 for r in out)
    assert out[0]["timestamp_s"] == 1704103200 and out[0]["features"][25] == 1.0
    qtc = out[0]["features"][0]
    assert 0.30 < qtc < 0.45


def test_extract_unknown_recording(tmp_path, capsys):
    (tmp_path / "b.json").write_text('{"recordings": {}}')
    (tmp_path / "p.jsonl").write_text(json.dumps({"recording_id": "x", "patient_id": "p", "label": 0,
                                                   "ppg_bp": [0] * 10, "bia": [0] * 10, "age": 30,
                                                   "family_history": 0}) + "\n")  # fmt: skip
    assert run("extract", "--beats", tmp_path / "b.json", "--provided", tmp_path / "p.jsonl", "--out", tmp_path / "o") == 4


def test_output_dir_from_environment(tmp_path, small_cfg, monkeypatch):
    run("gen-cohort", "--config", small_cfg, "--out", tmp_path / "c.jsonl")
    run("folds", "--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--out", tmp_path / "f.json")
    run("train", "--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--folds", tmp_path / "f.json", "--out-dir", tmp_path / "m")
    monkeypatch.setenv("SWEETDEEP_OUTPUT_DIR", str(tmp_path / "envout"))
    assert run("evaluate", "--config", small_cfg, "--cohort", tmp_path / "c.jsonl", "--folds", tmp_path / "f.json",
               "--models", tmp_path / "m") == 0  # fmt: skip
    assert (tmp_path / "envout" / "metrics.json").exists()


def test_reproduce_small(tmp_path, small_cfg, capsys):
    assert run("reproduce", "--config", small_cfg, "--out-dir", tmp_path / "r", "--variant", "no-time", "--no-svg") == 0
    text = capsys.readouterr().out
    assert "baseline" in text and "no-time" in text
    for rel in ("cohort.jsonl", "folds.json", "experiment.json", "models/fold_0.json", "evaluate/metrics.json",
                "screen/verdicts.csv", "screen/abstention.json", "report/experiment.txt"):  # fmt: skip
        assert (tmp_path / "r" / rel).exists(), rel
