"""Command-line interface: one subcommand per pipeline stage, files in and out.

Failures print ``{"error": ..., "code": ..., "message": ...}`` on stderr and
exit with the error family's code (see :mod:`sweetdeep.errors`).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ecgproc, experiment, features as F, screen
from .config import PipelineConfig, dump_config, load_config
from .dataset import LABEL_NAMES, ND, PD, T2D, FoldSplit, InstanceRecord, InstanceTable, make_folds
from .dataset import read_jsonl, validate_records, write_jsonl
from .errors import MISSING_FILE_CODE, ConfigError, FeatureUnavailable, SchemaError, SweetDeepError
from .evaluation import MetricsReport
from .model import EpochStats, ModelParams, load_params, predict_t2d, save_params
from .pipeline import CvResult, fit_fold, predict_folds
from .seeds import derive_seed
from .signalgen import generate_cohort, synthesize_ecg

LABEL_CODES = {name: code for code, name in LABEL_NAMES.items()}


# --------------------------------------------------------------------------
# small I/O helpers


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def _load_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON: {exc}") from exc


def _require(value, fallback, flag: str) -> str:
    v = value if value is not None else fallback
    if v is None:
        raise ConfigError(f"{flag} is required (or set it under [paths] in the config)")
    return v


def _out_dir(args, cfg: PipelineConfig) -> Path:
    d = Path(args.out_dir if args.out_dir is not None else cfg.paths.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_table(path: str | Path) -> InstanceTable:
    records = read_jsonl(path)
    validate_records(records)
    return InstanceTable.from_records(records)


def _trace_csv(history: Sequence[EpochStats]) -> str:
    return _csv_text(["epoch", "loss", "accuracy"], ((h.epoch, repr(h.loss), repr(h.accuracy)) for h in history))


def _model_path(models_dir: Path, k: int) -> Path:
    return models_dir / f"fold_{k}.json"


def _load_fold_models(models_dir: str | Path, folds: FoldSplit) -> list[ModelParams]:
    d = Path(models_dir)
    return [load_params(_model_path(d, k)) for k in range(len(folds.folds))]


# --------------------------------------------------------------------------
# stage implementations (shared by the subcommands and `reproduce`)


def write_metrics(cv: CvResult, threshold: float, out: Path, svg: bool) -> dict:
    inst = cv.instance_report(threshold)
    pat = cv.patient_report(threshold)
    payload = {"instance": inst.to_dict(), "patient": pat.to_dict()}
    _write_text(out / "metrics.json", _dump_json(payload))
    _write_text(out / "calibration_instance.csv", inst.calibration.to_csv())
    _write_text(out / "calibration_patient.csv", pat.calibration.to_csv())
    rows = sorted(zip(cv.patient_ids, cv.fold, cv.labels, cv.probs), key=lambda r: (r[0], r[1]))
    _write_text(
        out / "predictions.csv",
        _csv_text(["patient_id", "fold", "label", "p_t2d"], ((p, int(k), int(y), repr(float(q))) for p, k, y, q in rows)),
    )
    if svg:
        from .plots import reliability_svg

        reliability_svg({"instance": inst.calibration, "patient": pat.calibration}, out / "reliability.svg")
    return payload


def _verdict_csv(verdicts: Sequence[screen.PatientVerdict]) -> str:
    return _csv_text(
        ["patient_id", "n_instances", "p_t2d", "verdict"],
        ((v.patient_id, v.n_instances, repr(v.p_t2d), v.verdict) for v in verdicts),
    )


def _ensemble_probs(models: Sequence[ModelParams], X: np.ndarray) -> np.ndarray:
    return np.mean([predict_t2d(m, X) for m in models], axis=0) if len(X) else np.zeros(0)


def write_screening(
    cfg: PipelineConfig,
    table: InstanceTable,
    out: Path,
    svg: bool,
    cv: CvResult | None = None,
    models: Sequence[ModelParams] = (),
    threshold: float = 0.5,
    abstain: bool = True,
    half_width: float = screen.HALF_WIDTH,
    tune: bool = False,
) -> dict:
    """Verdicts, abstention report and per-cohort probability histograms.

    Labelled ND/T2D patients are scored out-of-fold when ``cv`` is given and
    by the ``models`` ensemble mean otherwise. Other patients (PD) are
    always scored by the ensemble.
    """
    if cv is not None:
        ids, probs, labels = cv.patient_ids, cv.probs, cv.labels
    else:
        lab = table.with_labels([ND, T2D])
        ids, probs, labels = lab.patient_ids, _ensemble_probs(models, lab.X), lab.y
    pids, p, _, _ = screen.patient_probabilities(ids, probs, labels)
    if tune:
        half_width = screen.tune_half_width(p, cfg.abstention.max_abstain)
    verdicts = screen.screen_patients(ids, probs, labels, threshold, abstain, half_width)
    others = table.subset(~np.isin(table.y, [ND, T2D]))
    other_probs = _ensemble_probs(models, others.X)
    other_verdicts = screen.screen_patients(others.patient_ids, other_probs, None, threshold, abstain, half_width)
    _write_text(out / "verdicts.csv", _verdict_csv(sorted(verdicts + other_verdicts, key=lambda v: v.patient_id)))
    rep = screen.abstention_report(verdicts, half_width)
    report = {"abstention": rep.to_dict(), "threshold": threshold, "tuned": bool(tune)}
    _write_text(out / "abstention.json", _dump_json(report))

    dists = {}
    by_label = {ND: [], T2D: [], PD: []}
    for v in verdicts:
        by_label[v.label].append(v.p_t2d)
    for v in other_verdicts:
        by_label[PD].append(v.p_t2d)
    for code, values in by_label.items():
        d = screen.distribution(LABEL_NAMES[code], values)
        dists[LABEL_NAMES[code]] = d
        _write_text(out / f"distribution_{LABEL_NAMES[code]}.csv", d.to_csv())
    if svg:
        from .plots import histogram_svg

        histogram_svg(dists, out / "distribution.svg")
    report["distribution_mode_bins"] = {k: list(d.mode_bin()) if d.probs.size else None for k, d in dists.items()}
    return report


def run_variants(cfg: PipelineConfig, table: InstanceTable, folds: FoldSplit, names: Sequence[str]):
    return experiment.run_experiment(
        table, folds, names, cfg.model, cfg.smote_k, cfg.stage_seed("train")
    )


# --------------------------------------------------------------------------
# report rendering

_METRIC_COLS = [("accuracy", "Acc"), ("macro_f1", "F1"), ("sensitivity", "Sens"), ("specificity", "Spec"), ("ece", "ECE")]


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.1f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda r: "  ".join(str(x).ljust(w) if i == 0 else str(x).rjust(w) for i, (x, w) in enumerate(zip(r, widths)))  # noqa: E731
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(header), sep] + [line(r) for r in rows]) + "\n"


def render_report(doc: dict) -> str:
    """Aligned text tables for a metrics, experiment or abstention JSON document."""
    if "variants" in doc:
        head = ["Variant", "Category", "Width", "Params"] + [h for _, h in _METRIC_COLS]
        rows = [
            [v["variant"], v["category"], str(v["input_width"]), str(v["n_params"])]
            + [_fmt(v["patient"][k]) for k, _ in _METRIC_COLS]
            for v in doc["variants"]
        ]
        return "Patient-level cross-validation by variant (%)\n" + _table(head, rows)
    if "instance" in doc and "patient" in doc:
        head = ["Level"] + [h for _, h in _METRIC_COLS]
        rows = [[lvl] + [_fmt(doc[lvl][k]) for k, _ in _METRIC_COLS] for lvl in ("instance", "patient")]
        return f"Metrics at threshold {doc['patient']['threshold']} (%)\n" + _table(head, rows)
    if "abstention" in doc:
        a = doc["abstention"]
        head = ["Coverage"] + [h for _, h in _METRIC_COLS]
        m = a["metrics"] or {}
        rows = [[_fmt(a["coverage"])] + [_fmt(m.get(k)) for k, _ in _METRIC_COLS]]
        return f"Retained patients, half-width {a['half_width']} (%)\n" + _table(head, rows)
    raise SchemaError("unrecognised report document: expected metrics, experiment or abstention JSON")


def _report_svgs(doc: dict, stem: str, out: Path) -> list[Path]:
    from .evaluation import CalibrationTable
    from .plots import metric_bars_svg, reliability_svg

    written = []
    if "variants" in doc:
        p = out / f"{stem}_accuracy.svg"
        metric_bars_svg(doc["variants"], p)
        written.append(p)
    elif "instance" in doc and "patient" in doc:
        tables = {}
        for lvl in ("instance", "patient"):
            rows = doc[lvl]["calibration"]
            nan = float("nan")
            tables[lvl] = CalibrationTable(
                np.array([r["bin_lo"] for r in rows] + [rows[-1]["bin_hi"]]),
                np.array([r["count"] for r in rows]),
                np.array([nan if r["mean_pred"] is None else r["mean_pred"] for r in rows]),
                np.array([nan if r["frac_pos"] is None else r["frac_pos"] for r in rows]),
                int(sum(r["count"] for r in rows)),
            )
        p = out / f"{stem}_reliability.svg"
        reliability_svg(tables, p)
        written.append(p)
    return written


# --------------------------------------------------------------------------
# subcommand handlers


def cmd_gen_ecg(args, cfg: PipelineConfig) -> int:
    beat = cfg.ecg.beat
    for name in ("hr_mean", "noise_std", "spike_rate"):
        v = getattr(args, name)
        if v is not None:
            beat = replace(beat, **{name: v})
    duration = args.duration if args.duration is not None else cfg.ecg.duration_s
    fs = args.fs if args.fs is not None else cfg.ecg.fs_hz
    out = _out_dir(args, cfg)
    base = cfg.stage_seed("ecg")
    for i in range(args.count):
        rec, truth = synthesize_ecg(beat, duration, fs, derive_seed(base, i))
        stem = f"{args.prefix}_{i:03d}"
        rec = ecgproc.EcgRecording(rec.samples, rec.fs, rec.start_time, args.patient_id or "")
        ecgproc.write_recording(rec, out / f"{stem}.csv")
        truth.save(out / f"{stem}.truth.json")
    return 0


def cmd_gen_cohort(args, cfg: PipelineConfig) -> int:
    out = Path(_require(args.out, cfg.paths.cohort, "--out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    records = generate_cohort(cfg.cohort_spec())
    write_jsonl(records, out)
    return 0


def cmd_ecg_qc(args, cfg: PipelineConfig) -> int:
    recordings = {}
    rows = []
    for path in args.recordings:
        rec = ecgproc.read_recording(path)
        proc = ecgproc.process_recording(rec, cfg.ecg_qc)
        rid = Path(path).stem
        if rid in recordings:
            raise ConfigError(f"duplicate recording id {rid!r}")
        recordings[rid] = {
            "fs_hz": rec.fs,
            "start_epoch_s": rec.start_time,
            "patient_id": rec.patient_id,
            "spikes": [list(s) for s in proc.spikes],
            "beats": [b.to_dict() for b in proc.beats],
            "qc": proc.report.to_dict(),
        }
        r = proc.report
        rows.append([rid, r.beats_total, r.beats_accepted, repr(r.survival_fraction), str(r.instance_accepted).lower()])
    _write_text(Path(args.out_beats), _dump_json({"recordings": recordings}))
    _write_text(
        Path(args.out_table),
        _csv_text(["recording_id", "beats_total", "beats_accepted", "survival_fraction", "instance_accepted"], rows),
    )
    return 0


def _parse_label(v) -> int:
    if isinstance(v, str):
        if v not in LABEL_CODES:
            raise SchemaError(f"unknown label {v!r}")
        return LABEL_CODES[v]
    if v not in LABEL_NAMES:
        raise SchemaError(f"unknown label {v!r}")
    return int(v)


def cmd_extract(args, cfg: PipelineConfig) -> int:
    beats_doc = _load_json(args.beats)
    if not isinstance(beats_doc, dict) or "recordings" not in beats_doc:
        raise SchemaError(f"{args.beats}: missing 'recordings'")
    records: list[InstanceRecord] = []
    skipped: dict[str, int] = {}
    with open(args.provided) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                rid = str(d["recording_id"])
                provided = F.ProvidedFeatures(
                    tuple(float(x) for x in d["ppg_bp"]),
                    tuple(float(x) for x in d["bia"]),
                    float(d["age"]),
                    int(d["family_history"]),
                )
                label = _parse_label(d["label"])
                pid = str(d["patient_id"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, SweetDeepError):
                    raise SchemaError(f"{args.provided}:{lineno}: {exc}") from exc
                raise SchemaError(f"{args.provided}:{lineno}: bad provided-features line: {exc}") from exc
            if rid not in beats_doc["recordings"]:
                raise SchemaError(f"{args.provided}:{lineno}: recording {rid!r} not in {args.beats}")
            entry = beats_doc["recordings"][rid]
            if not entry["qc"]["instance_accepted"]:
                skipped["qc_rejected"] = skipped.get("qc_rejected", 0) + 1
                continue
            accepted = [b for b in map(ecgproc.BeatAnnotation.from_dict, entry["beats"]) if b.accepted]
            try:
                ecg = F.ecg_features(accepted)
            except FeatureUnavailable:
                skipped["ecg_unavailable"] = skipped.get("ecg_unavailable", 0) + 1
                continue
            ts = float(d.get("timestamp_s", entry["start_epoch_s"]))
            x = F.assemble(ecg, provided, F.seconds_of_day(ts))
            records.append(InstanceRecord(pid, ts, x, label))
    write_jsonl(records, args.out)
    print(_dump_json({"written": len(records), "skipped": skipped}), end="")
    return 0


def cmd_folds(args, cfg: PipelineConfig) -> int:
    table = _load_table(_require(args.cohort, cfg.paths.cohort, "--cohort"))
    folds = make_folds(table, cfg.stage_seed("folds"), cfg.n_folds)
    out = Path(_require(args.out, cfg.paths.folds, "--out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    folds.save(out)
    return 0


def cmd_train(args, cfg: PipelineConfig) -> int:
    table = _load_table(_require(args.cohort, cfg.paths.cohort, "--cohort")).with_labels([ND, T2D])
    (variant,) = experiment.resolve([args.variant])
    mcfg, cols = experiment.variant_config(variant, cfg.model)
    out = Path(args.out_dir) if args.out_dir is not None else Path(cfg.paths.models or cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.stage_seed("train")
    folds_path = args.folds if args.folds is not None else cfg.paths.folds
    stream = "baseline" if variant.threshold is not None else variant.name
    if folds_path is None or args.full:
        fitted = fit_fold(table, mcfg, cols, cfg.smote_k, seed, stream, "full")
        save_params(fitted.params, out / "full.json")
        _write_text(out / "full_trace.csv", _trace_csv(fitted.history))
        return 0
    folds = FoldSplit.load(folds_path)
    for k, (train_ids, _) in enumerate(folds.rotations()):
        fitted = fit_fold(table.for_patients(train_ids), mcfg, cols, cfg.smote_k, seed, stream, k)
        save_params(fitted.params, _model_path(out, k))
        _write_text(out / f"fold_{k}_trace.csv", _trace_csv(fitted.history))
    return 0


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    table = _load_table(_require(args.cohort, cfg.paths.cohort, "--cohort"))
    folds = FoldSplit.load(_require(args.folds, cfg.paths.folds, "--folds"))
    models = _load_fold_models(_require(args.models, cfg.paths.models, "--models"), folds)
    cv = predict_folds(table, folds, models)
    thr = args.threshold if args.threshold is not None else cfg.threshold
    write_metrics(cv, thr, _out_dir(args, cfg), args.svg)
    return 0


def cmd_screen(args, cfg: PipelineConfig) -> int:
    table = _load_table(_require(args.cohort, cfg.paths.cohort, "--cohort"))
    thr = args.threshold if args.threshold is not None else cfg.threshold
    abstain = cfg.abstention.enabled and not args.no_abstain
    hw = args.half_width if args.half_width is not None else cfg.abstention.half_width
    tune = args.tune_half_width or cfg.abstention.tune
    out = _out_dir(args, cfg)
    if args.model is not None:
        models = [load_params(args.model)]
        write_screening(cfg, table, out, args.svg, None, models, thr, abstain, hw, tune)
        return 0
    folds = FoldSplit.load(_require(args.folds, cfg.paths.folds, "--folds"))
    models = _load_fold_models(_require(args.models, cfg.paths.models, "--models"), folds)
    cv = predict_folds(table, folds, models)
    write_screening(cfg, table, out, args.svg, cv, models, thr, abstain, hw, tune)
    return 0


def cmd_experiment(args, cfg: PipelineConfig) -> int:
    table = _load_table(_require(args.cohort, cfg.paths.cohort, "--cohort"))
    folds = FoldSplit.load(_require(args.folds, cfg.paths.folds, "--folds"))
    names = args.variant if args.variant else list(cfg.variants)
    results = run_variants(cfg, table, folds, names)
    _write_text(Path(args.out), experiment.results_to_json(results))
    return 0


def cmd_report(args, cfg: PipelineConfig) -> int:
    texts = []
    out = Path(args.out_dir) if args.out_dir is not None else None
    for path in args.inputs:
        doc = _load_json(path)
        text = render_report(doc)
        texts.append(f"== {Path(path).name} ==\n{text}")
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            _write_text(out / f"{Path(path).stem}.txt", text)
            if not args.no_svg:
                _report_svgs(doc, Path(path).stem, out)
    sys.stdout.write("\n".join(texts))
    return 0


def cmd_reproduce(args, cfg: PipelineConfig) -> int:
    """gen-cohort -> folds -> experiment -> evaluate -> screen -> report, all under one directory."""
    out = _out_dir(args, cfg)
    _write_text(out / "config.yaml", dump_config(cfg))
    records = generate_cohort(cfg.cohort_spec())
    write_jsonl(records, out / "cohort.jsonl")
    table = InstanceTable.from_records(records)
    folds = make_folds(table, cfg.stage_seed("folds"), cfg.n_folds)
    folds.save(out / "folds.json")

    names = list(cfg.variants) if args.variant is None else args.variant
    if "baseline" not in names:
        names = ["baseline"] + names
    results = run_variants(cfg, table, folds, names)
    _write_text(out / "experiment.json", experiment.results_to_json(results))
    base = next(r for r in results if r.variant.name == "baseline")
    models_dir = out / "models"
    models_dir.mkdir(exist_ok=True)
    for k, fitted in enumerate(base.cv.models):
        save_params(fitted.params, _model_path(models_dir, k))
        _write_text(models_dir / f"fold_{k}_trace.csv", _trace_csv(fitted.history))
    write_metrics(base.cv, cfg.threshold, out / "evaluate", not args.no_svg)
    ab = cfg.abstention
    write_screening(
        cfg, table, out / "screen", not args.no_svg, base.cv, [m.params for m in base.cv.models],
        cfg.threshold, ab.enabled, ab.half_width, ab.tune,
    )
    report_dir = out / "report"
    report_dir.mkdir(exist_ok=True)
    texts = []
    for path in (out / "evaluate" / "metrics.json", out / "experiment.json", out / "screen" / "abstention.json"):
        doc = json.loads(path.read_text())
        text = render_report(doc)
        _write_text(report_dir / f"{path.stem}.txt", text)
        if not args.no_svg:
            _report_svgs(doc, path.stem, report_dir)
        texts.append(text)
    sys.stdout.write("\n".join(texts))
    return 0


# --------------------------------------------------------------------------
# argument parsing


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="YAML", help="pipeline config file; omitted keys take the built-in defaults")
    p.add_argument("--seed", type=int, help="master seed; replaces every configured seed with streams derived from it")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sweetdeep", description="Synthetic-data T2D screening pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = [_common()]

    def add(name: str, fn, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=common, help=help_, description=help_)
        p.set_defaults(func=fn)
        return p

    def out_dir(p, what: str):
        p.add_argument("--out-dir", help=f"directory for {what} (default: paths.output_dir)")

    p = add("gen-ecg", cmd_gen_ecg, "Synthesize ECG recordings (CSV + sidecar) with ground-truth fiducials.")
    out_dir(p, "the recordings")
    p.add_argument("--count", type=int, default=1, help="number of recordings to write (default: 1)")
    p.add_argument("--prefix", default="rec", help="file name prefix; files are PREFIX_000.csv etc. (default: rec)")
    p.add_argument("--duration", type=float, help="recording length in seconds (default: generator.ecg.duration_s)")
    p.add_argument("--fs", type=float, help="sampling rate in Hz (default: generator.ecg.fs_hz)")
    p.add_argument("--hr", dest="hr_mean", type=float, help="mean heart rate in bpm")
    p.add_argument("--noise", dest="noise_std", type=float, help="white-noise standard deviation in mV")
    p.add_argument("--spike-rate", dest="spike_rate", type=float, help="motion-artifact spikes per minute")
    p.add_argument("--patient-id", help="patient id stored in each sidecar")

    p = add("gen-cohort", cmd_gen_cohort, "Generate a synthetic ND/T2D/PD cohort as instance JSONL.")
    p.add_argument("--out", help="output JSONL path (default: paths.cohort)")

    p = add("ecg-qc", cmd_ecg_qc, "Filter, delineate and quality-check ECG recordings.")
    p.add_argument("recordings", nargs="+", help="recording CSV files, each with a JSON sidecar")
    p.add_argument("--out-beats", required=True, help="output JSON with beat annotations and QC reports")
    p.add_argument("--out-table", required=True, help="output CSV acceptance table, one row per recording")

    p = add("extract", cmd_extract, "Join beat annotations with provided features into instance JSONL.")
    p.add_argument("--beats", required=True, help="beat-annotation JSON written by ecg-qc")
    p.add_argument("--provided", required=True, help="provided-features JSONL keyed by recording_id")
    p.add_argument("--out", required=True, help="output instance JSONL")

    p = add("folds", cmd_folds, "Assign patients to class-stratified inter-patient folds.")
    p.add_argument("--cohort", help="instance JSONL (default: paths.cohort)")
    p.add_argument("--out", help="output fold JSON (default: paths.folds)")

    p = add("train", cmd_train, "Train one model per fold, or a single model on every labelled patient.")
    p.add_argument("--cohort", help="instance JSONL (default: paths.cohort)")
    p.add_argument("--folds", help="fold JSON; omit (or pass --full) to train on all ND/T2D patients")
    p.add_argument("--full", action="store_true", help="ignore folds and write full.json trained on everyone")
    p.add_argument("--variant", default="baseline", help="experiment variant whose architecture/features to use")
    p.add_argument("--out-dir", help="directory for weight files and trace CSVs (default: paths.models)")

    p = add("evaluate", cmd_evaluate, "Score per-fold models on their held-out patients.")
    p.add_argument("--cohort", help="instance JSONL (default: paths.cohort)")
    p.add_argument("--folds", help="fold JSON (default: paths.folds)")
    p.add_argument("--models", help="directory holding fold_K.json weight files (default: paths.models)")
    p.add_argument("--threshold", type=float, help="decision threshold on P(T2D) (default: experiment.threshold)")
    p.add_argument("--svg", action="store_true", help="also write a reliability diagram SVG")
    out_dir(p, "metrics.json and calibration CSVs")

    p = add("screen", cmd_screen, "Patient verdicts with optional Don't-Know abstention and cohort histograms.")
    p.add_argument("--cohort", help="instance JSONL (default: paths.cohort)")
    p.add_argument("--folds", help="fold JSON for out-of-fold scoring (default: paths.folds)")
    p.add_argument("--models", help="directory with fold_K.json weight files (default: paths.models)")
    p.add_argument("--model", help="single weight file applied to every patient instead of fold models")
    p.add_argument("--threshold", type=float, help="decision threshold on P(T2D) (default: experiment.threshold)")
    p.add_argument("--no-abstain", action="store_true", help="never answer Don't-Know")
    p.add_argument("--half-width", type=float, help="abstention band half-width around 0.5 (default: 0.08)")
    p.add_argument("--tune-half-width", action="store_true", help="pick the widest band abstaining on <= max_abstain")
    p.add_argument("--svg", action="store_true", help="also write a histogram SVG of the cohort distributions")
    out_dir(p, "verdicts, abstention report and histograms")

    p = add("experiment", cmd_experiment, "Cross-validate the variant matrix on one fold assignment.")
    p.add_argument("--cohort", help="instance JSONL (default: paths.cohort)")
    p.add_argument("--folds", help="fold JSON (default: paths.folds)")
    p.add_argument(
        "--variant", action="append", help=f"variant to run, repeatable (default: all); one of {', '.join(experiment.VARIANTS)}"
    )
    p.add_argument("--out", required=True, help="output results JSON")

    p = add("report", cmd_report, "Render metrics/experiment/abstention JSON as text tables and SVG plots.")
    p.add_argument("inputs", nargs="+", help="JSON documents written by evaluate, experiment or screen")
    p.add_argument("--out-dir", help="also write NAME.txt and SVG plots here")
    p.add_argument("--no-svg", action="store_true", help="skip the SVG plots")

    p = add("reproduce", cmd_reproduce, "Run the whole pipeline end to end on a synthetic cohort.")
    out_dir(p, "every artifact")
    p.add_argument("--variant", action="append", help="restrict the experiment matrix (repeatable; default: all)")
    p.add_argument("--no-svg", action="store_true", help="skip SVG figures")
    return parser


def _error(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "code": code, "message": str(exc)}) + "\n")
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        return args.func(args, cfg)
    except SweetDeepError as exc:
        return _error(exc, exc.code)
    except FileNotFoundError as exc:
        return _error(exc, MISSING_FILE_CODE)


if __name__ == "__main__":
    sys.exit(main())
