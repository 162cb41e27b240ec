"""Command-line entry point: synth, classify, train, evaluate, bench, report."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
import tempfile
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import evaluation as ev
from . import pipeline, plots, synth
from .errors import ConfigError, DataError, GazePredError, IOFailure
from .events import ClassifierParams, EventClass, extract_ceps, segment, write_labels
from .models import Arch, ModelConfig, ZeroDisplacement, build_model, count_macs, count_params
from .signal import FeatureSet, load_recording, pi_to_samples, save_recording
from .training import TrainConfig, load_checkpoint, save_checkpoint

log = logging.getLogger("gazepred")

CDF_BINS = ("full", "fix_short", "fix_long", "sac_small", "sac_large", "cep")
CDF_POINTS = 100
P95_WINDOW_S = 1.0


# -- small I/O helpers --------------------------------------------------------

def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create output directory {p}: {exc.strerror}") from None
    if not os.access(p, os.W_OK):
        raise IOFailure(f"output directory {p} is not writable")
    return p


class RunManifest:
    """Provenance record written atomically next to a command's outputs."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.data = {"command": command, "config_path": getattr(args, "config", None),
                     "seed": getattr(args, "seed", None), "threads": getattr(args, "threads", None),
                     "tool_version": __version__, "argv": sys.argv[1:], "started": _now(),
                     "inputs": {}, "outputs": [], "effective_config": {}}

    def finish(self, out_dir) -> Path:
        self.data["ended"] = _now()
        path = Path(out_dir) / f"{self.data['command']}.manifest.json"
        atomic_write_text(path, json.dumps(self.data, indent=2, sort_keys=True, default=str) + "\n")
        return path


def _file_config(args) -> dict:
    return cfgmod.load_config(getattr(args, "config", None))


def _plain(d: dict) -> dict:
    return {k: (v.value if hasattr(v, "value") else list(v) if isinstance(v, tuple) else v)
            for k, v in d.items()}


# -- synth ----------------------------------------------------------------------

def cmd_synth(args) -> int:
    conf = _file_config(args)
    n = args.subjects if args.subjects is not None else conf.get("subjects", 8)
    duration = args.duration_s if args.duration_s is not None else conf.get("duration_s", 120.0)
    fs = conf.get("sample_rate_hz", 90.0)
    seed = args.seed if args.seed is not None else 0
    if n < 1:
        raise ConfigError(f"--subjects must be >= 1, got {n}")
    out = ensure_dir(args.out)
    manifest = RunManifest("synth", args)
    manifest.data["effective_config"] = {"subjects": n, "duration_s": duration,
                                         "sample_rate_hz": fs, "seed": seed}
    lines = []
    for i, s in enumerate(synth.subject_seeds(seed, n)):
        sid = f"S{i:03d}"
        params = synth.sample_subject_params(s)
        sr = synth.generate_recording(params, duration, fs, subject_id=sid)
        save_recording(sr.recording, out / f"{sid}.csv")
        write_labels(sr.true_labels, out / f"{sid}{pipeline.LABEL_SUFFIX}")
        manifest.data["outputs"] += [f"{sid}.csv", f"{sid}{pipeline.LABEL_SUFFIX}"]
        lines.append(json.dumps({"subject_id": sid, **synth.params_dict(params),
                                 "n_saccades": sr.n_saccades}, sort_keys=True))
    (out / "subjects.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest.data["outputs"].append("subjects.txt")
    manifest.finish(out)
    print(f"wrote {n} recordings to {out}")
    return 0


# -- classify ---------------------------------------------------------------------

def _classifier_params(conf: dict) -> ClassifierParams:
    return ClassifierParams(**cfgmod.split_config(conf)["classifier"])


def cmd_classify(args) -> int:
    conf = _file_config(args)
    params = _classifier_params(conf)
    fs = conf.get("sample_rate_hz", 90.0)
    paths = pipeline.recording_paths(args.data)
    if not paths:
        raise DataError(f"no recordings found in {args.data}")
    out = ensure_dir(args.out)
    manifest = RunManifest("classify", args)
    manifest.data["inputs"]["data"] = str(args.data)
    manifest.data["effective_config"] = _plain(vars(params))
    rows = []
    for p in paths:
        rec = load_recording(p, fs)
        labels = pipeline.classify_recording(rec, params)
        name = p.stem + pipeline.LABEL_SUFFIX
        write_labels(labels, out / name)
        manifest.data["outputs"].append(name)
        for seg in segment(labels, rec):
            rows.append((rec.subject_id, EventClass(seg.cls).name.lower(), seg.start_idx,
                         seg.end_idx, seg.duration_ms, seg.amplitude_deg))
    write_csv(out / "events.csv", ("subject_id", "class", "start_idx", "end_idx", "duration_ms",
                                   "amplitude_deg"), rows)
    manifest.data["outputs"].append("events.csv")
    manifest.finish(out)
    print(f"classified {len(paths)} recordings into {out}")
    return 0


# -- train ------------------------------------------------------------------------

def _merged_train_configs(args, conf: dict) -> tuple[ModelConfig, TrainConfig, float]:
    parts = cfgmod.split_config(conf)
    mkw, tkw = dict(parts["model"]), dict(parts["train"])
    fs = conf.get("sample_rate_hz", 90.0)
    for flag, key, target in (("arch", "arch", mkw), ("window_len", "window_len", mkw),
                              ("feature_set", "feature_set", mkw), ("epochs", "epochs", tkw),
                              ("batch_size", "batch_size", tkw), ("lr", "lr", tkw),
                              ("pi_ms", "pi_ms", tkw)):
        value = getattr(args, flag, None)
        if value is not None:
            target[key] = value.upper() if key in ("arch", "feature_set") else value
    if args.seed is not None:
        tkw["seed"] = args.seed
        mkw["init_seed"] = args.seed
    tcfg = TrainConfig(**tkw)
    pi = pi_to_samples(tcfg.pi_ms, fs)
    if "pi_samples" in mkw and mkw["pi_samples"] != pi:
        raise ConfigError(f"pi_samples={mkw['pi_samples']} disagrees with pi_ms={tcfg.pi_ms} "
                          f"({pi} samples at {fs} Hz)")
    mkw["pi_samples"] = pi
    try:
        mcfg = ModelConfig(**mkw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return mcfg, tcfg, fs


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    if not data_dir.is_dir():
        raise IOFailure(f"data directory {data_dir} does not exist")
    conf = _file_config(args)
    mcfg, tcfg, fs = _merged_train_configs(args, conf)
    ckpt = Path(args.out)
    out_dir = ensure_dir(ckpt.parent if str(ckpt.parent) else ".")

    subjects = pipeline.load_dataset(data_dir, fs, _classifier_params(conf))
    log.info("training %s on %d subjects", mcfg.arch.value, len(subjects))
    run = pipeline.train_on_subjects(subjects, mcfg, tcfg, fs)
    model, history = run.model, run.history
    fit_ids, val_ids, test_ids = run.train_ids, run.val_ids, run.test_ids
    save_checkpoint(model, ckpt)
    hist_path = out_dir / "history.csv"
    write_csv(hist_path, ("epoch", "train_loss", "val_loss", "seconds"),
              [(i + 1, history.train_loss[i], history.val_loss[i], history.seconds[i])
               for i in range(len(history))])

    manifest = RunManifest("train", args)
    manifest.data["inputs"]["data"] = str(data_dir)
    manifest.data["outputs"] = [str(ckpt), str(hist_path)]
    manifest.data["effective_config"] = {"model": mcfg.to_dict(), "train": _plain(vars(tcfg)),
                                         "split": {"train": fit_ids, "val": val_ids,
                                                   "test": test_ids}}
    manifest.finish(out_dir)
    print(f"saved {mcfg.arch.value} checkpoint to {ckpt}")
    return 0


# -- evaluate -------------------------------------------------------------------

def _bin_errors(errs: ev.ErrorSeries, segs, ceps):
    """Sample errors per bin and event summaries for one subject."""
    bins = {"fix_short": [], "fix_long": [], "sac_small": [], "sac_large": []}
    for seg in segs:
        for name, lst in ev.bin_events([seg]).items():
            bins[name] += lst
    masks = {name: ev.sample_mask_for_events(errs.target_index, evs) for name, evs in bins.items()}
    masks["cep"] = ev.sample_mask_for_events(errs.target_index, ceps)
    return {name: errs.errors[m] for name, m in masks.items()}


def _cdf_rows(values):
    return ev.cdf_curve(values, CDF_POINTS) if len(values) else []


def evaluate_subjects(model, subjects, out: Path, with_plots: bool = False) -> list[str]:
    """Write the evaluation report files for ``subjects``; returns their names."""
    cfg = model.cfg
    zero = ZeroDisplacement(cfg)
    samples = {b: [] for b in CDF_BINS}
    base = {b: [] for b in CDF_BINS}
    p95s = {b: [] for b in CDF_BINS}
    summaries = []
    box_groups = {"fix_short": [], "fix_long": [], "cep": []}
    for lo, hi in zip(ev.SACCADE_AMPLITUDE_EDGES[:-1], ev.SACCADE_AMPLITUDE_EDGES[1:]):
        box_groups["sac_" + ev.amplitude_bin_label(lo)] = []
    for subj in sorted(subjects, key=lambda s: s.subject_id):
        rec = subj.recording
        feats = pipeline.model_features(subj, cfg, model.normalization)
        errs = ev.horizon_errors(model, rec, feats, subj.labels)
        zerrs = ev.horizon_errors(zero, rec, feats, subj.labels)
        segs = segment(subj.labels, rec)
        ceps = extract_ceps(segs, rec.sample_rate_hz)
        summ = ev.event_summaries(errs, segs, ceps)
        summaries += summ
        samples["full"].append(errs.errors)
        base["full"].append(zerrs.errors)
        p95s["full"].append(ev.p95_over_windows(errs, rec.sample_rate_hz, P95_WINDOW_S))
        for name, vals in _bin_errors(errs, segs, ceps).items():
            samples[name].append(vals)
        for name, vals in _bin_errors(zerrs, segs, ceps).items():
            base[name].append(vals)
        for s in summ:
            p95s[s.bin].append(np.array([s.p95_deg]))
        per_seg = {(s.start_idx, s.kind): s for s in summ}
        for seg in segs:
            if seg.cls == EventClass.SACCADE and (seg.start_idx, "saccade") in per_seg:
                vals = errs.errors[ev.sample_mask_for_events(errs.target_index, [seg])]
                box_groups["sac_" + ev.amplitude_bin_label(seg.amplitude_deg)].append(vals)
    flat = {b: np.concatenate(v) if v else np.zeros(0) for b, v in samples.items()}
    flat_base = {b: np.concatenate(v) if v else np.zeros(0) for b, v in base.items()}
    flat_p95 = {b: np.concatenate(v) if v else np.zeros(0) for b, v in p95s.items()}

    written = []
    for b in CDF_BINS:
        for prefix, vals in (("cdf", flat[b]), ("cdf_p95", flat_p95[b])):
            name = f"{prefix}_{b}.csv"
            rows = _cdf_rows(vals)
            write_csv(out / name, ("error_deg", "fraction"), rows)
            written.append(name)
            if with_plots and rows:
                svg = plots.line_svg(rows, f"{prefix} {b}", "error (deg)", "fraction")
                (out / name.replace(".csv", ".svg")).write_text(svg, encoding="utf-8")
                written.append(name.replace(".csv", ".svg"))

    profiles = ev.subject_profiles(summaries)
    prow = []
    for prof in profiles:
        for etype in ev.EVENT_TYPES:
            if etype in prof.cells:
                p50, p95, n_ev = prof.cells[etype]
                prow.append((prof.subject_id, etype, p50, p95, n_ev))
    write_csv(out / "profiles.csv",
              ("subject_id", "event_type", "p50_median_deg", "p95_median_deg", "n_events"), prow)
    written.append("profiles.csv")

    box_groups["fix_short"] = [flat["fix_short"]]
    box_groups["fix_long"] = [flat["fix_long"]]
    box_groups["cep"] = [flat["cep"]]
    grouped = {k: np.concatenate(v) if v else np.zeros(0) for k, v in box_groups.items()}
    stats = ev.boxplot_stats(grouped)
    keys = ("n", "q1", "median", "q3", "mean", "whisker_lo", "whisker_hi", "n_outliers")
    write_csv(out / "boxplots.csv", ("bin",) + keys,
              [(name,) + tuple(s[k] for k in keys) for name, s in stats.items()])
    written.append("boxplots.csv")
    if with_plots:
        (out / "boxplots.svg").write_text(plots.box_svg(stats, "error by event bin", "error (deg)"),
                                          encoding="utf-8")
        written.append("boxplots.svg")

    srow = []
    for b in CDF_BINS:
        v, z = flat[b], flat_base[b]
        n_ev = len(flat_p95[b]) if b != "full" else 0
        if len(v):
            srow.append((b, len(v), n_ev, ev.percentile(v, 50), ev.percentile(v, 95),
                         ev.percentile(z, 50), ev.percentile(z, 95)))
        else:
            srow.append((b, 0, n_ev, "", "", "", ""))
    write_csv(out / "summary.csv", ("bin", "n_samples", "n_events", "p50_deg", "p95_deg",
                                    "baseline_p50_deg", "baseline_p95_deg"), srow)
    written.append("summary.csv")

    report = [
        f"model: {cfg.arch.value}  input_shape: {cfg.input_shape}  pi_samples: {cfg.pi_samples}",
        f"subjects: {', '.join(sorted(s.subject_id for s in subjects))}",
        "errors: Euclidean distance at t + pi_samples; events attributed by the target sample.",
        "cdf_<bin>.csv: CDF of per-sample errors in the bin.",
        "cdf_p95_<bin>.csv: CDF of per-event P95 values; for 'full' the signal is grouped into "
        f"non-overlapping {P95_WINDOW_S:g}-second windows and each window's P95 is used.",
        "empty bins produce header-only CSVs.",
        "",
        "bin         n_samples  P50      P95      zero-baseline P50",
    ]
    for row in srow:
        if row[1]:
            report.append(f"{row[0]:<11} {row[1]:>9}  {row[3]:<8.4f} {row[4]:<8.4f} {row[5]:.4f}")
        else:
            report.append(f"{row[0]:<11} {0:>9}  (empty)")
    (out / "report.txt").write_text("\n".join(report) + "\n", encoding="utf-8")
    written.append("report.txt")
    return written


def cmd_evaluate(args) -> int:
    conf = _file_config(args)
    model = load_checkpoint(args.checkpoint)
    requested = args.feature_set or conf.get("feature_set")
    if requested is not None and FeatureSet(requested.upper()) is not model.cfg.feature_set:
        raise ConfigError(f"feature set {requested.upper()} does not match the checkpoint's "
                          f"{model.cfg.feature_set.value}")
    fs = conf.get("sample_rate_hz", model.meta.get("sample_rate_hz", 90.0))
    subjects = pipeline.load_dataset(args.data, fs, _classifier_params(conf))
    test_ids = model.meta.get("test_subjects")
    if args.all_subjects or not test_ids:
        chosen = subjects
    else:
        chosen = pipeline.select(subjects, test_ids)
        if not chosen:
            raise DataError(f"none of the checkpoint's test subjects {test_ids} are in {args.data}")
    out = ensure_dir(args.out)
    manifest = RunManifest("evaluate", args)
    manifest.data["inputs"] = {"checkpoint": str(args.checkpoint), "data": str(args.data)}
    manifest.data["effective_config"] = {"model": model.cfg.to_dict(),
                                         "subjects": [s.subject_id for s in chosen]}
    manifest.data["outputs"] = evaluate_subjects(model, chosen, out, args.plots)
    manifest.finish(out)
    print(f"wrote evaluation report for {len(chosen)} subjects to {out}")
    return 0


# -- bench ------------------------------------------------------------------------

def cmd_bench(args) -> int:
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        model = build_model(ModelConfig(arch=Arch((args.arch or "LSTM").upper())))
    out = ensure_dir(args.out)
    res = ev.bench_inference(model, warmup=args.warmup, runs=args.runs,
                             seed=args.seed if args.seed is not None else 0)
    shape = "x".join(str(d) for d in model.cfg.input_shape)
    write_csv(out / "bench.csv", ("model", "input_shape", "mean_ms", "std_ms", "macs", "params"),
              [(model.cfg.arch.value, shape, res.mean_ms, res.std_ms, count_macs(model),
                count_params(model))])
    manifest = RunManifest("bench", args)
    manifest.data["inputs"]["checkpoint"] = args.checkpoint
    manifest.data["effective_config"] = {"runs": args.runs, "warmup": args.warmup,
                                         "model": model.cfg.to_dict()}
    manifest.data["outputs"] = ["bench.csv"]
    manifest.finish(out)
    print(f"{model.cfg.arch.value}: {res.mean_ms:.3f} +- {res.std_ms:.3f} ms over {args.runs} runs")
    return 0


# -- report -----------------------------------------------------------------------

def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_report(args) -> int:
    """Render SVGs and a text index from an existing evaluation directory."""
    src = Path(args.eval_dir)
    if not (src / "summary.csv").exists():
        raise IOFailure(f"{src} does not contain an evaluation report (summary.csv missing)")
    out = ensure_dir(args.out or src)
    written = []
    for b in CDF_BINS:
        for prefix in ("cdf", "cdf_p95"):
            p = src / f"{prefix}_{b}.csv"
            if not p.exists():
                continue
            rows = [(float(r["error_deg"]), float(r["fraction"])) for r in _read_csv(p)]
            if rows:
                name = f"{prefix}_{b}.svg"
                (out / name).write_text(plots.line_svg(rows, f"{prefix} {b}", "error (deg)",
                                                       "fraction"), encoding="utf-8")
                written.append(name)
    if (src / "boxplots.csv").exists():
        stats = {r["bin"]: {k: float(v) for k, v in r.items() if k != "bin"}
                 for r in _read_csv(src / "boxplots.csv")}
        (out / "boxplots.svg").write_text(plots.box_svg(stats, "error by event bin",
                                                        "error (deg)"), encoding="utf-8")
        written.append("boxplots.svg")
    lines = ["bin,n_samples,p50_deg,p95_deg"]
    for r in _read_csv(src / "summary.csv"):
        lines.append(f"{r['bin']},{r['n_samples']},{r['p50_deg']},{r['p95_deg']}")
    (out / "index.txt").write_text("\n".join(lines + ["", "figures:"] + written) + "\n",
                                   encoding="utf-8")
    manifest = RunManifest("report", args)
    manifest.data["inputs"]["eval_dir"] = str(src)
    manifest.data["outputs"] = written + ["index.txt"]
    manifest.finish(out)
    print(f"rendered {len(written)} figures into {out}")
    return 0


# -- parser -------------------------------------------------------------------------

def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="flat key = value config file")
    p.add_argument("--seed", type=int, default=d, help="run seed (u64)")
    p.add_argument("--threads", type=int, default=d, help="BLAS thread limit; 1 is reproducible")
    p.add_argument("--plots", action="store_true", default=argparse.SUPPRESS if suppress else False,
                   help="also write SVG figures")
    p.add_argument("-v", "--verbose", action="store_true",
                   default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gazepred", description=__doc__)
    _add_globals(ap, suppress=False)
    ap.add_argument("--version", action="version", version=f"gazepred {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate labeled synthetic recordings")
    _add_globals(p, True)
    p.add_argument("--subjects", type=int)
    p.add_argument("--duration-s", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("classify", help="label recordings with the velocity classifier")
    _add_globals(p, True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("train", help="train a forecaster")
    _add_globals(p, True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--arch", choices=["lstm", "tf", "clpr", "LSTM", "TF", "CLPR"])
    p.add_argument("--pi-ms", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--window-len", type=int)
    p.add_argument("--feature-set", choices=[f.value for f in FeatureSet])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="event-conditioned error report")
    _add_globals(p, True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--feature-set", help="expected feature set; must match the checkpoint")
    p.add_argument("--all-subjects", action="store_true",
                   help="evaluate every subject instead of the checkpoint's test split")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="inference timing, MACs and parameter count")
    _add_globals(p, True)
    p.add_argument("--checkpoint")
    p.add_argument("--arch", help="benchmark an untrained default model instead")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="render SVG figures from an evaluation directory")
    _add_globals(p, True)
    p.add_argument("--eval-dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def _thread_limit(n):
    if n is None:
        return nullcontext()
    if n < 1:
        raise ConfigError(f"--threads must be >= 1, got {n}")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except GazePredError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IOFailure.exit_code


if __name__ == "__main__":
    sys.exit(main())
