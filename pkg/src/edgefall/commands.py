"""Implementations behind the CLI subcommands.

Each artifact-producing command resolves its configuration (flags over
config file over defaults), runs the pipeline, writes its outputs
atomically, and drops exactly one manifest.json recording the fully
resolved configuration, seeds, inputs and outputs.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config_file, sensor_power_overrides
from .data import (
    IngestSchema,
    SplitSpec,
    WindowedDataset,
    ingest_csv,
    normalize,
    split,
    synth_generate,
    window_and_label,
)
from .distill import DistillConfig, distill
from .errors import ConfigError, DataError
from .evaluate import bench_latency, run_ablation
from .io_utils import atomic_write_text, utc_now_iso, write_json
from .model import ModelTopology, forward, init_params, load_model, save_model
from .power import CandidateConfig, estimate_power, run_selection_loop, select
from .sensors import SensorSet, all_sensor_sets, parse_subset_list
from .training import TrainConfig, train

log = logging.getLogger(__name__)

DEFAULTS = {
    "sensors": "ABG",
    "window_len": 20,
    "stride": 10,
    "normalize": True,
    "split.mode": None,  # subject-holdout for CSV data, random for synthetic
    "split.seed": 42,
    "split.test_fraction": 0.25,
    "split.holdout_subjects": (),
    "train.epochs": 50,
    "train.batch_size": 32,
    "train.learning_rate": 1e-3,
    "train.grad_clip_norm": 5.0,
    "train.shuffle": True,
    "model.lstm_units": 512,
    "model.hidden_units": 128,
    "distill.temperature": 2.0,
    "distill.alpha": 0.5,
    "distill.width_factor": 0.5,
    "synth.n_per_class": 100,
    "synth.noise_std": 0.3,
}

MASTER_SEED_DEFAULT = 42

# Flag name -> resolved key, for flags that mirror config keys.
_FLAG_KEYS = {
    "window": "window_len",
    "stride": "stride",
    "test_fraction": "split.test_fraction",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "lr": "train.learning_rate",
    "clip_norm": "train.grad_clip_norm",
    "lstm_units": "model.lstm_units",
    "hidden_units": "model.hidden_units",
    "temperature": "distill.temperature",
    "alpha": "distill.alpha",
    "width_factor": "distill.width_factor",
    "n_per_class": "synth.n_per_class",
    "noise_std": "synth.noise_std",
}


def dispatch(args) -> int:
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = {
        "ingest": cmd_ingest,
        "synth": cmd_synth,
        "train": cmd_train,
        "distill": cmd_distill,
        "ablate": cmd_ablate,
        "compare": cmd_compare,
        "select": cmd_select,
        "bench": cmd_bench,
        "infer": cmd_infer,
    }[args.command]
    return handler(args)


def _resolve(args) -> dict:
    """Merge defaults, config file, and flags into one materialized dict."""
    res = dict(DEFAULTS)
    if args.config:
        res.update(load_config_file(args.config))
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            res[key] = value
    if getattr(args, "no_shuffle", False):
        res["train.shuffle"] = False
    if getattr(args, "no_normalize", False):
        res["normalize"] = False
    if getattr(args, "fall_codes", None):
        res["fall_codes"] = tuple(p.strip() for p in args.fall_codes.split(",") if p.strip())
    if getattr(args, "sensors", None):
        res["model_sensors"] = args.sensors
    seed = args.seed
    if seed is None:
        seed = res.get("train.seed", MASTER_SEED_DEFAULT)
    res["seed"] = int(seed)
    res["train.seed"] = int(seed)
    res["source"] = "synth" if getattr(args, "synth", False) else getattr(args, "data", None)
    return res


def _train_cfg(res: dict) -> TrainConfig:
    return TrainConfig(
        epochs=res["train.epochs"],
        batch_size=res["train.batch_size"],
        learning_rate=res["train.learning_rate"],
        grad_clip_norm=res["train.grad_clip_norm"],
        seed=res["train.seed"],
        shuffle=res["train.shuffle"],
    )


def _distill_cfg(res: dict, student_sensors: SensorSet) -> DistillConfig:
    return DistillConfig(
        student_sensor_set=student_sensors,
        temperature=res["distill.temperature"],
        alpha=res["distill.alpha"],
        width_factor=res["distill.width_factor"],
        train=_train_cfg(res),
    )


def _require_source(args, parser_hint: str = "") -> None:
    if not getattr(args, "synth", False) and not getattr(args, "data", None):
        raise ConfigError(
            "either --data <dir> or --synth is required" + parser_hint
        )


def _build_dataset(res: dict, sensor_set: SensorSet):
    """Produce (train_ds, test_ds, meta) from the resolved config."""
    meta: dict = {"sensor_set": sensor_set.name}
    if res["source"] == "synth":
        ds = synth_generate(
            n_per_class=res["synth.n_per_class"],
            window_len=res["window_len"],
            sensor_set=sensor_set,
            seed=res["seed"],
            noise_std=res["synth.noise_std"],
        )
        mode = res["split.mode"] or "random"
        if mode != "random":
            raise ConfigError("synthetic datasets have no subjects; use split.mode=random")
        spec = SplitSpec(
            mode="random",
            test_fraction=res["split.test_fraction"],
            seed=res["split.seed"],
        )
        meta["source"] = "synth"
    else:
        schema_sensors = SensorSet.parse(res.get("sensors", "ABG"))
        recordings, skipped = ingest_csv(res["source"], IngestSchema(sensors=schema_sensors))
        if not recordings:
            raise DataError(f"no wrist recordings found under {res['source']}")
        if "fall_codes" not in res or not res["fall_codes"]:
            raise ConfigError("fall_codes must be set (config key or --fall-codes) for CSV data")
        ds = window_and_label(
            recordings, sensor_set, res["window_len"], res["stride"], res["fall_codes"]
        )
        mode = res["split.mode"] or "subject-holdout"
        if mode == "subject-holdout":
            holdout = tuple(res["split.holdout_subjects"])
            if not holdout:
                subjects = sorted({str(s) for s in ds.subjects})
                n_hold = min(3, max(1, len(subjects) - 1))
                rng = np.random.default_rng(res["split.seed"])
                holdout = tuple(sorted(rng.choice(subjects, size=n_hold, replace=False)))
            spec = SplitSpec(mode="subject-holdout", holdout_subjects=holdout,
                             seed=res["split.seed"])
            meta["holdout_subjects"] = list(holdout)
        else:
            spec = SplitSpec(mode="random", test_fraction=res["split.test_fraction"],
                             seed=res["split.seed"])
        meta.update(source=str(res["source"]), recordings=len(recordings),
                    skipped_non_wrist=skipped)
    train_ds, test_ds = split(ds, spec)
    if train_ds.n_windows == 0 or test_ds.n_windows == 0:
        raise DataError("train/test split left one side empty; adjust split settings")
    if res["normalize"]:
        train_ds = normalize(train_ds)
        test_ds = normalize(test_ds, train_ds.normalization)
    meta.update(
        split_mode=spec.mode,
        n_train=train_ds.n_windows,
        n_test=test_ds.n_windows,
        window_len=ds.window_len,
    )
    return train_ds, test_ds, meta


def _manifest(args, res: dict, started: str, inputs: list, outputs: list, extra: dict | None = None):
    out_dir = Path(args.out)
    doc = {
        "command": args.command,
        "config": _jsonable(res),
        "seeds": {"master": res.get("seed")},
        "inputs": [str(p) for p in inputs],
        "outputs": [str(Path(p).name) for p in outputs],
        "version": __version__,
        "started_utc": started,
        "finished_utc": utc_now_iso(),
    }
    if extra:
        doc.update(extra)
    write_json(out_dir / "manifest.json", doc)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return str(obj)


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def cmd_ingest(args) -> int:
    started = utc_now_iso()
    res = _resolve(args)
    if not res["source"] or res["source"] == "synth":
        raise ConfigError("ingest needs --data <dir>")
    schema_sensors = SensorSet.parse(res.get("sensors", "ABG"))
    recordings, skipped = ingest_csv(res["source"], IngestSchema(sensors=schema_sensors))
    summary = {
        "recordings": len(recordings),
        "skipped_non_wrist": skipped,
        "subjects": sorted({r.subject_id for r in recordings}),
        "activities": sorted({r.activity_code for r in recordings}),
        "schema_sensors": schema_sensors.name,
    }
    if recordings and res.get("fall_codes"):
        ds = window_and_label(
            recordings, schema_sensors, res["window_len"], res["stride"], res["fall_codes"]
        )
        not_falls, falls = ds.class_counts()
        summary.update(windows=ds.n_windows, falls=falls, not_falls=not_falls)
    out = Path(args.out)
    write_json(out / "ingest_summary.json", summary)
    _manifest(args, res, started, inputs=[res["source"]], outputs=["ingest_summary.json"])
    _say(args, f"{len(recordings)} recording(s), {skipped} non-wrist file(s) skipped")
    return 0


def cmd_synth(args) -> int:
    started = utc_now_iso()
    res = _resolve(args)
    sensor_set = SensorSet.parse(res.get("model_sensors", "ABG"))
    ds = synth_generate(
        n_per_class=res["synth.n_per_class"],
        window_len=res["window_len"],
        sensor_set=sensor_set,
        seed=res["seed"],
        noise_std=res["synth.noise_std"],
    )
    header = "window,channel,label," + ",".join(f"t{k}" for k in range(ds.window_len))
    lines = [header]
    for w in range(ds.n_windows):
        for c, name in enumerate(sensor_set.channel_names):
            values = ",".join(repr(v) for v in ds.windows[w, c])
            lines.append(f"{w},{name},{ds.labels[w]},{values}")
    out = Path(args.out)
    atomic_write_text(out / "dataset.csv", "\n".join(lines) + "\n")
    not_falls, falls = ds.class_counts()
    write_json(out / "summary.json", {
        "windows": ds.n_windows, "falls": falls, "not_falls": not_falls,
        "channels": sensor_set.channel_count, "window_len": ds.window_len,
        "noise_std": res["synth.noise_std"],
    })
    _manifest(args, res, started, inputs=[], outputs=["dataset.csv", "summary.json"])
    _say(args, f"wrote {ds.n_windows} windows ({falls} falls) to {out / 'dataset.csv'}")
    return 0


def cmd_train(args) -> int:
    started = utc_now_iso()
    _require_source(args)
    res = _resolve(args)
    sensor_set = SensorSet.parse(res.get("model_sensors", "ABG"))
    train_ds, test_ds, meta = _build_dataset(res, sensor_set)
    topo = ModelTopology(
        input_channels=sensor_set.channel_count,
        lstm_units=res["model.lstm_units"],
        hidden_units=res["model.hidden_units"],
    )
    model = init_params(topo, sensor_set, res["seed"])
    best, tlog = train(model, train_ds, test_ds, _train_cfg(res))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(best, out / "model.json")
    atomic_write_text(out / "trainlog.csv", tlog.to_csv())
    from . import figures
    figures.training_figure(tlog, out / "training.png")
    _manifest(args, res, started,
              inputs=[res["source"]] if res["source"] != "synth" else [],
              outputs=["model.json", "trainlog.csv", "training.png"],
              extra={"dataset": meta, "best_epoch": tlog.best_epoch,
                     "best_test_acc": tlog.best_test_acc})
    _say(args, f"best test accuracy {tlog.best_test_acc:.4f} at epoch {tlog.best_epoch}; "
               f"model -> {out / 'model.json'}")
    return 0


def cmd_distill(args) -> int:
    started = utc_now_iso()
    _require_source(args)
    res = _resolve(args)
    teacher = load_model(args.teacher)
    student_sensors = (
        SensorSet.parse(res["model_sensors"]) if "model_sensors" in res else teacher.sensor_set
    )
    cfg = _distill_cfg(res, student_sensors)
    train_ds, test_ds, meta = _build_dataset(res, teacher.sensor_set)
    student, tlog = distill(teacher, train_ds, test_ds, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(student, out / "student.json")
    atomic_write_text(out / "trainlog.csv", tlog.to_csv())
    from . import figures
    figures.training_figure(tlog, out / "training.png")
    _manifest(args, res, started,
              inputs=[args.teacher] + ([res["source"]] if res["source"] != "synth" else []),
              outputs=["student.json", "trainlog.csv", "training.png"],
              extra={"dataset": meta, "distill": cfg.to_dict(),
                     "best_test_acc": tlog.best_test_acc})
    _say(args, f"student ({student_sensors.name}, "
               f"{student.topology.lstm_units}/{student.topology.hidden_units}) "
               f"best test accuracy {tlog.best_test_acc:.4f}")
    return 0


def _union(subsets: list) -> SensorSet:
    members = frozenset().union(*(s.members for s in subsets))
    return SensorSet(members)


def cmd_ablate(args) -> int:
    started = utc_now_iso()
    _require_source(args)
    res = _resolve(args)
    subsets = parse_subset_list(args.subsets) if args.subsets else all_sensor_sets()
    data_set = _union(subsets)
    train_ds, test_ds, meta = _build_dataset(res, data_set)
    topo = ModelTopology(
        input_channels=data_set.channel_count,
        lstm_units=res["model.lstm_units"],
        hidden_units=res["model.hidden_units"],
    )
    table = run_ablation(train_ds, test_ds, topo, _train_cfg(res), res["seed"], subsets)
    out = Path(args.out)
    atomic_write_text(out / "ablation.csv", table.to_csv())
    from . import figures
    figures.ablation_figure(table, out / "ablation.png")
    _manifest(args, res, started,
              inputs=[res["source"]] if res["source"] != "synth" else [],
              outputs=["ablation.csv", "ablation.png"],
              extra={"dataset": meta, "config_fingerprint": table.config_fingerprint})
    _say(args, table.to_text())
    return 0


def cmd_compare(args) -> int:
    started = utc_now_iso()
    _require_source(args)
    res = _resolve(args)
    from .distill import compare_three

    subsets = parse_subset_list(args.subsets) if args.subsets else all_sensor_sets()
    train_ds, test_ds, meta = _build_dataset(res, SensorSet.full())
    teacher_topo = ModelTopology(
        input_channels=SensorSet.full().channel_count,
        lstm_units=res["model.lstm_units"],
        hidden_units=res["model.hidden_units"],
    )
    report = compare_three(train_ds, test_ds, subsets, teacher_topo,
                           _distill_cfg(res, subsets[0]))
    out = Path(args.out)
    atomic_write_text(out / "comparison.csv", report.to_csv())
    atomic_write_text(out / "comparison_plot.csv", report.plot_data_csv())
    write_json(out / "comparison.json", report.to_dict())
    from . import figures
    figures.comparison_figure(report, out / "comparison.png")
    _manifest(args, res, started,
              inputs=[res["source"]] if res["source"] != "synth" else [],
              outputs=["comparison.csv", "comparison_plot.csv", "comparison.json",
                       "comparison.png"],
              extra={"dataset": meta})
    for row in report.rows:
        _say(args, f"{row.sensor_set.name}: big {row.big_acc:.4f}  small {row.small_acc:.4f}  "
                   f"kd {row.kd_acc:.4f}")
    return 0


def cmd_select(args) -> int:
    started = utc_now_iso()
    res = _resolve(args)
    sensor_spec, compute_spec = sensor_power_overrides(res)
    out = Path(args.out)
    inputs = []
    if args.candidates:
        report = _select_from_file(args, res, sensor_spec, compute_spec)
        inputs.append(args.candidates)
    else:
        _require_source(args)
        subsets = parse_subset_list(args.subsets) if args.subsets else all_sensor_sets()
        train_ds, test_ds, _meta = _build_dataset(res, SensorSet.full())
        teacher_topo = ModelTopology(
            input_channels=SensorSet.full().channel_count,
            lstm_units=res["model.lstm_units"],
            hidden_units=res["model.hidden_units"],
        )
        report = run_selection_loop(
            train_ds, test_ds, subsets, teacher_topo,
            _distill_cfg(res, subsets[0]), sensor_spec, compute_spec, args.floor,
        )
        if res["source"] != "synth":
            inputs.append(res["source"])
    write_json(out / "selection.json", report.to_dict())
    atomic_write_text(out / "selection.txt", report.to_text())
    from . import figures
    figures.selection_figure(report, out / "selection.png")
    _manifest(args, res, started, inputs=inputs,
              outputs=["selection.json", "selection.txt", "selection.png"])
    _say(args, report.to_text())
    return 0


def _select_from_file(args, res, sensor_spec, compute_spec):
    import json as _json

    try:
        doc = _json.loads(Path(args.candidates).read_text())
    except _json.JSONDecodeError as exc:
        raise DataError(f"{args.candidates}: not valid JSON: {exc}") from None
    rows = doc["candidates"] if isinstance(doc, dict) else doc
    candidates = []
    for row in rows:
        try:
            topo = ModelTopology(**row["topology"])
            subset = SensorSet.parse(row["sensor_set"])
            accuracy = float(row["accuracy"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"{args.candidates}: bad candidate entry: {exc}") from None
        power_mw = row.get("power_mw")
        if power_mw is None:
            power_mw = estimate_power(subset, topo, res["window_len"], sensor_spec, compute_spec)
        candidates.append(CandidateConfig(
            sensor_set=subset, topology=topo, accuracy=accuracy, power_mw=float(power_mw),
        ))
    report = select(candidates, args.floor)
    report.provenance = {"candidates_file": str(args.candidates)}
    return report


def cmd_bench(args) -> int:
    started = utc_now_iso()
    res = _resolve(args)
    inputs = []
    if args.model:
        model = load_model(args.model)
        inputs.append(args.model)
    else:
        # KD-student defaults: half the full widths, accelerometer only
        sensors = SensorSet.parse(getattr(args, "sensors", None) or "A")
        topo = ModelTopology(
            input_channels=sensors.channel_count,
            lstm_units=args.lstm_units or 256,
            hidden_units=args.hidden_units or 64,
        )
        model = init_params(topo, sensors, res["seed"])
    window_len = res["window_len"]
    report = bench_latency(model, window_len, args.trials, seed=res["seed"])
    out = Path(args.out)
    write_json(out / "latency.json", report.to_dict())
    from . import figures
    figures.latency_figure(report, out / "latency.png")
    _manifest(args, res, started, inputs=inputs, outputs=["latency.json", "latency.png"])
    _say(args, f"median {report.median_ms:.3f} ms over {report.n_trials} trials "
               f"({report.mac_count} MACs per window)")
    return 0


def cmd_infer(args) -> int:
    model = load_model(args.model)
    window = _read_window_csv(args.window_csv)
    if window.shape[0] != model.topology.input_channels:
        raise DataError(
            f"{args.window_csv}: {window.shape[0]} channel rows but the model "
            f"expects {model.topology.input_channels}"
        )
    p, _ = forward(model, window)
    label = 1 if p >= args.threshold else 0
    print(f"probability={p!r} label={label}")
    return 0


def _read_window_csv(path) -> np.ndarray:
    rows = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(cell) for cell in line.split(",")])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty window file")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise DataError(f"{path}: rows have differing lengths {sorted(lengths)}")
    return np.asarray(rows, dtype=np.float64)
