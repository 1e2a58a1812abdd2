"""Accuracy metrics, the sensor-ablation sweep, and the inference-latency
microbenchmark.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from dataclasses import dataclass, replace

import numpy as np

from .data import WindowedDataset
from .errors import ConfigError
from .model import (
    LstmClassifier,
    ModelTopology,
    count_macs,
    forward,
    init_params,
    predict_proba_batch,
)
from .sensors import SensorSet, all_sensor_sets
from .training import TrainConfig, train

# Reference accuracies reported for FallAllD wrist data, one row per sensor
# configuration; used to annotate reports and gate the optional
# reproduction test, never asserted on synthetic data.
REFERENCE_ABLATION = {
    "ABG": 0.9355,
    "AG": 0.8237,
    "BG": 0.8943,
    "AB": 0.9228,
    "A": 0.8039,
    "G": 0.7918,
    "B": 0.8809,
}

# Accuracy the dataset publication itself reports for its own LSTM baseline.
REFERENCE_DATASET_BASELINE = 0.8718


@dataclass
class EvalReport:
    accuracy: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_windows: int
    sensor_set: SensorSet
    topology: ModelTopology

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "n_windows": self.n_windows,
            "sensor_set": self.sensor_set.name,
            "topology": self.topology.to_dict(),
        }


@dataclass
class AblationTable:
    rows: list  # [(SensorSet, EvalReport)]
    seed: int
    config_fingerprint: str

    def to_csv(self) -> str:
        lines = ["sensors,accuracy"]
        for subset, report in self.rows:
            lines.append(f"{subset.name},{report.accuracy!r}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        width = max(len("sensors"), *(len(s.name) for s, _ in self.rows))
        lines = [f"{'sensors':<{width}}  accuracy", f"{'-' * width}  --------"]
        for subset, report in self.rows:
            lines.append(f"{subset.name:<{width}}  {report.accuracy:8.4f}")
        return "\n".join(lines) + "\n"

    def accuracy_of(self, name: str) -> float:
        for subset, report in self.rows:
            if subset.name == name:
                return report.accuracy
        raise KeyError(name)


@dataclass
class LatencyReport:
    window_len: int
    n_trials: int
    trials_ms: list
    min_ms: float
    median_ms: float
    p95_ms: float
    machine: str
    mac_count: int
    topology: ModelTopology

    def to_dict(self) -> dict:
        return {
            "window_len": self.window_len,
            "n_trials": self.n_trials,
            "trials_ms": self.trials_ms,
            "min_ms": self.min_ms,
            "median_ms": self.median_ms,
            "p95_ms": self.p95_ms,
            "machine": self.machine,
            "mac_count": self.mac_count,
            "topology": self.topology.to_dict(),
        }


def evaluate(model: LstmClassifier, test_ds: WindowedDataset, threshold: float = 0.5) -> EvalReport:
    """Per-window predictions against ground truth, with confusion counts."""
    if test_ds.n_windows == 0:
        raise ConfigError("cannot evaluate on an empty dataset")
    if test_ds.sensor_set.members != model.sensor_set.members:
        raise ConfigError(
            f"dataset sensors {test_ds.sensor_set.name} do not match "
            f"model sensors {model.sensor_set.name}"
        )
    p = predict_proba_batch(model, test_ds.windows)
    pred = (p >= threshold).astype(np.int64)
    y = test_ds.labels
    tp = int(((pred == 1) & (y == 1)).sum())
    fp = int(((pred == 1) & (y == 0)).sum())
    tn = int(((pred == 0) & (y == 0)).sum())
    fn = int(((pred == 0) & (y == 1)).sum())
    return EvalReport(
        accuracy=(tp + tn) / test_ds.n_windows,
        tp=tp, fp=fp, tn=tn, fn=fn,
        n_windows=test_ds.n_windows,
        sensor_set=model.sensor_set,
        topology=model.topology,
    )


def config_fingerprint(cfg: TrainConfig, topology: ModelTopology) -> str:
    doc = {"train": cfg.to_dict(), "topology": topology.to_dict()}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def run_ablation(
    train_ds: WindowedDataset,
    test_ds: WindowedDataset,
    topology: ModelTopology,
    train_cfg: TrainConfig,
    seed: int,
    subsets: list | None = None,
) -> AblationTable:
    """Train one model per sensor subset on channel-sliced data under an
    identical config, each with its own derived seed (base seed + row index).

    The datasets must carry all channels every requested subset needs.
    ``topology`` fixes the layer widths; input_channels is recomputed per
    subset.
    """
    subsets = subsets if subsets is not None else all_sensor_sets()
    rows = []
    for k, subset in enumerate(subsets):
        sub_seed = seed + k
        sliced_train = train_ds.restrict(subset)
        sliced_test = test_ds.restrict(subset)
        topo = ModelTopology(
            input_channels=subset.channel_count,
            lstm_units=topology.lstm_units,
            hidden_units=topology.hidden_units,
        )
        model = init_params(topo, subset, sub_seed)
        cfg = replace(train_cfg, seed=sub_seed)
        try:
            best, _ = train(model, sliced_train, sliced_test, cfg)
        except Exception as exc:
            exc.args = (f"ablation subset {subset.name}: {exc}",) + exc.args[1:]
            raise
        rows.append((subset, evaluate(best, sliced_test)))
    return AblationTable(
        rows=rows,
        seed=seed,
        config_fingerprint=config_fingerprint(train_cfg, topology),
    )


def bench_latency(
    model: LstmClassifier,
    window_len: int,
    n_trials: int,
    warmup: int = 5,
    seed: int = 0,
) -> LatencyReport:
    """Wall-clock times of repeated single-window forward passes.

    A fixed random window is reused for every call; warmup calls are not
    recorded. Uses the monotonic high-resolution timer.
    """
    if n_trials < 30:
        raise ConfigError(f"n_trials must be >= 30, got {n_trials}")
    rng = np.random.default_rng(seed)
    window = rng.standard_normal((model.topology.input_channels, window_len))
    for _ in range(warmup):
        forward(model, window)
    trials = []
    for _ in range(n_trials):
        t0 = time.perf_counter()
        forward(model, window)
        trials.append((time.perf_counter() - t0) * 1000.0)
    arr = np.asarray(trials)
    return LatencyReport(
        window_len=window_len,
        n_trials=n_trials,
        trials_ms=trials,
        min_ms=float(arr.min()),
        median_ms=float(np.median(arr)),
        p95_ms=float(np.percentile(arr, 95)),
        machine=f"{platform.platform()} / {platform.processor() or platform.machine()}",
        mac_count=count_macs(model.topology, window_len),
        topology=model.topology,
    )
