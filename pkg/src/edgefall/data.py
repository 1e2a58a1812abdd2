"""Dataset handling: CSV ingestion, stream alignment, windowing, labeling,
normalization, splitting, and a deterministic synthetic generator.

Input CSV schema (one file per trial): header ``t,ax,ay,az,gx,gy,gz,p``
with ``t`` in seconds; sensors missing from the device are declared in the
schema config (``sensors`` key) and their columns omitted. Slower sensors
(the barometer on real devices) leave their cells blank on rows where they
produced no sample. Filenames follow
``S<subject>_A<activity>_T<trial>_<placement>.csv``; only wrist files are
ingested.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .sensors import LAYOUT_ORDER, SensorKind, SensorSet

log = logging.getLogger(__name__)

_FILENAME_RE = re.compile(
    r"^S(?P<subject>[A-Za-z0-9]+)_A(?P<activity>[A-Za-z0-9]+)"
    r"_T(?P<trial>[A-Za-z0-9]+)_(?P<placement>[A-Za-z]+)\.csv$"
)

# Noise level at which the synthetic problem is still solvable but no longer
# separable by a single threshold; used by the "hard" end-to-end checks.
HARD_NOISE_STD = 1.0


@dataclass
class SensorStream:
    """Samples of one sensor: (channels, n) block plus its sampling rate."""

    values: np.ndarray
    rate_hz: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"sensor stream must be 2-D (channels, n), got {self.values.shape}")
        if self.rate_hz <= 0:
            raise DataError(f"sampling rate must be positive, got {self.rate_hz}")

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]


@dataclass
class Recording:
    """One wrist trial: per-sensor streams for a (subject, activity, trial)."""

    subject_id: str
    activity_code: str
    streams: dict
    placement: str = "wrist"

    def __post_init__(self):
        if self.placement != "wrist":
            raise DataError(f"only wrist recordings are supported, got {self.placement!r}")
        if not self.streams:
            raise DataError("recording has no sensor streams")

    @property
    def sensor_set(self) -> SensorSet:
        return SensorSet(frozenset(self.streams))

    def fastest_rate(self) -> float:
        return max(s.rate_hz for s in self.streams.values())


@dataclass
class NormalizationStats:
    """Per-channel mean and std (std already floored at 1e-8)."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float))


@dataclass
class WindowedDataset:
    """Fixed-length multi-channel windows with binary fall labels.

    ``windows`` has shape (n, channels, T); arrays are frozen read-only after
    construction so datasets can be shared across threads.
    """

    windows: np.ndarray
    labels: np.ndarray
    sensor_set: SensorSet
    window_len: int
    normalization: NormalizationStats | None = None
    subjects: np.ndarray | None = None

    def __post_init__(self):
        self.windows = np.ascontiguousarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.windows.ndim != 3:
            raise DataError(f"windows must be (n, channels, T), got {self.windows.shape}")
        n, c, t = self.windows.shape
        if t != self.window_len:
            raise DataError(f"window length {t} != declared {self.window_len}")
        if c != self.sensor_set.channel_count:
            raise DataError(
                f"{c} channels but sensor set {self.sensor_set.name} "
                f"needs {self.sensor_set.channel_count}"
            )
        if self.labels.shape != (n,):
            raise DataError(f"labels shape {self.labels.shape} != ({n},)")
        if n and not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be 0 (not fall) or 1 (fall)")
        if self.subjects is not None:
            self.subjects = np.asarray(self.subjects)
            if self.subjects.shape != (n,):
                raise DataError(f"subjects shape {self.subjects.shape} != ({n},)")
        for arr in (self.windows, self.labels, self.subjects):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]

    def class_counts(self) -> tuple[int, int]:
        falls = int(self.labels.sum())
        return self.n_windows - falls, falls

    def restrict(self, subset: SensorSet) -> "WindowedDataset":
        """Slice the channel dimension down to ``subset`` (layout order kept)."""
        if not subset.issubset(self.sensor_set):
            raise ConfigError(
                f"{subset.name} is not a subset of the dataset's sensors "
                f"{self.sensor_set.name}"
            )
        if subset.members == self.sensor_set.members:
            return self
        rows = [self.sensor_set.channel_names.index(nm) for nm in subset.channel_names]
        stats = self.normalization
        if stats is not None:
            stats = NormalizationStats(stats.mean[rows], stats.std[rows])
        return WindowedDataset(
            windows=self.windows[:, rows, :],
            labels=self.labels,
            sensor_set=subset,
            window_len=self.window_len,
            normalization=stats,
            subjects=self.subjects,
        )

    def take(self, indices: np.ndarray) -> "WindowedDataset":
        return WindowedDataset(
            windows=self.windows[indices],
            labels=self.labels[indices],
            sensor_set=self.sensor_set,
            window_len=self.window_len,
            normalization=self.normalization,
            subjects=None if self.subjects is None else self.subjects[indices],
        )


@dataclass
class SplitSpec:
    """How to partition a dataset into train and test."""

    mode: str = "random"
    test_fraction: float = 0.25
    holdout_subjects: tuple = ()
    seed: int = 42

    def __post_init__(self):
        if self.mode not in ("random", "subject-holdout"):
            raise ConfigError(f"unknown split mode {self.mode!r}")
        if self.mode == "random" and not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must be in (0,1), got {self.test_fraction}")
        if self.mode == "subject-holdout" and not self.holdout_subjects:
            raise ConfigError("subject-holdout split needs holdout_subjects")
        self.holdout_subjects = tuple(str(s) for s in self.holdout_subjects)


class IngestResult(NamedTuple):
    recordings: list
    skipped_non_wrist: int


@dataclass
class IngestSchema:
    """Which sensors the trial CSVs carry (the sidecar schema declaration)."""

    sensors: SensorSet = field(default_factory=SensorSet.full)

    @property
    def required_columns(self) -> tuple[str, ...]:
        return ("t",) + self.sensors.channel_names


def ingest_csv(root_path, schema: IngestSchema | None = None) -> IngestResult:
    """Read every trial CSV under ``root_path`` into Recordings.

    Non-wrist files are skipped (counted in the result); an empty directory
    yields an empty list with a logged warning.
    """
    schema = schema or IngestSchema()
    root = Path(root_path)
    if not root.is_dir():
        raise DataError(f"dataset directory not found: {root}")
    recordings = []
    skipped = 0
    files = sorted(root.glob("*.csv"))
    for path in files:
        m = _FILENAME_RE.match(path.name)
        if m is None:
            raise DataError(
                f"{path}: filename does not match S<subject>_A<activity>_T<trial>_<placement>.csv"
            )
        if m.group("placement").lower() != "wrist":
            skipped += 1
            continue
        recordings.append(
            _parse_trial_file(path, schema, m.group("subject"), m.group("activity"))
        )
    if skipped:
        log.warning("skipped %d non-wrist file(s) under %s", skipped, root)
    if not files:
        log.warning("no CSV files found under %s", root)
    return IngestResult(recordings, skipped)


def _parse_trial_file(path: Path, schema: IngestSchema, subject: str, activity: str) -> Recording:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}:1: empty file") from None
        header = [h.strip() for h in header]
        expected = list(schema.required_columns)
        for col in expected:
            if col not in header:
                raise DataError(f"{path}: schema error: missing required column {col!r}")
        for col in header:
            if col not in expected:
                raise DataError(f"{path}: schema error: unexpected column {col!r}")
        col_of = {name: header.index(name) for name in header}

        times: list[float] = []
        raw: dict[SensorKind, list[list[float]]] = {k: [] for k in schema.sensors}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            times.append(_parse_float(row[col_of["t"]], path, lineno, "t"))
            for kind in schema.sensors:
                cells = [row[col_of[nm]].strip() for nm in kind.channel_names]
                if all(cells):
                    raw[kind].append(
                        [_parse_float(c, path, lineno, nm)
                         for c, nm in zip(cells, kind.channel_names)]
                    )
                elif any(cells):
                    raise DataError(
                        f"{path}:{lineno}: sensor {kind.letter} has a partially blank sample"
                    )

    if len(times) < 2:
        raise DataError(f"{path}: needs at least 2 sample rows")
    t = np.asarray(times)
    if not (np.diff(t) > 0).all():
        raise DataError(f"{path}: timestamps must be strictly increasing")
    duration = t[-1] - t[0]
    row_rate = (len(t) - 1) / duration

    streams = {}
    for kind in schema.sensors:
        samples = raw[kind]
        if not samples:
            raise DataError(f"{path}: sensor {kind.letter} has no samples")
        values = np.asarray(samples, dtype=np.float64).T
        rate = row_rate * len(samples) / len(t)
        streams[kind] = SensorStream(values=values, rate_hz=rate)
    return Recording(subject_id=subject, activity_code=activity, streams=streams)


def _parse_float(cell: str, path: Path, lineno: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"{path}:{lineno}: non-numeric value {cell!r} in column {column!r}") from None


def align_streams(recording: Recording, target_rate_hz: float) -> np.ndarray:
    """Bring all of a recording's streams to the fastest rate.

    Slower streams are upsampled by hold-last-value (causal: at each output
    tick the most recent available sample is repeated). Returns a
    (channels, N) block in layout order, N the fastest stream's length.
    """
    fastest = recording.fastest_rate()
    if abs(target_rate_hz - fastest) > 1e-9 * max(1.0, fastest):
        raise ConfigError(
            f"target rate {target_rate_hz} Hz must equal the fastest sensor rate {fastest} Hz"
        )
    n_out = max(
        s.n_samples for s in recording.streams.values()
        if abs(s.rate_hz - fastest) <= 1e-9 * fastest
    )
    blocks = []
    for kind in LAYOUT_ORDER:
        if kind not in recording.streams:
            continue
        stream = recording.streams[kind]
        if stream.n_samples == 0:
            raise DataError(f"sensor {kind.letter}: empty stream cannot be aligned")
        ratio = target_rate_hz / stream.rate_hz
        idx = np.floor(np.arange(n_out) / ratio + 1e-9).astype(int)
        idx = np.minimum(idx, stream.n_samples - 1)
        blocks.append(stream.values[:, idx])
    return np.vstack(blocks)


def window_and_label(
    recordings: Sequence[Recording],
    sensor_set: SensorSet,
    window_len: int,
    stride: int,
    fall_code_set: Iterable[str],
) -> WindowedDataset:
    """Slide fixed-length windows over each recording and label them.

    A window is labeled 1 iff its recording's activity code is in
    ``fall_code_set``. Recordings shorter than one window are skipped (the
    count is logged).
    """
    if window_len < 2:
        raise ConfigError(f"window_len must be >= 2, got {window_len}")
    if not 1 <= stride <= window_len:
        raise ConfigError(f"stride must be in [1, window_len], got {stride}")
    fall_codes = {str(c) for c in fall_code_set}
    if not fall_codes:
        raise ConfigError("fall_code_set must not be empty")

    windows, labels, subjects = [], [], []
    too_short = 0
    for rec in recordings:
        for kind in sensor_set:
            if kind not in rec.streams:
                raise ConfigError(
                    f"recording S{rec.subject_id}_A{rec.activity_code} lacks sensor "
                    f"{kind.letter} required by sensor set {sensor_set.name}"
                )
        block = align_streams(rec, rec.fastest_rate())
        rows = [rec.sensor_set.channel_names.index(nm) for nm in sensor_set.channel_names]
        block = block[rows, :]
        n = block.shape[1]
        if n < window_len:
            too_short += 1
            continue
        label = 1 if str(rec.activity_code) in fall_codes else 0
        for start in range(0, n - window_len + 1, stride):
            windows.append(block[:, start:start + window_len])
            labels.append(label)
            subjects.append(rec.subject_id)
    if too_short:
        log.warning("skipped %d recording(s) shorter than one window", too_short)

    c = sensor_set.channel_count
    win_arr = (
        np.stack(windows) if windows else np.empty((0, c, window_len), dtype=np.float64)
    )
    return WindowedDataset(
        windows=win_arr,
        labels=np.asarray(labels, dtype=np.int64),
        sensor_set=sensor_set,
        window_len=window_len,
        subjects=np.asarray(subjects) if subjects else np.asarray([], dtype=str),
    )


def normalize(ds: WindowedDataset, stats: NormalizationStats | None = None) -> WindowedDataset:
    """Per-channel z-score. Without ``stats`` they are computed from ``ds``
    (training side); with ``stats`` they are applied as-is (test side).

    Uses the population std with a floor of 1e-8, so constant channels map
    to all zeros instead of dividing by zero.
    """
    if stats is None:
        mean = ds.windows.mean(axis=(0, 2))
        std = np.maximum(ds.windows.std(axis=(0, 2)), 1e-8)
        stats = NormalizationStats(mean=mean, std=std)
    scaled = (ds.windows - stats.mean[None, :, None]) / stats.std[None, :, None]
    return replace(ds, windows=scaled, normalization=stats)


def split(ds: WindowedDataset, spec: SplitSpec) -> tuple[WindowedDataset, WindowedDataset]:
    """Deterministic train/test partition per the spec'd mode and seed."""
    n = ds.n_windows
    if spec.mode == "random":
        rng = np.random.default_rng(spec.seed)
        perm = rng.permutation(n)
        n_test = int(round(n * spec.test_fraction))
        test_idx = np.sort(perm[:n_test])
        train_idx = np.sort(perm[n_test:])
    else:
        if ds.subjects is None or ds.n_windows == 0:
            raise ConfigError("subject-holdout split needs a dataset with subject ids")
        present = set(str(s) for s in ds.subjects)
        missing = [s for s in spec.holdout_subjects if s not in present]
        if missing:
            raise ConfigError(f"held-out subject(s) absent from data: {', '.join(missing)}")
        mask = np.isin(ds.subjects.astype(str), list(spec.holdout_subjects))
        test_idx = np.flatnonzero(mask)
        train_idx = np.flatnonzero(~mask)
    return ds.take(train_idx), ds.take(test_idx)


def synth_generate(
    n_per_class: int,
    window_len: int,
    sensor_set: SensorSet,
    seed: int,
    noise_std: float,
    signal_sensors: SensorSet | None = None,
) -> WindowedDataset:
    """Deterministic synthetic dataset, no external files needed.

    Falls are a short high-magnitude accelerometer spike, a gyroscope burst
    and a monotone barometer pressure step at a shared event time; ADLs are
    low-amplitude periodic motion. Gaussian noise of ``noise_std`` is added
    to every channel (``HARD_NOISE_STD`` is the documented hard setting).
    With ``noise_std=0`` a threshold on peak accelerometer magnitude
    separates the classes perfectly.

    ``signal_sensors`` limits which sensors carry class-dependent signal;
    the rest become pure noise. All seven channels are always drawn
    internally, so the same seed yields consistent data across ``sensor_set``
    and ``noise_std`` choices.
    """
    if n_per_class < 1:
        raise ConfigError(f"n_per_class must be >= 1, got {n_per_class}")
    if window_len < 2:
        raise ConfigError(f"window_len must be >= 2, got {window_len}")
    if signal_sensors is None:
        signal_sensors = SensorSet.full()
    rng = np.random.default_rng(seed)
    t = np.arange(window_len, dtype=np.float64)

    def adl_window() -> np.ndarray:
        w = np.zeros((7, window_len))
        for ch in range(6):
            amp = rng.uniform(0.15, 0.45) if ch < 3 else rng.uniform(0.1, 0.4)
            freq = rng.uniform(1.0, 3.0)
            phase = rng.uniform(0.0, 2 * np.pi)
            w[ch] = amp * np.sin(2 * np.pi * freq * t / window_len + phase)
        w[6] = 0.05 * np.sin(2 * np.pi * t / window_len + rng.uniform(0.0, 2 * np.pi))
        return w

    def fall_window() -> np.ndarray:
        w = np.zeros((7, window_len))
        center = rng.uniform(window_len * 0.3, window_len * 0.7)
        # accel: quiet motion plus an impact spike along a random direction
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        magnitude = rng.uniform(3.0, 5.0)
        spike_width = rng.uniform(0.8, 1.5)
        bump = np.exp(-((t - center) ** 2) / (2 * spike_width**2))
        for ch in range(3):
            w[ch] = 0.1 * np.sin(2 * np.pi * rng.uniform(1.0, 3.0) * t / window_len)
            w[ch] += magnitude * direction[ch] * bump
        # gyro: rotation burst around the impact
        for ch in range(3, 6):
            burst_amp = rng.uniform(1.5, 3.0)
            burst = np.exp(-((t - center) ** 2) / (2 * rng.uniform(1.5, 2.5) ** 2))
            w[ch] = burst_amp * burst * np.sin(2 * np.pi * rng.uniform(2.0, 4.0) * t / window_len)
        # barometer: monotone pressure step as altitude drops
        step = rng.uniform(1.0, 2.0)
        slope = rng.uniform(1.0, 2.0)
        w[6] = step / (1.0 + np.exp(-(t - center) / slope))
        return w

    windows = []
    labels = []
    for make, label in ((adl_window, 0), (fall_window, 1)):
        for _ in range(n_per_class):
            w = make()
            for kind in LAYOUT_ORDER:
                if kind not in signal_sensors:
                    sl = SensorSet.of(kind).channel_indices()
                    w[list(sl), :] = 0.0
            w = w + noise_std * rng.standard_normal((7, window_len))
            windows.append(w)
            labels.append(label)

    full = np.stack(windows)
    rows = list(sensor_set.channel_indices())
    return WindowedDataset(
        windows=full[:, rows, :],
        labels=np.asarray(labels, dtype=np.int64),
        sensor_set=sensor_set,
        window_len=window_len,
    )
