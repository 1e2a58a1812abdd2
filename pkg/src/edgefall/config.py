"""Key-value config file handling.

Format: one ``key = value`` pair per line, ``#`` comments, blank lines
ignored. Keys are dotted where grouped. CLI flags override file values,
which override built-in defaults; the run manifest records the fully
resolved result.

Recognized keys:
    sensors                      sensor columns present in trial CSVs (e.g. ABG)
    fall_codes                   comma list of activity codes labeled as falls
    window_len, stride           windowing parameters
    normalize                    true/false, z-score windows (default true)
    split.mode                   random | subject-holdout
    split.seed                   split RNG seed
    split.test_fraction          random-mode test share
    split.holdout_subjects       comma list of held-out subject ids
    train.epochs, train.batch_size, train.learning_rate,
    train.grad_clip_norm, train.shuffle, train.seed
    model.lstm_units, model.hidden_units
    distill.temperature, distill.alpha, distill.width_factor
    power.voltage                volts applied to every sensor
    power.duty.A / .G / .B       per-sensor duty cycles
    power.energy_per_mac         joules per multiply-accumulate
    power.inference_rate_hz      inferences per second
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError
from .sensors import SensorKind, SensorSet


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_str_list(s: str) -> tuple:
    return tuple(p.strip() for p in s.split(",") if p.strip())


_KEY_TYPES = {
    "sensors": str,
    "fall_codes": _parse_str_list,
    "window_len": int,
    "stride": int,
    "normalize": _parse_bool,
    "split.mode": str,
    "split.seed": int,
    "split.test_fraction": float,
    "split.holdout_subjects": _parse_str_list,
    "train.epochs": int,
    "train.batch_size": int,
    "train.learning_rate": float,
    "train.grad_clip_norm": float,
    "train.shuffle": _parse_bool,
    "train.seed": int,
    "model.lstm_units": int,
    "model.hidden_units": int,
    "distill.temperature": float,
    "distill.alpha": float,
    "distill.width_factor": float,
    "power.voltage": float,
    "power.duty.A": float,
    "power.duty.G": float,
    "power.duty.B": float,
    "power.energy_per_mac": float,
    "power.inference_rate_hz": float,
}


def load_config_file(path) -> dict:
    """Parse a key-value config file into typed values."""
    text = Path(path).read_text()
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _KEY_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _KEY_TYPES[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def sensor_power_overrides(values: dict):
    """Pull power.* keys into constructor kwargs for the power specs."""
    from .power import SensorPowerSpec, ComputePowerSpec

    voltages = {k: values.get("power.voltage", 3.3) for k in SensorKind}
    duties = {
        k: values.get(f"power.duty.{k.letter}", 1.0) for k in SensorKind
    }
    sensor_spec = SensorPowerSpec(voltages_v=voltages, duty_cycles=duties)
    compute_spec = ComputePowerSpec(
        energy_per_mac_j=values.get("power.energy_per_mac", 1e-10),
        inference_rate_hz=values.get("power.inference_rate_hz", 1.0),
    )
    return sensor_spec, compute_spec
