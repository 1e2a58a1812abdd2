"""Power estimation and sensor/model selection.

Average power of a configuration is modeled additively: each sensor draws
voltage * current * duty_cycle, and the controller draws
energy_per_mac * MACs-per-inference * inference rate. Voltage and duty
cycle are declared configuration (3.3 V, always-on by default); only the
operating currents come from the sensor datasheets (450 uA accelerometer,
0.6 mA gyroscope, 3.2 mA barometer). energy_per_mac defaults to 1e-10 J, a
placeholder an integrator must calibrate for their controller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .data import WindowedDataset
from .errors import ConfigError
from .model import ModelTopology, count_macs, init_params
from .sensors import SensorKind, SensorSet
from .training import train

DEFAULT_CURRENTS_A = {
    SensorKind.ACCELEROMETER: 450e-6,
    SensorKind.GYROSCOPE: 0.6e-3,
    SensorKind.BAROMETER: 3.2e-3,
}
DEFAULT_VOLTAGE_V = 3.3
DEFAULT_ENERGY_PER_MAC_J = 1e-10


def _default_voltages():
    return {k: DEFAULT_VOLTAGE_V for k in SensorKind}


def _default_duties():
    return {k: 1.0 for k in SensorKind}


@dataclass
class SensorPowerSpec:
    currents_a: dict = field(default_factory=lambda: dict(DEFAULT_CURRENTS_A))
    voltages_v: dict = field(default_factory=_default_voltages)
    duty_cycles: dict = field(default_factory=_default_duties)

    def __post_init__(self):
        for kind in SensorKind:
            if self.currents_a.get(kind, 0) <= 0:
                raise ConfigError(f"current for {kind.letter} must be > 0")
            if self.voltages_v.get(kind, 0) <= 0:
                raise ConfigError(f"voltage for {kind.letter} must be > 0")
            duty = self.duty_cycles.get(kind, 0)
            if not 0.0 < duty <= 1.0:
                raise ConfigError(f"duty cycle for {kind.letter} must be in (0,1], got {duty}")

    def to_dict(self) -> dict:
        return {
            "currents_a": {k.letter: v for k, v in self.currents_a.items()},
            "voltages_v": {k.letter: v for k, v in self.voltages_v.items()},
            "duty_cycles": {k.letter: v for k, v in self.duty_cycles.items()},
        }


@dataclass
class ComputePowerSpec:
    energy_per_mac_j: float = DEFAULT_ENERGY_PER_MAC_J
    inference_rate_hz: float = 1.0

    def __post_init__(self):
        # zero is allowed so pure-sensor power is expressible
        if self.energy_per_mac_j < 0 or self.inference_rate_hz < 0:
            raise ConfigError("compute power parameters must be >= 0")

    def to_dict(self) -> dict:
        return {
            "energy_per_mac_j": self.energy_per_mac_j,
            "inference_rate_hz": self.inference_rate_hz,
        }


@dataclass
class CandidateConfig:
    sensor_set: SensorSet
    topology: ModelTopology
    accuracy: float
    power_mw: float

    def to_dict(self) -> dict:
        return {
            "sensor_set": self.sensor_set.name,
            "topology": self.topology.to_dict(),
            "accuracy": self.accuracy,
            "power_mw": self.power_mw,
        }


@dataclass
class SelectionReport:
    candidates: list
    accuracy_floor: float
    chosen: CandidateConfig | None
    pareto_front: list
    skipped: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "candidates": [c.to_dict() for c in self.candidates],
            "accuracy_floor": self.accuracy_floor,
            "chosen": self.chosen.to_dict() if self.chosen else None,
            "pareto_front": [c.to_dict() for c in self.pareto_front],
            "skipped": self.skipped,
            "provenance": self.provenance,
        }

    def to_text(self) -> str:
        header = f"{'sensors':<8}{'accuracy':>10}{'power_mW':>12}  flags"
        lines = [header, "-" * len(header)]
        front = {id(c) for c in self.pareto_front}
        for c in sorted(self.candidates, key=lambda c: (c.power_mw, -c.accuracy, c.sensor_set.name)):
            flags = []
            if self.chosen is c:
                flags.append("chosen")
            if id(c) in front:
                flags.append("pareto")
            lines.append(
                f"{c.sensor_set.name:<8}{c.accuracy:>10.4f}{c.power_mw:>12.6f}  {','.join(flags)}"
            )
        lines.append(f"floor: {self.accuracy_floor}   chosen: "
                     f"{self.chosen.sensor_set.name if self.chosen else 'none'}")
        return "\n".join(lines) + "\n"


def estimate_power(
    sensor_set: SensorSet,
    topology: ModelTopology,
    window_len: int,
    sensors: SensorPowerSpec | None = None,
    compute: ComputePowerSpec | None = None,
) -> float:
    """Average draw in milliwatts: sensor V*I*duty summed over the subset
    plus energy_per_mac * MACs-per-window * inference rate."""
    sensors = sensors or SensorPowerSpec()
    compute = compute or ComputePowerSpec()
    watts = sum(
        sensors.voltages_v[k] * sensors.currents_a[k] * sensors.duty_cycles[k]
        for k in sensor_set
    )
    watts += compute.energy_per_mac_j * count_macs(topology, window_len) * compute.inference_rate_hz
    return watts * 1000.0


def _selection_key(c: CandidateConfig):
    # min power; ties: higher accuracy, fewer sensors, lexicographic name
    return (c.power_mw, -c.accuracy, len(c.sensor_set), c.sensor_set.name)


def pareto_front(candidates: list) -> list:
    """Candidates not dominated by any other (dominator: accuracy >= and
    power strictly <). Sweep over the power-sorted list; input order kept."""
    order = sorted(range(len(candidates)), key=lambda k: candidates[k].power_mw)
    best_acc_cheaper = -float("inf")
    on_front = [False] * len(candidates)
    pos = 0
    while pos < len(order):
        # group candidates of equal power: none dominates within the group
        group = [order[pos]]
        while (
            pos + len(group) < len(order)
            and candidates[order[pos + len(group)]].power_mw == candidates[group[0]].power_mw
        ):
            group.append(order[pos + len(group)])
        for k in group:
            if candidates[k].accuracy > best_acc_cheaper:
                on_front[k] = True
        best_acc_cheaper = max(best_acc_cheaper, max(candidates[k].accuracy for k in group))
        pos += len(group)
    return [c for k, c in enumerate(candidates) if on_front[k]]


def select(candidates: list, accuracy_floor: float) -> SelectionReport:
    """Lowest-power candidate meeting the accuracy floor; deterministic
    tie-breaks (accuracy, then fewer sensors, then name). With no eligible
    candidate the report is still produced with chosen = none."""
    if not candidates:
        raise ConfigError("candidate list must not be empty")
    eligible = [c for c in candidates if c.accuracy >= accuracy_floor]
    chosen = min(eligible, key=_selection_key) if eligible else None
    return SelectionReport(
        candidates=list(candidates),
        accuracy_floor=accuracy_floor,
        chosen=chosen,
        pareto_front=pareto_front(list(candidates)),
    )


def run_selection_loop(
    train_ds_full: WindowedDataset,
    test_ds_full: WindowedDataset,
    subsets_to_try: list,
    teacher_topology: ModelTopology,
    distill_cfg,
    sensor_spec: SensorPowerSpec,
    compute_spec: ComputePowerSpec,
    accuracy_floor: float,
) -> SelectionReport:
    """Design-space sweep: distill a student per subset, evaluate it,
    estimate its power, then pick the cheapest one above the floor.

    Per-subset training failures are recorded and skipped; selection runs
    over the survivors.
    """
    from dataclasses import replace as dc_replace

    from .distill import DistillConfig, distill
    from .evaluate import evaluate

    base_seed = distill_cfg.train.seed
    teacher = init_params(teacher_topology, train_ds_full.sensor_set, base_seed)
    teacher, _ = train(teacher, train_ds_full, test_ds_full, distill_cfg.train)

    candidates = []
    skipped = []
    seeds = {"teacher": base_seed}
    for k, subset in enumerate(subsets_to_try):
        sub_seed = base_seed + 1000 * (k + 1)
        cfg_k = DistillConfig(
            student_sensor_set=subset,
            temperature=distill_cfg.temperature,
            alpha=distill_cfg.alpha,
            width_factor=distill_cfg.width_factor,
            train=dc_replace(distill_cfg.train, seed=sub_seed),
        )
        seeds[subset.name] = sub_seed
        try:
            student, _ = distill(teacher, train_ds_full, test_ds_full, cfg_k)
        except Exception as exc:
            skipped.append({"sensor_set": subset.name, "error": str(exc)})
            continue
        report = evaluate(student, test_ds_full.restrict(subset))
        power_mw = estimate_power(
            subset, student.topology, train_ds_full.window_len, sensor_spec, compute_spec
        )
        candidates.append(CandidateConfig(
            sensor_set=subset,
            topology=student.topology,
            accuracy=report.accuracy,
            power_mw=power_mw,
        ))
    if not candidates:
        raise ConfigError("every candidate subset failed to train")
    result = select(candidates, accuracy_floor)
    result.skipped = skipped
    result.provenance = {
        "seeds": seeds,
        "distill_config": distill_cfg.to_dict(),
        "sensor_power": sensor_spec.to_dict(),
        "compute_power": compute_spec.to_dict(),
        "window_len": train_ds_full.window_len,
    }
    return result
