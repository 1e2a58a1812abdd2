"""Knowledge distillation into half-width, sensor-restricted students.

The teacher stays frozen and scores every training window on its full
channel set; the student sees only its own sensor slice. The loss blends
the hard binary cross-entropy with a temperature-softened cross-entropy
against the teacher's tempered probability, scaled by T^2 so the soft
gradient keeps its magnitude as the temperature changes:

    L = alpha * BCE(sigmoid(z_s), y)
        + (1 - alpha) * T^2 * BCE(sigmoid(z_s / T), target=sigmoid(z_t / T))
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import WindowedDataset
from .errors import ConfigError
from .model import LstmClassifier, ModelTopology, init_params, logits_batch
from .sensors import SensorSet
from .tensor import sigmoid
from .training import BCE_EPS, TrainConfig, TrainLog, train

# Envelope figures reported for the reference comparison: KD students land
# within 2 points of equal-size plain students and within 6 points of the
# full model; KD-AB reaches 89.52%, 2.76 points under its teacher. Kept as
# report annotations, never asserted against synthetic runs.
REFERENCE_COMPARISON = {
    "kd_minus_small_max": 0.02,
    "big_minus_kd_max": 0.06,
    "kd_ab_accuracy": 0.8952,
    "teacher_minus_kd_ab": 0.0276,
}


@dataclass
class DistillConfig:
    student_sensor_set: SensorSet
    temperature: float = 2.0
    alpha: float = 0.5
    width_factor: float = 0.5
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0,1], got {self.alpha}")
        if not 0.0 < self.width_factor <= 1.0:
            raise ConfigError(f"width_factor must be in (0,1], got {self.width_factor}")

    def to_dict(self) -> dict:
        return {
            "student_sensor_set": self.student_sensor_set.name,
            "temperature": self.temperature,
            "alpha": self.alpha,
            "width_factor": self.width_factor,
            "train": self.train.to_dict(),
        }


@dataclass
class ComparisonRow:
    sensor_set: SensorSet
    big_acc: float
    small_acc: float
    kd_acc: float

    @property
    def kd_minus_small(self) -> float:
        return self.kd_acc - self.small_acc

    @property
    def big_minus_kd(self) -> float:
        return self.big_acc - self.kd_acc


@dataclass
class ComparisonReport:
    rows: list
    seed: int
    config: dict

    def to_csv(self) -> str:
        lines = ["sensor_set,big_acc,small_acc,kd_acc,kd_minus_small,big_minus_kd"]
        for r in self.rows:
            lines.append(
                f"{r.sensor_set.name},{r.big_acc!r},{r.small_acc!r},{r.kd_acc!r},"
                f"{r.kd_minus_small!r},{r.big_minus_kd!r}"
            )
        return "\n".join(lines) + "\n"

    def plot_data_csv(self) -> str:
        """Three accuracy series over sensor sets, ready for plotting."""
        lines = ["sensor_set,big,small,kd"]
        for r in self.rows:
            lines.append(f"{r.sensor_set.name},{r.big_acc!r},{r.small_acc!r},{r.kd_acc!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "sensor_set": r.sensor_set.name,
                    "big_acc": r.big_acc,
                    "small_acc": r.small_acc,
                    "kd_acc": r.kd_acc,
                    "kd_minus_small": r.kd_minus_small,
                    "big_minus_kd": r.big_minus_kd,
                }
                for r in self.rows
            ],
            "seed": self.seed,
            "config": self.config,
            "paper_reference": REFERENCE_COMPARISON,
        }


def make_student(
    teacher_topology: ModelTopology, cfg: DistillConfig, seed: int
) -> LstmClassifier:
    """Fresh student: width_factor times the teacher's layer sizes, inputs
    from the student's sensor subset."""
    lstm_units = round(cfg.width_factor * teacher_topology.lstm_units)
    hidden_units = round(cfg.width_factor * teacher_topology.hidden_units)
    if lstm_units < 1 or hidden_units < 1:
        raise ConfigError(
            f"width_factor {cfg.width_factor} rounds a layer to zero units "
            f"(teacher {teacher_topology.lstm_units}/{teacher_topology.hidden_units})"
        )
    topo = ModelTopology(
        input_channels=cfg.student_sensor_set.channel_count,
        lstm_units=lstm_units,
        hidden_units=hidden_units,
    )
    return init_params(topo, cfg.student_sensor_set, seed)


def kd_loss(student_logit: float, teacher_logit: float, y: int, cfg: DistillConfig) -> float:
    """Scalar distillation loss for one window."""
    t = cfg.temperature
    p_hard = _clamped_sigmoid(student_logit)
    hard = -(y * math.log(p_hard) + (1 - y) * math.log(1.0 - p_hard))
    p_soft = _clamped_sigmoid(student_logit / t)
    q_soft = _clamped_sigmoid(teacher_logit / t)
    soft = -(q_soft * math.log(p_soft) + (1.0 - q_soft) * math.log(1.0 - p_soft))
    return cfg.alpha * hard + (1.0 - cfg.alpha) * t * t * soft


def _clamped_sigmoid(z: float) -> float:
    s = float(sigmoid(np.asarray([z]))[0])
    return min(max(s, BCE_EPS), 1.0 - BCE_EPS)


class KdObjective:
    """Batch objective for the trainer: blended hard/soft loss and its exact
    logit gradient alpha*(p - y) + (1-alpha)*T*(p_soft - q_soft)."""

    def __init__(self, teacher_logits: np.ndarray, cfg: DistillConfig):
        self.teacher_logits = teacher_logits
        self.alpha = cfg.alpha
        self.temperature = cfg.temperature

    def loss_and_dz(self, logits: np.ndarray, p: np.ndarray, y: np.ndarray, idx: np.ndarray):
        t = self.temperature
        z = logits[:, 0]
        zt = self.teacher_logits[idx]
        p_hard = np.clip(p[:, 0], BCE_EPS, 1.0 - BCE_EPS)
        hard = -(y * np.log(p_hard) + (1 - y) * np.log(1.0 - p_hard))
        p_soft = np.clip(sigmoid(z / t), BCE_EPS, 1.0 - BCE_EPS)
        q_soft = np.clip(sigmoid(zt / t), BCE_EPS, 1.0 - BCE_EPS)
        soft = -(q_soft * np.log(p_soft) + (1.0 - q_soft) * np.log(1.0 - p_soft))
        losses = self.alpha * hard + (1.0 - self.alpha) * t * t * soft
        dz = self.alpha * (p - y[:, None]) + (1.0 - self.alpha) * t * (p_soft - q_soft)[:, None]
        return losses, dz


def distill(
    teacher: LstmClassifier,
    train_ds_full: WindowedDataset,
    test_ds_full: WindowedDataset,
    cfg: DistillConfig,
) -> tuple[LstmClassifier, TrainLog]:
    """Train a student on the teacher's soft targets.

    Datasets must carry the teacher's full channel set; the student is
    trained and evaluated on its own channel slice. The teacher is only
    read. The student's init seed is cfg.train.seed, so alpha=1 reproduces
    plain training of the same model bit for bit.
    """
    if not cfg.student_sensor_set.issubset(teacher.sensor_set):
        raise ConfigError(
            f"student sensors {cfg.student_sensor_set.name} are not a subset "
            f"of the teacher's {teacher.sensor_set.name}"
        )
    for ds, name in ((train_ds_full, "train"), (test_ds_full, "test")):
        if ds.sensor_set.members != teacher.sensor_set.members:
            raise ConfigError(
                f"{name} dataset must carry the teacher's sensor set "
                f"{teacher.sensor_set.name}, got {ds.sensor_set.name}"
            )
    teacher_logits = logits_batch(teacher, train_ds_full.windows)
    student = make_student(teacher.topology, cfg, seed=cfg.train.seed)
    student_train = train_ds_full.restrict(cfg.student_sensor_set)
    student_test = test_ds_full.restrict(cfg.student_sensor_set)
    objective = KdObjective(teacher_logits, cfg)
    return train(student, student_train, student_test, cfg.train, objective=objective)


def compare_three(
    train_ds_full: WindowedDataset,
    test_ds_full: WindowedDataset,
    sensor_sets: list,
    teacher_topology: ModelTopology,
    cfg: DistillConfig,
) -> ComparisonReport:
    """The three-way comparison: full-width model, plain half-width model,
    and KD student, each trained per sensor subset.

    One teacher is trained on the full channel set and reused for every
    distillation; big/small baselines are trained per subset with seeds
    derived from the base seed.
    """
    from .evaluate import evaluate

    base_seed = cfg.train.seed
    teacher = init_params(teacher_topology, train_ds_full.sensor_set, base_seed)
    teacher, _ = train(teacher, train_ds_full, test_ds_full, cfg.train)

    rows = []
    for k, subset in enumerate(sensor_sets):
        seed_k = base_seed + 1000 * (k + 1)
        sliced_train = train_ds_full.restrict(subset)
        sliced_test = test_ds_full.restrict(subset)

        big_topo = ModelTopology(
            input_channels=subset.channel_count,
            lstm_units=teacher_topology.lstm_units,
            hidden_units=teacher_topology.hidden_units,
        )
        big_cfg = _reseed(cfg.train, seed_k)
        big, _ = train(init_params(big_topo, subset, seed_k), sliced_train, sliced_test, big_cfg)

        small_cfg_train = _reseed(cfg.train, seed_k + 1)
        small_cfg = DistillConfig(
            student_sensor_set=subset,
            temperature=cfg.temperature,
            alpha=cfg.alpha,
            width_factor=cfg.width_factor,
            train=small_cfg_train,
        )
        small = make_student(teacher_topology, small_cfg, seed=seed_k + 1)
        small, _ = train(small, sliced_train, sliced_test, small_cfg_train)

        kd_cfg = DistillConfig(
            student_sensor_set=subset,
            temperature=cfg.temperature,
            alpha=cfg.alpha,
            width_factor=cfg.width_factor,
            train=_reseed(cfg.train, seed_k + 2),
        )
        kd_student, _ = distill(teacher, train_ds_full, test_ds_full, kd_cfg)

        rows.append(ComparisonRow(
            sensor_set=subset,
            big_acc=evaluate(big, sliced_test).accuracy,
            small_acc=evaluate(small, sliced_test).accuracy,
            kd_acc=evaluate(kd_student, sliced_test).accuracy,
        ))
    return ComparisonReport(rows=rows, seed=base_seed, config=cfg.to_dict())


def _reseed(cfg: TrainConfig, seed: int) -> TrainConfig:
    from dataclasses import replace

    return replace(cfg, seed=seed)
