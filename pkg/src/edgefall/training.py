"""Supervised training: binary cross-entropy, backpropagation through time,
Adam with gradient clipping, and a finite-difference gradient checker.

Gradients flow backwards through the dense head into h_T, then through the
cell recurrence. With s the gate pre-activations and dc the running
cell-state gradient:

    do = dh * tanh(c_t)          dc += dh * o * (1 - tanh(c_t)^2)
    di = dc * g    df = dc * c_prev    dg = dc * i    dc_prev = dc * f
    ds_i = di * i(1-i)   ds_f = df * f(1-f)   ds_g = dg * (1-g^2)   ds_o = do * o(1-o)
    dW += ds^T x_t   dU += ds^T h_prev   db += sum(ds)   dh_prev = ds U
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import WindowedDataset
from .errors import ConfigError, NumericalAbort, TraceMismatchError
from .model import (
    ForwardTrace,
    LstmClassifier,
    _forward_batch,
    check_trace,
    forward,
    predict_proba_batch,
)
from .tensor import sigmoid

BCE_EPS = 1e-12


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    grad_clip_norm: float = 5.0
    seed: int = 42
    shuffle: bool = True

    def __post_init__(self):
        # learning_rate 0 is allowed: it makes "training is a no-op" testable.
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        b1, b2 = self.adam_betas
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise ConfigError(f"adam betas must be in (0,1), got {self.adam_betas}")
        if self.grad_clip_norm <= 0:
            raise ConfigError(f"grad_clip_norm must be > 0, got {self.grad_clip_norm}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "adam_betas": list(self.adam_betas),
            "grad_clip_norm": self.grad_clip_norm,
            "seed": self.seed,
            "shuffle": self.shuffle,
        }


@dataclass
class Gradients:
    """One tensor per model parameter tensor, same shapes and order."""

    w_gates: np.ndarray
    u_gates: np.ndarray
    b_gates: np.ndarray
    w_dense1: np.ndarray
    b_dense1: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    @classmethod
    def zeros_like(cls, model: LstmClassifier) -> "Gradients":
        return cls(*(np.zeros_like(arr) for _, arr in model.param_items()))

    def items(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in
                ("w_gates", "u_gates", "b_gates", "w_dense1", "b_dense1", "w_out", "b_out")]

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float((a * a).sum()) for _, a in self.items())))


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float
    seconds: float


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_test_acc: float = -1.0

    def to_csv(self) -> str:
        lines = ["epoch,loss,train_acc,test_acc,seconds"]
        for e in self.epochs:
            lines.append(f"{e.epoch},{e.loss!r},{e.train_acc!r},{e.test_acc!r},{e.seconds!r}")
        return "\n".join(lines) + "\n"


def bce_loss(p: float, y: int) -> float:
    """Binary cross-entropy with the probability clamped to [eps, 1-eps]."""
    p = min(max(p, BCE_EPS), 1.0 - BCE_EPS)
    return float(-(y * np.log(p) + (1 - y) * np.log(1.0 - p)))


def _bce_loss_vec(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return -(y * np.log(p) + (1 - y) * np.log(1.0 - p))


def _backward_batch(model: LstmClassifier, trace: ForwardTrace, dz: np.ndarray) -> Gradients:
    """BPTT given dL/dz (the logit gradient) of shape (B, 1)."""
    grads = Gradients.zeros_like(model)
    x = trace.window
    t_len = len(trace)

    grads.w_out += dz.T @ trace.dense_act
    grads.b_out += dz.sum(axis=0)
    dd1 = dz @ model.w_out
    da1 = dd1 * (trace.dense_preact > 0)
    grads.w_dense1 += da1.T @ trace.h[-1]
    grads.b_dense1 += da1.sum(axis=0)

    dh = da1 @ model.w_dense1
    dc = np.zeros_like(dh)
    h_units = model.topology.lstm_units
    for t in range(t_len - 1, -1, -1):
        i, f, g, o = trace.i[t], trace.f[t], trace.g[t], trace.o[t]
        tc = trace.tanh_c[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        ds = np.empty((dh.shape[0], 4 * h_units))
        ds[:, :h_units] = (dc * g) * i * (1.0 - i)
        ds[:, h_units:2 * h_units] = (dc * trace.c[t]) * f * (1.0 - f)
        ds[:, 2 * h_units:3 * h_units] = (dc * i) * (1.0 - g * g)
        ds[:, 3 * h_units:] = do * o * (1.0 - o)
        grads.w_gates += ds.T @ x[:, t, :]
        grads.u_gates += ds.T @ trace.h[t]
        grads.b_gates += ds.sum(axis=0)
        dh = ds @ model.u_gates
        dc = dc * f
    return grads


def backward(
    model: LstmClassifier, window: np.ndarray, y: int, trace: ForwardTrace
) -> tuple[float, Gradients]:
    """Exact BCE gradients for one window via BPTT over all T steps.

    The trace must come from forward() on the same model and window;
    anything else raises TraceMismatchError.
    """
    check_trace(model, window, trace)
    p = float(trace.probability[0, 0])
    loss = bce_loss(p, y)
    dz = trace.probability - float(y)  # d(BCE o sigmoid)/dz
    return loss, _backward_batch(model, trace, dz)


def clip_gradients(grads: Gradients, max_norm: float) -> float:
    """Scale all tensors so the global norm is at most max_norm; returns the
    pre-clip norm."""
    norm = grads.global_norm()
    if norm > max_norm:
        scale = max_norm / norm
        for _, arr in grads.items():
            arr *= scale
    return norm


class AdamState:
    """Per-tensor first/second moment accumulators with bias correction."""

    def __init__(self, model: LstmClassifier, betas: tuple, eps: float = 1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(arr) for name, arr in model.param_items()}
        self.v = {name: np.zeros_like(arr) for name, arr in model.param_items()}

    def update(self, model: LstmClassifier, grads: Gradients, lr: float) -> None:
        self.t += 1
        for name, g in grads.items():
            m = self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            v = self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            m_hat = m / (1 - self.b1**self.t)
            v_hat = v / (1 - self.b2**self.t)
            getattr(model, name)[...] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


class BceObjective:
    """Plain supervised objective: per-window loss and logit gradient."""

    def loss_and_dz(self, logits: np.ndarray, p: np.ndarray, y: np.ndarray, idx: np.ndarray):
        losses = _bce_loss_vec(p[:, 0], y)
        dz = p - y[:, None]
        return losses, dz


def _dataset_accuracy(model: LstmClassifier, ds: WindowedDataset) -> float:
    p = predict_proba_batch(model, ds.windows)
    return float(((p >= 0.5).astype(int) == ds.labels).mean())


def train(
    model: LstmClassifier,
    train_ds: WindowedDataset,
    test_ds: WindowedDataset,
    cfg: TrainConfig,
    objective=None,
) -> tuple[LstmClassifier, TrainLog]:
    """Adam training with mean-reduced batch gradients and global-norm
    clipping; deterministic for a fixed (cfg, data) pair.

    The input model is not mutated. Returns the snapshot with the best test
    accuracy (earliest epoch on ties) plus the per-epoch log.
    """
    if train_ds.n_windows == 0 or test_ds.n_windows == 0:
        raise ConfigError("train and test datasets must be nonempty")
    if train_ds.sensor_set.members != model.sensor_set.members:
        raise ConfigError(
            f"dataset sensors {train_ds.sensor_set.name} do not match "
            f"model sensors {model.sensor_set.name}"
        )
    objective = objective or BceObjective()
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    adam = AdamState(model, cfg.adam_betas)
    log = TrainLog()
    best: LstmClassifier | None = None

    x_all = np.ascontiguousarray(train_ds.windows.transpose(0, 2, 1))
    y_all = train_ds.labels.astype(np.float64)
    n = train_ds.n_windows

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        batch_losses = []
        for b_idx, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            trace = _forward_batch(model, x_all[idx])
            losses, dz = objective.loss_and_dz(
                trace.logit, trace.probability, y_all[idx], idx
            )
            batch_loss = float(losses.mean())
            if not np.isfinite(batch_loss):
                raise NumericalAbort(
                    f"non-finite loss at epoch {epoch}, batch {b_idx}", epoch, b_idx
                )
            batch_losses.append(batch_loss)
            grads = _backward_batch(model, trace, dz / len(idx))
            clip_gradients(grads, cfg.grad_clip_norm)
            adam.update(model, grads, cfg.learning_rate)
        train_acc = _dataset_accuracy(model, train_ds)
        test_acc = _dataset_accuracy(model, test_ds)
        log.epochs.append(EpochStats(
            epoch=epoch,
            loss=float(np.mean(batch_losses)),
            train_acc=train_acc,
            test_acc=test_acc,
            seconds=time.perf_counter() - started,
        ))
        if test_acc > log.best_test_acc:
            log.best_test_acc = test_acc
            log.best_epoch = epoch
            best = model.copy()
    assert best is not None
    return best, log


@dataclass
class GradCheckReport:
    per_param: dict
    max_rel_err: float
    worst_param: str
    delta: float
    tolerance: float
    passed: bool

    def failures(self) -> list[str]:
        return [k for k, v in self.per_param.items() if v > self.tolerance]


def grad_check(
    model: LstmClassifier,
    window: np.ndarray,
    y: int,
    delta: float = 1e-5,
    tolerance: float = 1e-4,
    analytic: Gradients | None = None,
) -> GradCheckReport:
    """Compare BPTT gradients against central finite differences.

    Perturbs every parameter entry, so only sensible for tiny models.
    ``analytic`` substitutes externally supplied gradients (fault injection
    or debugging); by default backward() is used.
    """
    if analytic is None:
        _, trace = forward(model, window)
        _, analytic = backward(model, window, y, trace)
    work = model.copy()
    per_param = {}
    for name, arr in work.param_items():
        g_ana = getattr(analytic, name)
        worst = 0.0
        flat = arr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + delta
            lp = _loss_of(work, window, y)
            flat[k] = orig - delta
            lm = _loss_of(work, window, y)
            flat[k] = orig
            g_num = (lp - lm) / (2 * delta)
            g_a = float(g_ana.reshape(-1)[k])
            denom = max(abs(g_a), abs(g_num), 1e-6)
            worst = max(worst, abs(g_a - g_num) / denom)
        per_param[name] = worst
    worst_param = max(per_param, key=per_param.get)
    max_err = per_param[worst_param]
    return GradCheckReport(
        per_param=per_param,
        max_rel_err=max_err,
        worst_param=worst_param,
        delta=delta,
        tolerance=tolerance,
        passed=max_err <= tolerance,
    )


def _loss_of(model: LstmClassifier, window: np.ndarray, y: int) -> float:
    p, _ = forward(model, window)
    return bce_loss(p, y)
