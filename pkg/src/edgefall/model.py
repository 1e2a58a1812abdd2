"""The classifier network: one LSTM layer, a ReLU dense layer, a sigmoid
output unit, evaluated over a (channels x T) window.

The LSTM cell is the standard formulation with a forget gate and no
peepholes. Gate blocks are stacked in the fixed order [input i, forget f,
cell-candidate g, output o] inside W_gates/U_gates/b_gates, which makes the
serialized layout unambiguous:

    i = sigmoid(W_i x + U_i h + b_i)      f = sigmoid(W_f x + U_f h + b_f)
    g = tanh   (W_g x + U_g h + b_g)      o = sigmoid(W_o x + U_o h + b_o)
    c_t = f * c_prev + i * g              h_t = o * tanh(c_t)

Internally the math runs over a batch axis; the public per-window
operations use a batch of one.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ShapeError,
    ShapeInconsistencyError,
    TraceMismatchError,
    TruncatedModelError,
    VersionMismatchError,
)
from .sensors import SensorSet
from .tensor import relu, sigmoid, tanh_vec

MODEL_FORMAT_VERSION = 1

GATE_ORDER = ("i", "f", "g", "o")


@dataclass(frozen=True)
class ModelTopology:
    input_channels: int
    lstm_units: int
    hidden_units: int
    output_units: int = 1

    def __post_init__(self):
        if self.output_units != 1:
            raise ShapeError(f"output_units must be 1, got {self.output_units}")
        if self.lstm_units < 1 or self.hidden_units < 1 or self.input_channels < 1:
            raise ShapeError(f"all layer sizes must be >= 1, got {self}")

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "lstm_units": self.lstm_units,
            "hidden_units": self.hidden_units,
            "output_units": self.output_units,
        }


# Fig-1 sizes of the full model.
TEACHER_LSTM_UNITS = 512
TEACHER_HIDDEN_UNITS = 128


def teacher_topology(sensor_set: SensorSet) -> ModelTopology:
    return ModelTopology(
        input_channels=sensor_set.channel_count,
        lstm_units=TEACHER_LSTM_UNITS,
        hidden_units=TEACHER_HIDDEN_UNITS,
    )


@dataclass
class LstmClassifier:
    """Full parameter set plus topology and sensor metadata."""

    topology: ModelTopology
    sensor_set: SensorSet
    w_gates: np.ndarray   # (4h, d)
    u_gates: np.ndarray   # (4h, h)
    b_gates: np.ndarray   # (4h,)
    w_dense1: np.ndarray  # (hidden, h)
    b_dense1: np.ndarray  # (hidden,)
    w_out: np.ndarray     # (1, hidden)
    b_out: np.ndarray     # (1,)
    seed: int | None = None

    def __post_init__(self):
        d, h, hid = (
            self.topology.input_channels,
            self.topology.lstm_units,
            self.topology.hidden_units,
        )
        if self.sensor_set.channel_count != d:
            raise ShapeError(
                f"sensor set {self.sensor_set.name} has {self.sensor_set.channel_count} "
                f"channels but topology expects {d}"
            )
        expected = {
            "w_gates": (4 * h, d),
            "u_gates": (4 * h, h),
            "b_gates": (4 * h,),
            "w_dense1": (hid, h),
            "b_dense1": (hid,),
            "w_out": (1, hid),
            "b_out": (1,),
        }
        for name, shape in expected.items():
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name} must have shape {shape}, got {arr.shape}")
            setattr(self, name, arr)

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        """Parameter tensors in the fixed serialization order."""
        return [
            ("w_gates", self.w_gates),
            ("u_gates", self.u_gates),
            ("b_gates", self.b_gates),
            ("w_dense1", self.w_dense1),
            ("b_dense1", self.b_dense1),
            ("w_out", self.w_out),
            ("b_out", self.b_out),
        ]

    def copy(self) -> "LstmClassifier":
        return copy.deepcopy(self)


@dataclass
class ForwardTrace:
    """Activations cached by forward() for backpropagation through time.

    Time-indexed arrays carry a leading batch axis of size one for the
    per-window API. ``h`` and ``c`` have T+1 entries (index 0 is the zero
    initial state); gate arrays have T.
    """

    window: np.ndarray
    gate_preacts: np.ndarray  # (T, B, 4h)
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    h: np.ndarray             # (T+1, B, h)
    c: np.ndarray             # (T+1, B, h)
    tanh_c: np.ndarray        # (T, B, h)
    dense_preact: np.ndarray  # (B, hidden)
    dense_act: np.ndarray     # (B, hidden)
    logit: np.ndarray         # (B, 1)
    probability: np.ndarray   # (B, 1)

    def __len__(self) -> int:
        return self.gate_preacts.shape[0]


def init_params(topology: ModelTopology, sensor_set: SensorSet, seed: int) -> LstmClassifier:
    """Glorot-uniform weights, zero biases except forget-gate bias = 1.

    Gate matrices use per-gate fan sizes: W blocks map d -> h, U blocks
    h -> h, so the bound is sqrt(6 / (fan_in + fan_out)) with those fans.
    """
    d, h, hid = topology.input_channels, topology.lstm_units, topology.hidden_units
    rng = np.random.default_rng(seed)

    def glorot(shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    b_gates = np.zeros(4 * h)
    b_gates[h:2 * h] = 1.0
    return LstmClassifier(
        topology=topology,
        sensor_set=sensor_set,
        w_gates=glorot((4 * h, d), d, h),
        u_gates=glorot((4 * h, h), h, h),
        b_gates=b_gates,
        w_dense1=glorot((hid, h), h, hid),
        b_dense1=np.zeros(hid),
        w_out=glorot((1, hid), hid, 1),
        b_out=np.zeros(1),
        seed=seed,
    )


def _step_batch(model: LstmClassifier, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """One cell step over a batch; returns (h, c, cache dict)."""
    h = model.topology.lstm_units
    s = x_t @ model.w_gates.T + h_prev @ model.u_gates.T + model.b_gates
    i = sigmoid(s[:, :h])
    f = sigmoid(s[:, h:2 * h])
    g = tanh_vec(s[:, 2 * h:3 * h])
    o = sigmoid(s[:, 3 * h:])
    c = f * c_prev + i * g
    tc = tanh_vec(c)
    h_new = o * tc
    return h_new, c, {"preact": s, "i": i, "f": f, "g": g, "o": o, "tanh_c": tc}


def lstm_cell_step(model: LstmClassifier, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """Single cell step on vectors; returns (h_t, c_t, gate_cache)."""
    d, h = model.topology.input_channels, model.topology.lstm_units
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    if x_t.shape != (d,):
        raise ShapeError(f"x_t must have shape ({d},), got {x_t.shape}")
    if h_prev.shape != (h,) or c_prev.shape != (h,):
        raise ShapeError(f"h_prev/c_prev must have shape ({h},), got {h_prev.shape}/{c_prev.shape}")
    h_new, c_new, cache = _step_batch(model, x_t[None], h_prev[None], c_prev[None])
    cache = {k: v[0] for k, v in cache.items()}
    return h_new[0], c_new[0], cache


def _forward_batch(model: LstmClassifier, x: np.ndarray) -> ForwardTrace:
    """Forward over a (B, T, d) batch; the trace keeps everything backward needs."""
    b, t_len, d = x.shape
    h_units = model.topology.lstm_units
    h = np.zeros((t_len + 1, b, h_units))
    c = np.zeros((t_len + 1, b, h_units))
    preacts = np.zeros((t_len, b, 4 * h_units))
    gi = np.zeros((t_len, b, h_units))
    gf = np.zeros((t_len, b, h_units))
    gg = np.zeros((t_len, b, h_units))
    go = np.zeros((t_len, b, h_units))
    tc = np.zeros((t_len, b, h_units))
    for t in range(t_len):
        h[t + 1], c[t + 1], cache = _step_batch(model, x[:, t, :], h[t], c[t])
        preacts[t] = cache["preact"]
        gi[t], gf[t], gg[t], go[t] = cache["i"], cache["f"], cache["g"], cache["o"]
        tc[t] = cache["tanh_c"]
    a1 = h[-1] @ model.w_dense1.T + model.b_dense1
    d1 = relu(a1)
    z = d1 @ model.w_out.T + model.b_out
    p = sigmoid(z)
    return ForwardTrace(
        window=x, gate_preacts=preacts, i=gi, f=gf, g=gg, o=go,
        h=h, c=c, tanh_c=tc, dense_preact=a1, dense_act=d1, logit=z, probability=p,
    )


def forward(model: LstmClassifier, window: np.ndarray) -> tuple[float, ForwardTrace]:
    """Run the network over one (channels x T) window from zero initial state."""
    window = np.asarray(window, dtype=np.float64)
    d = model.topology.input_channels
    if window.ndim != 2 or window.shape[0] != d:
        raise ShapeError(
            f"window must have shape ({d}, T), got {window.shape}"
        )
    trace = _forward_batch(model, np.ascontiguousarray(window.T)[None])
    return float(trace.probability[0, 0]), trace


def check_trace(model: LstmClassifier, window: np.ndarray, trace: ForwardTrace) -> None:
    """Raise TraceMismatchError unless the trace came from (model, window)."""
    window = np.asarray(window, dtype=np.float64)
    if trace.window.shape != (1, window.shape[1], window.shape[0]) or not np.array_equal(
        trace.window[0], window.T
    ):
        raise TraceMismatchError("trace does not match the given window")
    if trace.h.shape[2] != model.topology.lstm_units:
        raise TraceMismatchError("trace does not match the model topology")


def predict_label(model: LstmClassifier, window: np.ndarray, threshold: float = 0.5) -> int:
    """1 ("Fall") iff probability >= threshold; ties count as falls."""
    p, _ = forward(model, window)
    return 1 if p >= threshold else 0


def predict_proba_batch(model: LstmClassifier, windows: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Probabilities for an (n, channels, T) stack of windows."""
    windows = np.asarray(windows, dtype=np.float64)
    d = model.topology.input_channels
    if windows.ndim != 3 or windows.shape[1] != d:
        raise ShapeError(f"windows must have shape (n, {d}, T), got {windows.shape}")
    out = np.empty(windows.shape[0])
    for start in range(0, windows.shape[0], chunk):
        x = np.ascontiguousarray(windows[start:start + chunk].transpose(0, 2, 1))
        out[start:start + x.shape[0]] = _forward_batch(model, x).probability[:, 0]
    return out


def logits_batch(model: LstmClassifier, windows: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Pre-sigmoid logits for an (n, channels, T) stack of windows."""
    windows = np.asarray(windows, dtype=np.float64)
    out = np.empty(windows.shape[0])
    for start in range(0, windows.shape[0], chunk):
        x = np.ascontiguousarray(windows[start:start + chunk].transpose(0, 2, 1))
        out[start:start + x.shape[0]] = _forward_batch(model, x).logit[:, 0]
    return out


def count_macs(topology: ModelTopology, window_len: int) -> int:
    """Multiply-accumulates of one forward pass over a window of T steps:
    T*4h*(d+h+1) for the LSTM, hidden*(h+1) and (hidden+1) for the head."""
    d, h, hid = topology.input_channels, topology.lstm_units, topology.hidden_units
    return window_len * 4 * h * (d + h + 1) + hid * (h + 1) + (hid + 1)


def save_model(model: LstmClassifier, path) -> None:
    """Write the model as JSON; round-trips are bit-exact on all parameters."""
    from .io_utils import atomic_write_text

    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "topology": model.topology.to_dict(),
        "sensor_set": model.sensor_set.name,
        "seed": model.seed,
        "weights": {name: arr.tolist() for name, arr in model.param_items()},
    }
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    atomic_write_text(path, text + "\n")


def load_model(path) -> LstmClassifier:
    """Load a model file, with distinct errors for version, truncation and
    shape problems."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TruncatedModelError(f"{path}: truncated or malformed model file: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise TruncatedModelError(f"{path}: not a model file (no format_version)")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {doc['format_version']} "
            f"unsupported (expected {MODEL_FORMAT_VERSION})"
        )
    try:
        topo = ModelTopology(**doc["topology"])
        sensor_set = SensorSet.parse(doc["sensor_set"])
        weights = {
            name: np.asarray(doc["weights"][name], dtype=np.float64)
            for name, _ in _WEIGHT_FIELDS
        }
    except (KeyError, TypeError) as exc:
        raise TruncatedModelError(f"{path}: missing field in model file: {exc}") from None
    except (ShapeError, ValueError) as exc:
        raise ShapeInconsistencyError(f"{path}: {exc}") from None
    try:
        return LstmClassifier(
            topology=topo, sensor_set=sensor_set, seed=doc.get("seed"), **weights
        )
    except ShapeError as exc:
        raise ShapeInconsistencyError(f"{path}: {exc}") from None


_WEIGHT_FIELDS = [
    ("w_gates", 2), ("u_gates", 2), ("b_gates", 1),
    ("w_dense1", 2), ("b_dense1", 1), ("w_out", 2), ("b_out", 1),
]
