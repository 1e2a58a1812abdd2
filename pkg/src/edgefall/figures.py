"""Figure rendering for the report-producing commands.

Every figure lands next to its delimited output as a PNG. Rendering uses
the Agg backend so it works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_DPI = 150


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def ablation_figure(table, path) -> None:
    """Bar chart of accuracy per sensor configuration."""
    names = [subset.name for subset, _ in table.rows]
    accs = [report.accuracy for _, report in table.rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, accs, color="#4878cf")
    ax.set_xlabel("sensor configuration")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    for x, a in enumerate(accs):
        ax.text(x, a + 0.01, f"{a:.3f}", ha="center", fontsize=8)
    _save(fig, path)


def comparison_figure(report, path) -> None:
    """Three accuracy series (full, small, KD) over sensor sets."""
    names = [r.sensor_set.name for r in report.rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(names, [r.big_acc for r in report.rows], "o-", label="big")
    ax.plot(names, [r.small_acc for r in report.rows], "s--", label="small")
    ax.plot(names, [r.kd_acc for r in report.rows], "d-.", label="KD")
    ax.set_xlabel("sensor type")
    ax.set_ylabel("model prediction accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    _save(fig, path)


def selection_figure(report, path) -> None:
    """Accuracy vs power scatter with the Pareto front and chosen config."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    xs = [c.power_mw for c in report.candidates]
    ys = [c.accuracy for c in report.candidates]
    ax.scatter(xs, ys, color="#999999", label="candidates", zorder=2)
    front = sorted(report.pareto_front, key=lambda c: c.power_mw)
    if front:
        ax.plot(
            [c.power_mw for c in front], [c.accuracy for c in front],
            "o-", color="#d65f5f", label="pareto front", zorder=3,
        )
    if report.chosen is not None:
        ax.scatter(
            [report.chosen.power_mw], [report.chosen.accuracy],
            marker="*", s=220, color="#2ca02c", label="chosen", zorder=4,
        )
    ax.axhline(report.accuracy_floor, color="#555555", ls=":", lw=1, label="accuracy floor")
    for c in report.candidates:
        ax.annotate(c.sensor_set.name, (c.power_mw, c.accuracy),
                    textcoords="offset points", xytext=(4, 4), fontsize=8)
    ax.set_xlabel("power (mW)")
    ax.set_ylabel("accuracy")
    ax.legend(fontsize=8)
    _save(fig, path)


def training_figure(log, path) -> None:
    """Loss and accuracies over epochs."""
    epochs = [e.epoch for e in log.epochs]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(epochs, [e.loss for e in log.epochs], color="#d65f5f", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, [e.train_acc for e in log.epochs], color="#4878cf", label="train acc")
    ax2.plot(epochs, [e.test_acc for e in log.epochs], color="#2ca02c", label="test acc")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0.0, 1.05)
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="center right", fontsize=8)
    _save(fig, path)


def latency_figure(report, path) -> None:
    """Histogram of per-trial forward latency."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.hist(report.trials_ms, bins=20, color="#4878cf")
    ax.axvline(report.median_ms, color="#d65f5f", label=f"median {report.median_ms:.2f} ms")
    ax.set_xlabel("forward latency (ms)")
    ax.set_ylabel("trials")
    ax.legend()
    _save(fig, path)
