"""Matplotlib rendering of the report CSVs: metric-vs-budget comparison
figures and training-diagnostic curves, written next to the delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .model import PolicyKind  # noqa: E402

_METRIC_LABEL = {
    PolicyKind.SE: "Ergodic capacity (bits/s/Hz)",
    PolicyKind.EE: "Energy efficiency (bits/Hz/Joule)",
}


def render_eval_figure(report, kind: PolicyKind, path):
    """Conventional vs network metric over the interference-budget sweep."""
    p_in = [r.p_in for r in report.rows]
    conv = [r.metric_conventional for r in report.rows]
    dnn = [r.metric_dnn for r in report.rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(p_in, conv, "o-", label="conventional solver")
    ax.plot(p_in, dnn, "s--", label="neural network")
    ax.set_xlabel("Average interference power budget (W)")
    ax.set_ylabel(_METRIC_LABEL[kind])
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_timing_figure(report, path):
    p_in = [r.p_in for r in report.rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(p_in, [r.time_conventional for r in report.rows], "o-",
                label="conventional solver")
    ax.semilogy(p_in, [r.time_dnn for r in report.rows], "s--",
                label="neural network")
    ax.set_xlabel("Average interference power budget (W)")
    ax.set_ylabel("Wall-clock time (s)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_bench_figure(rows, path):
    """Timing-only analogue of render_timing_figure for dict rows."""
    p_in = [r["p_in"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(p_in, [r["time_conv_s"] for r in rows], "o-",
                label="conventional solver")
    ax.semilogy(p_in, [r["time_dnn_s"] for r in rows], "s--",
                label="neural network")
    ax.set_xlabel("Average interference power budget (W)")
    ax.set_ylabel("Wall-clock time (s)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_training_figures(rows, mse_path, pred_path):
    """MSE-vs-step curve and predicted-vs-target scatter over training."""
    steps = [r["step"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(steps, [r["batch_mse"] for r in rows], lw=0.8,
                label="batch MSE")
    holdout = [r["holdout_mse"] for r in rows]
    if any(h == h for h in holdout):  # any non-nan
        ax.semilogy(steps, holdout, lw=0.8, label="held-out MSE")
    ax.set_xlabel("Training step")
    ax.set_ylabel("Mean squared error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(mse_path, dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, [r["target"] for r in rows], ".", ms=2,
            label="solver-optimal power")
    ax.plot(steps, [r["pred"] for r in rows], ".", ms=2,
            label="network output")
    ax.set_xlabel("Training step")
    ax.set_ylabel("Transmit power (W)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(pred_path, dpi=150)
    plt.close(fig)
