"""Figure rendering for the CLI report paths.

Figures are written next to the delimited output files; rendering uses the
Agg backend so it works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .grpo import TraceStep  # noqa: E402
from .metrics import MetricsReport  # noqa: E402

_PNG_METADATA = {"Software": "groundrl"}


def save_metrics_figure(report: MetricsReport, path: str | Path) -> Path:
    """Histogram of per-sample IoU next to the aggregate metric bars."""
    fig, (ax_hist, ax_bars) = plt.subplots(1, 2, figsize=(9, 3.5))

    ious = [s.iou for s in report.per_sample]
    ax_hist.hist(ious, bins=20, range=(0.0, 1.0), color="#4878cf", edgecolor="white")
    ax_hist.set_xlabel("per-sample IoU")
    ax_hist.set_ylabel("samples")
    ax_hist.set_title(f"IoU distribution (n={report.n_samples})")

    ciou_label = "cIoU" if report.metric_set == "paper" else "cIoU (cumulative)"
    names = ["mIoU", "gIoU", ciou_label]
    values = [report.miou, report.giou, report.ciou]
    ax_bars.bar(names, values, color=["#4878cf", "#6acc65", "#d65f5f"])
    ax_bars.axhline(0.0, color="black", linewidth=0.8)
    ax_bars.set_ylim(min(0.0, min(values)) - 0.05, 1.05)
    ax_bars.set_title(f"aggregate ({report.metric_set} metric set)")
    for name, value in zip(names, values):
        ax_bars.annotate(f"{value:.3f}", (name, value), ha="center",
                         va="bottom" if value >= 0 else "top")

    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)
    return out


def save_trace_figure(trace: list[TraceStep], path: str | Path) -> Path:
    """Training-demo curves: mean reward and best-action probability, plus
    the post-update objective."""
    steps = [t.step for t in trace]
    fig, (ax_reward, ax_obj) = plt.subplots(1, 2, figsize=(9, 3.5))

    ax_reward.plot(steps, [t.mean_reward for t in trace], label="mean reward",
                   color="#4878cf")
    ax_reward.set_xlabel("step")
    ax_reward.set_ylabel("mean reward", color="#4878cf")
    twin = ax_reward.twinx()
    twin.plot(steps, [t.p_best for t in trace], label="p(best action)",
              color="#d65f5f")
    twin.set_ylabel("p(best action)", color="#d65f5f")
    twin.set_ylim(0.0, 1.05)
    ax_reward.set_title("group reward and best-action probability")

    ax_obj.plot(steps, [t.objective for t in trace], color="#6acc65")
    ax_obj.set_xlabel("step")
    ax_obj.set_ylabel("objective (post-update)")
    ax_obj.set_title("surrogate objective")

    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)
    return out
