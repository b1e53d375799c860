"""Report figures rendered straight to files (no display needed)."""

from __future__ import annotations

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from ._atomic import atomic_path
from .metrics import FUSION_LABELS

# PNG metadata normally records the matplotlib version; drop it so reruns
# produce identical bytes.
_PNG_META = {"Software": None}


def _save(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    with atomic_path(path) as tmp:
        fig.savefig(tmp, format="png", dpi=120, metadata=_PNG_META)


def plot_history(history, path, title: str | None = None) -> None:
    """Training loss and validation Macro F1 per epoch; the kept epoch is marked."""
    epochs = [r.epoch for r in history.records]
    fig = Figure(figsize=(6.4, 3.6), layout="constrained")
    ax_loss = fig.add_subplot()
    ax_f1 = ax_loss.twinx()
    ax_loss.plot(epochs, [r.train_loss for r in history.records], color="tab:blue", marker="o", ms=3, label="train loss")
    ax_f1.plot(epochs, [r.val_f1 for r in history.records], color="tab:orange", marker="s", ms=3, label="val Macro F1")
    ax_f1.axvline(history.best_epoch, color="0.5", ls="--", lw=1)
    ax_f1.set_ylim(0, 1.02)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss", color="tab:blue")
    ax_f1.set_ylabel("val Macro F1", color="tab:orange")
    if title:
        ax_loss.set_title(title)
    _save(fig, path)


def plot_effect_sizes(results, path, top: int = 15) -> None:
    """Horizontal bars of effect size for the ``top`` ranked AU statistics."""
    shown = list(results)[:top][::-1]
    fig = Figure(figsize=(6.4, 0.3 * len(shown) + 1.2), layout="constrained")
    ax = fig.add_subplot()
    colors = ["tab:red" if r.significant else "0.6" for r in shown]
    ax.barh([r.feature for r in shown], [r.r for r in shown], color=colors)
    ax.set_xlabel("effect size r = |Z| / sqrt(N)")
    ax.set_title("AU statistics, A/H vs no-A/H (red: Bonferroni-significant)")
    _save(fig, path)


def plot_ablation(rows, path) -> None:
    """Bar chart of Macro F1 per fusion variant; ``rows`` are ``(variant, f1)`` pairs."""
    rows = list(rows)
    fig = Figure(figsize=(5.0, 3.4), layout="constrained")
    ax = fig.add_subplot()
    labels = [FUSION_LABELS.get(v, v) for v, _ in rows]
    bars = ax.bar(labels, [f for _, f in rows], color=["tab:gray", "tab:red", "tab:purple"][: len(rows)])
    ax.bar_label(bars, fmt="%.4f")
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("Macro F1")
    _save(fig, path)
