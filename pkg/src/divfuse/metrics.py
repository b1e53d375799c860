"""Video-level binary metrics.

Macro F1 convention: a class's F1 is ``2tp / (2tp + fp + fn)``.  When that
denominator is zero the class never occurs and is never predicted; it is
then left out of the average instead of contributing 0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .model import Features, ModelConfig, ModelParams, features_for, forward

FUSION_LABELS = {"A": "Fusion A (implicit)", "B": "Fusion B (divergence)", "C": "Fusion C (combined)"}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _as_binary(v, name):
    arr = np.asarray(v).astype(np.int64).ravel()
    if np.any((arr != 0) & (arr != 1)):
        raise ConfigurationError(f"{name} must be binary 0/1")
    return arr


def confusion_counts(preds, labels) -> ConfusionCounts:
    p = _as_binary(preds, "preds")
    y = _as_binary(labels, "labels")
    if p.shape != y.shape:
        raise DimensionError(f"preds has {p.size} entries, labels has {y.size}")
    return ConfusionCounts(
        tp=int(np.sum((p == 1) & (y == 1))),
        fp=int(np.sum((p == 1) & (y == 0))),
        tn=int(np.sum((p == 0) & (y == 0))),
        fn=int(np.sum((p == 0) & (y == 1))),
    )


def f1_from_counts(c: ConfusionCounts) -> float:
    scores = []
    # positive class, then negative class with roles swapped
    for tp, fp, fn in ((c.tp, c.fp, c.fn), (c.tn, c.fn, c.fp)):
        denom = 2 * tp + fp + fn
        if denom:
            scores.append(2 * tp / denom)
    return float(np.mean(scores))


def macro_f1(preds, labels) -> float:
    """Unweighted mean of the positive- and negative-class F1."""
    p = np.asarray(preds).ravel()
    y = np.asarray(labels).ravel()
    if p.size != y.size:
        raise DimensionError(f"preds has {p.size} entries, labels has {y.size}")
    if p.size == 0:
        raise DimensionError("macro_f1 needs at least one prediction")
    return f1_from_counts(confusion_counts(p, y))


def predict_from_logits(logits, threshold: float = 0.5) -> np.ndarray:
    probs = 0.5 * (1.0 + np.tanh(0.5 * np.asarray(logits, dtype=np.float64)))
    return (probs >= threshold).astype(np.int64)


def evaluate_features(params: ModelParams, cfg: ModelConfig, xs: list[Features], labels, threshold=0.5):
    if len(xs) == 0:
        raise ConfigurationError("cannot evaluate an empty split")
    logits = np.array([forward(x, params, cfg, "eval") for x in xs])
    preds = predict_from_logits(logits, threshold)
    counts = confusion_counts(preds, labels)
    return f1_from_counts(counts), counts


def evaluate(params: ModelParams, cfg: ModelConfig, samples, threshold: float = 0.5):
    """Eval-mode Macro F1 and confusion counts over ``samples``."""
    samples = list(samples)
    xs = [features_for(s, cfg) for s in samples]
    return evaluate_features(params, cfg, xs, [s.label for s in samples], threshold)


def format_result(variant: str, f1: float) -> str:
    """One results-table line, e.g. ``Fusion B (divergence)  0.6808``."""
    return f"{FUSION_LABELS.get(variant, variant)}  {f1:.4f}"
