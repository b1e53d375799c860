"""Sliding-window and whole-video statistics over AU sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import AU_CODES, N_AUS
from .errors import ConfigurationError, DegenerateInputError, DimensionError

WINDOW_STATS = ("mean", "std", "slope", "range")
SUMMARY_STATS = ("mean", "std", "slope", "range", "zcr")


@dataclass(frozen=True)
class WindowConfig:
    W: int = 16
    S: int = 8

    def __post_init__(self):
        if self.W < 2:
            raise ConfigurationError(f"window length W={self.W} must be >= 2")
        if not 1 <= self.S <= self.W:
            raise ConfigurationError(f"step S={self.S} must satisfy 1 <= S <= W={self.W}")


@dataclass(eq=False)
class WindowedSequence:
    descriptors: np.ndarray  # (N, 4 * n_aus), AU-major then stat-minor
    offsets: np.ndarray  # start frame of each window

    @property
    def n_windows(self) -> int:
        return self.descriptors.shape[0]


@dataclass(eq=False)
class VideoSummary:
    mean: np.ndarray
    std: np.ndarray
    slope: np.ndarray
    range: np.ndarray
    zcr: np.ndarray

    def as_vector(self) -> np.ndarray:
        """Flatten in AU-major, stat-minor order matching :func:`summary_feature_names`."""
        return np.stack([getattr(self, s) for s in SUMMARY_STATS], axis=1).ravel()


def n_windows(T: int, cfg: WindowConfig) -> int:
    if T < cfg.W:
        return 1
    return (T - cfg.W) // cfg.S + 1


def window_column_names(au_codes=AU_CODES) -> list[str]:
    return [f"{au}_{stat}" for au in au_codes for stat in WINDOW_STATS]


def summary_feature_names(au_codes=AU_CODES) -> list[tuple[str, str]]:
    return [(au, stat) for au in au_codes for stat in SUMMARY_STATS]


def _slopes(windows: np.ndarray) -> np.ndarray:
    """OLS slope along axis -1 against indices 0..n-1."""
    n = windows.shape[-1]
    x = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    dev = windows - windows.mean(axis=-1, keepdims=True)
    return (dev @ x) / (x @ x)


def ls_slope(values) -> float:
    """Least-squares slope of ``values`` against 0..n-1."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise DegenerateInputError(f"slope needs at least 2 values, got {values.size}")
    return float(_slopes(values))


def zero_crossing_rate(values, center: float = 0.0) -> float:
    """Fraction of consecutive pairs that change sign about ``center``.

    A value exactly at ``center`` keeps the sign of the value before it;
    leading values at ``center`` have no sign and never count as a crossing.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise DegenerateInputError(f"zcr needs at least 2 values, got {values.size}")
    signs = np.sign(values - center)
    nz = np.flatnonzero(signs)
    if nz.size == 0:
        return 0.0
    # forward-fill zero entries with the last non-zero sign
    idx = np.where(signs != 0, np.arange(signs.size), 0)
    np.maximum.accumulate(idx, out=idx)
    filled = signs[idx]
    filled[: nz[0]] = 0.0
    crossings = np.count_nonzero(filled[:-1] * filled[1:] < 0)
    return crossings / (values.size - 1)


def _check_visual(visual: np.ndarray, min_t: int) -> np.ndarray:
    visual = np.asarray(visual, dtype=np.float64)
    if visual.ndim != 2:
        raise DimensionError(f"AU sequence must be 2-D, got shape {visual.shape}")
    if visual.shape[0] < min_t:
        raise DegenerateInputError(f"need at least {min_t} frames, got {visual.shape[0]}")
    return visual


def window_stats(visual, cfg: WindowConfig = WindowConfig()) -> WindowedSequence:
    """Per-window mean, population std, OLS slope and range of every AU column.

    Sequences shorter than ``cfg.W`` yield a single window over all frames;
    otherwise trailing frames not covered by a full window are dropped.
    """
    visual = _check_visual(visual, 1)
    T, n_cols = visual.shape
    if T < cfg.W:
        windows = visual.T[None, :, :]  # (1, cols, T)
        offsets = np.zeros(1, dtype=np.int64)
    else:
        windows = sliding_window_view(visual, cfg.W, axis=0)[:: cfg.S]  # (N, cols, W)
        offsets = np.arange(windows.shape[0], dtype=np.int64) * cfg.S
    mean = windows.mean(axis=-1)
    rng = windows.max(axis=-1) - windows.min(axis=-1)
    flat = rng == 0  # exact zeros for constant columns, free of mean round-off
    std = np.where(flat, 0.0, windows.std(axis=-1))
    slope = np.where(flat, 0.0, _slopes(windows)) if windows.shape[-1] >= 2 else np.zeros_like(mean)
    desc = np.stack([mean, std, slope, rng], axis=-1).reshape(windows.shape[0], 4 * n_cols)
    return WindowedSequence(descriptors=desc, offsets=offsets)


def video_summary(visual) -> VideoSummary:
    """Whole-sequence mean, std, slope, range and mean-centred zcr per AU."""
    visual = _check_visual(visual, 2)
    cols = visual.T
    mean = cols.mean(axis=1)
    rng = cols.max(axis=1) - cols.min(axis=1)
    flat = rng == 0
    zcr = np.array([zero_crossing_rate(col, m) for col, m in zip(cols, mean)])
    return VideoSummary(
        mean=mean,
        std=np.where(flat, 0.0, cols.std(axis=1)),
        slope=np.where(flat, 0.0, _slopes(cols)),
        range=rng,
        zcr=np.where(flat, 0.0, zcr),
    )


__all__ = [
    "N_AUS",
    "SUMMARY_STATS",
    "VideoSummary",
    "WINDOW_STATS",
    "WindowConfig",
    "WindowedSequence",
    "ls_slope",
    "n_windows",
    "summary_feature_names",
    "video_summary",
    "window_column_names",
    "window_stats",
    "zero_crossing_rate",
]
