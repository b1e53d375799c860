"""Mann-Whitney U analysis of per-video AU statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

import numpy as np

from .data import AU_NAMES, VideoSample
from .errors import ConfigurationError
from .windowing import summary_feature_names, video_summary

EXACT_MAX_N = 12


@dataclass(frozen=True)
class MWUResult:
    U: float  # min(U1, U2)
    U1: float  # statistic of the first sample
    U2: float
    Z: float  # signed so that Z > 0 when the first sample tends to rank higher
    p: float
    sigma: float


@dataclass(frozen=True)
class StatResult:
    au: str
    metric: str
    mean_pos: float
    mean_neg: float
    U: float
    Z: float
    p: float
    r: float
    significant: bool

    @property
    def feature(self) -> str:
        return f"{self.au} {self.metric}"

    def table_row(self) -> str:
        """Row in the layout ``AU06 (cheek raiser) & std & 0.076 vs 0.059 & 0.186``."""
        name = AU_NAMES.get(self.au)
        label = f"{self.au} ({name})" if name else self.au
        return f"{label} & {self.metric} & {self.mean_pos:.3f} vs {self.mean_neg:.3f} & {self.r:.3f}"


def midranks(values) -> np.ndarray:
    """1-based ranks with tied values sharing the mean of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(values.size)
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], values.size]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + 1 + e)
    return ranks


def _tie_term(pooled: np.ndarray) -> float:
    _, counts = np.unique(pooled, return_counts=True)
    counts = counts.astype(np.float64)
    return float(np.sum(counts ** 3 - counts))


def mann_whitney_u(x, y) -> MWUResult:
    """Two-sided Mann-Whitney U with tie-corrected normal approximation.

    Uses a 0.5 continuity correction.  If every pooled value is identical the
    test is degenerate and ``U = n1 n2 / 2``, ``Z = 0``, ``p = 1``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n1, n2 = x.size, y.size
    if n1 < 1 or n2 < 1:
        raise ConfigurationError("both samples need at least one value")
    pooled = np.concatenate([x, y])
    N = n1 + n2
    ranks = midranks(pooled)
    U1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    U2 = n1 * n2 - U1
    mu = n1 * n2 / 2.0
    var = (n1 * n2 / 12.0) * ((N + 1) - _tie_term(pooled) / (N * (N - 1)))
    if var <= 0.0:
        return MWUResult(U=mu, U1=mu, U2=mu, Z=0.0, p=1.0, sigma=0.0)
    sigma = math.sqrt(var)
    dev = U1 - mu
    z = math.copysign(max(abs(dev) - 0.5, 0.0), dev) / sigma
    p = min(1.0, max(0.0, math.erfc(abs(z) / math.sqrt(2.0))))
    return MWUResult(U=min(U1, U2), U1=U1, U2=U2, Z=z, p=p, sigma=sigma)


def exact_mwu_p(x, y) -> float:
    """Two-sided p by enumerating every assignment of the pooled values.

    Counts assignments whose first-group U is at most the observed
    ``min(U1, U2)``, doubles the fraction and clamps to 1.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n1, N = x.size, x.size + y.size
    if N > EXACT_MAX_N:
        raise ConfigurationError(f"exact enumeration limited to N <= {EXACT_MAX_N}, got {N}")
    if n1 < 1 or y.size < 1:
        raise ConfigurationError("both samples need at least one value")
    ranks = midranks(np.concatenate([x, y]))
    offset = n1 * (n1 + 1) / 2.0
    observed = min(ranks[:n1].sum() - offset, x.size * y.size - (ranks[:n1].sum() - offset))
    hits = 0
    total = 0
    for idx in combinations(range(N), n1):
        total += 1
        if ranks[list(idx)].sum() - offset <= observed + 1e-9:
            hits += 1
    return min(1.0, 2.0 * hits / total)


def rank_biserial(z: float, n: int) -> float:
    """Effect size magnitude ``|Z| / sqrt(N)``."""
    if n < 2:
        raise ConfigurationError("effect size needs N >= 2")
    return abs(z) / math.sqrt(n)


def bonferroni(p_values, alpha: float = 0.05) -> np.ndarray:
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if p.size < 1:
        raise ConfigurationError("need at least one p-value")
    return p < alpha / p.size


def summary_matrix(samples: Iterable[VideoSample]) -> np.ndarray:
    """``(n_videos, 100)`` whole-video AU statistics."""
    return np.stack([video_summary(s.visual).as_vector() for s in samples])


def rank_features(samples: Iterable[VideoSample], alpha: float = 0.05) -> list[StatResult]:
    """Test every AU x statistic for an A/H vs no-A/H difference.

    Results are sorted by effect size (descending), ties broken by name.
    Bonferroni correction uses all tested features as the family.
    """
    samples = list(samples)
    labels = np.array([s.label for s in samples])
    if np.all(labels == labels[0]):
        raise ConfigurationError("feature ranking needs both A/H and no-A/H videos")
    feats = summary_matrix(samples)
    pos, neg = feats[labels == 1], feats[labels == 0]
    names = summary_feature_names()
    tests = [mann_whitney_u(pos[:, j], neg[:, j]) for j in range(feats.shape[1])]
    flags = bonferroni([t.p for t in tests], alpha)
    n = len(samples)
    results = [
        StatResult(
            au=au,
            metric=metric,
            mean_pos=float(pos[:, j].mean()),
            mean_neg=float(neg[:, j].mean()),
            U=t.U,
            Z=t.Z,
            p=t.p,
            r=rank_biserial(t.Z, n),
            significant=bool(flags[j]),
        )
        for j, ((au, metric), t) in enumerate(zip(names, tests))
    ]
    results.sort(key=lambda r: (-r.r, r.feature))
    return results


REPORT_COLUMNS = ("feature", "metric", "mean_pos", "mean_neg", "U", "Z", "p", "r", "significant")


def write_report(results: list[StatResult], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in results:
        w.writerow([r.au, r.metric, repr(r.mean_pos), repr(r.mean_neg), repr(r.U), repr(r.Z), repr(r.p), repr(r.r), int(r.significant)])
