"""Seeded synthetic multimodal data with a controllable cross-modal conflict.

Each video has a latent content vector ``z``.  Visual, audio and text
features are noisy fixed linear renderings of a latent into their own space
(AUs pass through a softplus to stay non-negative).  The ``mode`` decides
where the label lives:

* ``divergence-label``: positives render audio from a conflicting latent
  ``z'`` while visual and text use ``z``.  ``z'`` keeps the standard normal
  marginal, so no single modality carries label information.
* ``congruent-label``: the label shifts ``z`` itself; all modalities agree.
* ``null``: labels are independent of every feature.

Frame-to-frame variation is a stationary AR(1) process (a smoothed random
walk pulled back to the rendered mean), scaled by ``noise_sigma``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import AU_CODES, AUDIO_DIM, N_AUS, TEXT_DIM, Dataset, VideoSample
from .errors import ConfigurationError

MODES = ("divergence-label", "congruent-label", "null")


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 200
    seed: int = 0
    t_visual: tuple = (24, 48)
    t_audio: tuple = (20, 40)
    conflict_strength: float = 1.0
    mode: str = "divergence-label"
    noise_sigma: float = 0.1
    latent_dim: int = 4
    # fractions, or integer counts summing to n_samples
    splits: tuple = (0.7, 0.15, 0.15)
    ar_coef: float = 0.8
    # widen the spread of one AU in positive videos without changing its range
    plant_au: str | None = None
    plant_scale: float = 2.0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigurationError("n_samples must be >= 2")
        if not 0.0 <= self.conflict_strength <= 1.0:
            raise ConfigurationError("conflict_strength must lie in [0, 1]")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("t_visual", "t_audio"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ConfigurationError(f"{name} range must satisfy 1 <= lo <= hi")
        if len(self.splits) != 3:
            raise ConfigurationError("splits needs (train, val, test)")
        if self.plant_au is not None and self.plant_au not in AU_CODES:
            raise ConfigurationError(f"unknown AU {self.plant_au!r}")
        if not self.plant_scale >= 1.0:
            raise ConfigurationError("plant_scale must be >= 1")
        if not 0.0 <= self.ar_coef < 1.0:
            raise ConfigurationError("ar_coef must lie in [0, 1)")

    def split_counts(self) -> tuple[int, int, int]:
        s = self.splits
        if all(isinstance(v, (int, np.integer)) for v in s):
            if sum(s) != self.n_samples:
                raise ConfigurationError(f"split counts {s} do not sum to n_samples={self.n_samples}")
            return tuple(int(v) for v in s)
        frac = np.asarray(s, dtype=np.float64)
        frac = frac / frac.sum()
        val, test = (int(np.floor(f * self.n_samples)) for f in frac[1:])
        return self.n_samples - val - test, val, test

    def to_dict(self) -> dict:
        return asdict(self)


def _orthonormal(rng, rows, cols):
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _ar1(rng, T, dim, phi):
    """Unit-variance stationary AR(1) sequence of shape ``(T, dim)``."""
    eps = rng.standard_normal((T, dim))
    out = np.empty((T, dim))
    out[0] = eps[0]
    innov = np.sqrt(1.0 - phi * phi)
    for t in range(1, T):
        out[t] = phi * out[t - 1] + innov * eps[t]
    return out


class _Renderer:
    def __init__(self, cfg: SynthConfig):
        rng = np.random.default_rng([cfg.seed, 0])
        k = cfg.latent_dim
        self.visual = _orthonormal(rng, N_AUS, k) * np.sqrt(N_AUS / k)
        self.audio = _orthonormal(rng, AUDIO_DIM, k) * np.sqrt(AUDIO_DIM / k)
        self.text = _orthonormal(rng, TEXT_DIM, k) * np.sqrt(TEXT_DIM / k)
        shift = rng.standard_normal(k)
        self.shift = shift / np.linalg.norm(shift)


def _spread_within_range(w, scale):
    """Push values toward their own min and max, leaving both unchanged.

    ``u`` in [0, 1] maps to ``0.5 + 0.5 sign(2u-1) |2u-1|^(1/scale)``, which
    fixes 0, 1/2 and 1 and raises the standard deviation for ``scale > 1``.
    """
    lo, hi = w.min(), w.max()
    if hi == lo:
        return w
    c = 2.0 * (w - lo) / (hi - lo) - 1.0
    warped = np.sign(c) * np.abs(c) ** (1.0 / scale)
    out = lo + 0.5 * (warped + 1.0) * (hi - lo)
    out[np.argmin(w)], out[np.argmax(w)] = lo, hi  # exact extremes despite round-off
    return out


def _conflicting_latent(z, kappa, rng):
    # (1 - k) z - k z, topped up with independent noise so the marginal stays N(0, I)
    rho = 1.0 - 2.0 * kappa
    u = rng.standard_normal(z.shape)
    return rho * z + np.sqrt(max(0.0, 1.0 - rho * rho)) * u


def _make_sample(cfg: SynthConfig, rend: _Renderer, i: int, label: int, split: str) -> VideoSample:
    rng = np.random.default_rng([cfg.seed, 1, i])
    k = cfg.latent_dim
    z = rng.standard_normal(k)
    if cfg.mode == "congruent-label":
        z = z + (2 * label - 1) * cfg.conflict_strength * rend.shift
    z_audio = z
    conflict = _conflicting_latent(z, cfg.conflict_strength, rng)
    if cfg.mode == "divergence-label" and label == 1:
        z_audio = conflict
    t_v = int(rng.integers(cfg.t_visual[0], cfg.t_visual[1] + 1))
    t_a = int(rng.integers(cfg.t_audio[0], cfg.t_audio[1] + 1))
    sigma = cfg.noise_sigma

    wobble = _ar1(rng, t_v, N_AUS, cfg.ar_coef)
    if cfg.plant_au is not None and label == 1:
        j = AU_CODES.index(cfg.plant_au)
        wobble[:, j] = _spread_within_range(wobble[:, j], cfg.plant_scale)
    visual = _softplus(rend.visual @ z + sigma * wobble)
    audio = rend.audio @ z_audio + sigma * _ar1(rng, t_a, AUDIO_DIM, cfg.ar_coef)
    text = rend.text @ z + sigma * rng.standard_normal(TEXT_DIM)
    return VideoSample(id=f"syn{i:05d}", label=label, visual=visual, audio=audio, text=text, split=split)


def generate(cfg: SynthConfig) -> Dataset:
    """Build a dataset; identical configs give bitwise-identical output.

    Labels alternate 0/1 in sample order and splits are contiguous blocks,
    so every split and the whole set are balanced to within one video.
    Each sample draws from its own seed-derived stream.
    """
    rend = _Renderer(cfg)
    n_train, n_val, _ = cfg.split_counts()
    samples = []
    for i in range(cfg.n_samples):
        split = "train" if i < n_train else "val" if i < n_train + n_val else "test"
        samples.append(_make_sample(cfg, rend, i, i % 2, split))
    return Dataset(samples=samples, manifest_path="")
