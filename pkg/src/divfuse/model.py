"""BiLSTM + attention encoders, cross-modal fusion and the MLP head.

Everything is plain float64 numpy with hand-written reverse-mode gradients.
Parameters live in one flat vector (:class:`ModelParams`) so the optimizer,
clipping and the finite-difference checker can treat them uniformly while
the layers address them by name.

Naming scheme::

    {visual,audio}.l{k}.{w_ih,w_hh,b}   LSTM layer k; axis 0 is direction (fwd, bwd)
    {visual,audio}.att.{w,v}                       additive attention
    {visual,audio,text}.proj.{w,b}                 projection to the shared space
    head.l{k}.{w,b}                                MLP layers
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ._atomic import atomic_path
from .data import AUDIO_DIM, N_AUS, TEXT_DIM, VideoSample
from .errors import ConfigurationError, DimensionError, IngestError
from .windowing import WindowConfig, window_stats

MODALITIES = ("visual", "audio", "text")
TEMPORAL = ("visual", "audio")
FUSIONS = ("A", "B", "C")
CHECKPOINT_FORMAT = "divfuse-checkpoint-v1"


@dataclass
class ModelConfig:
    input_dims: dict = field(default_factory=lambda: {"visual": 20, "audio": 768, "text": 768})
    lstm_hidden: int = 64
    lstm_layers: int = 2
    proj_dim: int = 128
    fusion: str = "B"
    mlp_hidden: tuple = (128, 64)
    dropout_p: float = 0.3
    att_dim: int = 64
    modalities: tuple = MODALITIES
    proj_activation: str = "tanh"
    visual_input: str = "raw"  # "raw" AU frames or "windowed" descriptors
    window: tuple = (16, 8)  # (W, S) when visual_input == "windowed"

    def __post_init__(self):
        self.window = tuple(int(v) for v in self.window)
        if self.visual_input not in ("raw", "windowed"):
            raise ConfigurationError(f"visual_input must be 'raw' or 'windowed', got {self.visual_input!r}")
        self.mlp_hidden = tuple(int(h) for h in self.mlp_hidden)
        self.modalities = tuple(m for m in MODALITIES if m in tuple(self.modalities))
        if self.fusion not in FUSIONS:
            raise ConfigurationError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if self.proj_dim < 1 or self.lstm_hidden < 1 or self.lstm_layers < 1 or self.att_dim < 1:
            raise ConfigurationError("layer sizes must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError(f"dropout_p={self.dropout_p} outside [0, 1)")
        if not self.modalities:
            raise ConfigurationError("at least one modality is required")
        if self.fusion in ("B", "C") and len(self.modalities) < 2:
            raise ConfigurationError(f"fusion {self.fusion} needs two or more modalities")
        if self.proj_activation not in ("tanh", "identity"):
            raise ConfigurationError(f"unknown projection activation {self.proj_activation!r}")
        missing = [m for m in self.modalities if m not in self.input_dims]
        if missing:
            raise ConfigurationError(f"input_dims lacks {missing}")

    @property
    def pairs(self) -> list[tuple[str, str]]:
        ms = self.modalities
        return [(a, b) for i, a in enumerate(ms) for b in ms[i + 1:]]

    @property
    def fused_dim(self) -> int:
        n_concat = len(self.modalities) * self.proj_dim
        n_div = len(self.pairs) * self.proj_dim
        return {"A": n_concat, "B": n_div, "C": n_concat + n_div}[self.fusion]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mlp_hidden"] = list(self.mlp_hidden)
        d["modalities"] = list(self.modalities)
        d["window"] = list(self.window)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @classmethod
    def for_data(cls, visual_input: str = "raw", **kwargs) -> "ModelConfig":
        """Config whose input dims match the on-disk feature schema."""
        dims = {"visual": 4 * N_AUS if visual_input == "windowed" else N_AUS,
                "audio": AUDIO_DIM, "text": TEXT_DIM}
        return cls(input_dims=dims, visual_input=visual_input, **kwargs)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    H, D, A = cfg.lstm_hidden, cfg.proj_dim, cfg.att_dim
    shapes: dict[str, tuple] = {}
    for m in cfg.modalities:
        if m in TEMPORAL:
            in_dim = cfg.input_dims[m]
            for k in range(cfg.lstm_layers):
                p = f"{m}.l{k}"
                shapes[f"{p}.w_ih"] = (2, 4 * H, in_dim)
                shapes[f"{p}.w_hh"] = (2, 4 * H, H)
                shapes[f"{p}.b"] = (2, 4 * H)
                in_dim = 2 * H
            shapes[f"{m}.att.w"] = (A, 2 * H)
            shapes[f"{m}.att.v"] = (A,)
            shapes[f"{m}.proj.w"] = (D, 2 * H)
        else:
            shapes[f"{m}.proj.w"] = (D, cfg.input_dims[m])
        shapes[f"{m}.proj.b"] = (D,)
    sizes = [cfg.fused_dim, *cfg.mlp_hidden, 1]
    for k in range(len(sizes) - 1):
        shapes[f"head.l{k}.w"] = (sizes[k + 1], sizes[k])
        shapes[f"head.l{k}.b"] = (sizes[k + 1],)
    return shapes


class ModelParams:
    """Named views into a single flat float64 buffer."""

    def __init__(self, shapes: dict[str, tuple], flat: np.ndarray | None = None):
        self.shapes = {k: tuple(v) for k, v in shapes.items()}
        total = sum(int(np.prod(s)) for s in self.shapes.values())
        if flat is None:
            flat = np.zeros(total, dtype=np.float64)
        elif flat.shape != (total,):
            raise DimensionError(f"flat buffer has {flat.size} entries, layout needs {total}")
        self.flat = flat
        self._views = {}
        self._slices = {}
        off = 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape))
            self._views[name] = flat[off:off + size].reshape(shape)
            self._slices[name] = slice(off, off + size)
            off += size

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    def __setitem__(self, name: str, value) -> None:
        view = self._views[name]
        if value is not view:
            view[...] = value

    def __contains__(self, name: str) -> bool:
        return name in self._views

    def __len__(self) -> int:
        return self.flat.size

    def keys(self):
        return self._views.keys()

    def items(self):
        return self._views.items()

    def slice_of(self, name: str) -> slice:
        return self._slices[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.shapes, self.flat.copy())

    def zeros_like(self) -> "ModelParams":
        return ModelParams(self.shapes)


def init_params(cfg: ModelConfig, seed: int | np.random.Generator = 0) -> ModelParams:
    """Uniform fan-in initialisation in the usual recurrent/linear style."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = ModelParams(param_shapes(cfg))
    for name, arr in params.items():
        parts = name.split(".")
        if parts[0] != "head" and parts[1].startswith("l"):
            bound = 1.0 / np.sqrt(cfg.lstm_hidden)
        elif name.endswith(".att.v"):
            bound = 1.0 / np.sqrt(cfg.att_dim)
        else:
            w_name = name[:-1] + "w" if name.endswith(".b") else name
            bound = 1.0 / np.sqrt(params.shapes[w_name][-1])
        arr[...] = rng.uniform(-bound, bound, size=arr.shape)
    return params


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------
# Gate rows are ordered (input, forget, output, candidate) so the three
# sigmoid gates form one contiguous block.  Each layer stores both
# directions stacked on a leading axis (0 = forward, 1 = backward) and the
# two directions are stepped together.


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _bilayer_forward(X, w_ih, w_hh, b):
    H = w_hh.shape[2]
    T = X.shape[0]
    # reversed views would push matmul off its BLAS path
    xs = (X, np.ascontiguousarray(X[::-1]))
    pre = np.empty((T, 2, 4 * H))
    for d in (0, 1):
        pre[:, d] = xs[d] @ w_ih[d].T + b[d]
    S = np.empty((T, 2, 3 * H))
    G = np.empty((T, 2, H))
    C = np.zeros((T + 1, 2, H))
    TC = np.empty((T, 2, H))
    Hs = np.zeros((T + 1, 2, H))
    for t in range(T):
        a = pre[t] + np.matmul(w_hh, Hs[t][:, :, None])[:, :, 0]
        s = _sigmoid(a[:, : 3 * H])
        g = np.tanh(a[:, 3 * H:])
        c = s[:, H: 2 * H] * C[t] + s[:, :H] * g
        tc = np.tanh(c)
        S[t] = s
        G[t] = g
        C[t + 1] = c
        TC[t] = tc
        Hs[t + 1] = s[:, 2 * H:] * tc
    out = np.concatenate((Hs[1:, 0], Hs[:0:-1, 1]), axis=1)
    return out, (xs, S, G, C, TC, Hs)


def _bilayer_backward(dOut, cache, w_ih, w_hh, g_ih, g_hh, g_b, need_dx=True):
    """Backprop one bidirectional layer, writing weight gradients into ``g_*``."""
    xs, S, G, C, TC, Hs = cache
    H = w_hh.shape[2]
    T = G.shape[0]
    # gradient w.r.t. each direction's hidden states, in that direction's step order
    dproc = np.stack((dOut[:, :H], dOut[::-1, H:]), axis=1)
    I, F, O = S[..., :H], S[..., H: 2 * H], S[..., 2 * H:]
    # local derivative of each pre-activation given (dc, dc, dh, dc)
    fac = np.concatenate(
        (G * I * (1.0 - I), C[:-1] * F * (1.0 - F), TC * O * (1.0 - O), I * (1.0 - G * G)),
        axis=2,
    )
    o_dtc = O * (1.0 - TC * TC)
    dA = np.empty((2, T, 4 * H))
    dh_next = np.zeros((2, H))
    dc_next = np.zeros((2, H))
    for t in range(T - 1, -1, -1):
        dh = dproc[t] + dh_next
        dc = dh * o_dtc[t] + dc_next
        da = np.concatenate((dc, dc, dh, dc), axis=1) * fac[t]
        dA[:, t] = da
        dh_next = np.matmul(da[:, None, :], w_hh)[:, 0, :]
        dc_next = dc * F[t]
    for d in (0, 1):
        np.matmul(dA[d].T, xs[d], out=g_ih[d])
        np.matmul(dA[d].T, Hs[:-1, d], out=g_hh[d])
    np.sum(dA, axis=1, out=g_b)
    if not need_dx:
        return None
    return dA[0] @ w_ih[0] + (dA[1] @ w_ih[1])[::-1]


def _bilstm_forward(seq, params, prefix, n_layers):
    x = seq
    caches = []
    for k in range(n_layers):
        p = f"{prefix}.l{k}"
        x, c = _bilayer_forward(x, params[f"{p}.w_ih"], params[f"{p}.w_hh"], params[f"{p}.b"])
        caches.append(c)
    return x, caches


def _bilstm_backward(dOut, caches, params, grads, prefix):
    for k in range(len(caches) - 1, -1, -1):
        p = f"{prefix}.l{k}"
        dOut = _bilayer_backward(
            dOut, caches[k], params[f"{p}.w_ih"], params[f"{p}.w_hh"],
            grads[f"{p}.w_ih"], grads[f"{p}.w_hh"], grads[f"{p}.b"], need_dx=k > 0,
        )


def bilstm_encode(seq, params: ModelParams, modality: str, cfg: ModelConfig) -> np.ndarray:
    """Run the stacked bidirectional LSTM; returns ``(T, 2 * lstm_hidden)``."""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise DimensionError(f"{modality} sequence must be (T>=1, d), got {seq.shape}")
    if seq.shape[1] != cfg.input_dims[modality]:
        raise DimensionError(f"{modality} input dim {seq.shape[1]} ≠ {cfg.input_dims[modality]}")
    out, _ = _bilstm_forward(seq, params, modality, cfg.lstm_layers)
    return out


# ---------------------------------------------------------------------------
# Attention pooling, projections, fusion
# ---------------------------------------------------------------------------


def _attention_forward(Hm, w, v):
    U = np.tanh(Hm @ w.T)
    e = U @ v
    e = e - e.max()
    alpha = np.exp(e)
    alpha /= alpha.sum()
    return alpha @ Hm, (Hm, U, alpha)


def _attention_backward(dout, cache, w, v):
    Hm, U, alpha = cache
    dalpha = Hm @ dout
    de = alpha * (dalpha - alpha @ dalpha)
    dv = U.T @ de
    dZ = np.outer(de, v) * (1.0 - U * U)
    dw = dZ.T @ Hm
    dH = np.outer(alpha, dout) + dZ @ w
    return dH, dw, dv


def attention_pool(Hm, w, v) -> np.ndarray:
    """Softmax-weighted average of rows of ``Hm`` scored by ``v . tanh(w h_t)``."""
    Hm = np.asarray(Hm, dtype=np.float64)
    if Hm.ndim != 2 or Hm.shape[0] < 1:
        raise DimensionError(f"attention input must be (T>=1, d), got {Hm.shape}")
    return _attention_forward(Hm, w, v)[0]


def _activate(x, kind):
    return np.tanh(x) if kind == "tanh" else x


def _activate_grad(y, kind):
    return 1.0 - y * y if kind == "tanh" else 1.0


def encode_text(text, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    text = np.asarray(text, dtype=np.float64)
    if text.shape != (cfg.input_dims["text"],):
        raise DimensionError(f"text vector must have length {cfg.input_dims['text']}, got {text.shape}")
    return _activate(params["text.proj.w"] @ text + params["text.proj.b"], cfg.proj_activation)


def fuse(h_v, h_a, h_t, variant: str) -> np.ndarray:
    """Combine the three modality embeddings.

    ``A`` concatenates, ``B`` concatenates the elementwise absolute pairwise
    differences (v-a, v-t, a-t), ``C`` concatenates both.
    """
    h_v, h_a, h_t = (np.asarray(h, dtype=np.float64) for h in (h_v, h_a, h_t))
    if not (h_v.shape == h_a.shape == h_t.shape) or h_v.ndim != 1:
        raise DimensionError(f"embedding shapes differ: {h_v.shape}, {h_a.shape}, {h_t.shape}")
    embs = {"visual": h_v, "audio": h_a, "text": h_t}
    return _fuse_forward(embs, MODALITIES, variant)


def _fuse_forward(embs, modalities, variant):
    parts = []
    if variant in ("A", "C"):
        parts.extend(embs[m] for m in modalities)
    if variant in ("B", "C"):
        parts.extend(
            np.abs(embs[a] - embs[b])
            for i, a in enumerate(modalities) for b in modalities[i + 1:]
        )
    if variant not in FUSIONS:
        raise ConfigurationError(f"unknown fusion variant {variant!r}")
    return np.concatenate(parts)


def _fuse_backward(df, embs, cfg):
    D = cfg.proj_dim
    dembs = {m: np.zeros(D) for m in cfg.modalities}
    off = 0
    if cfg.fusion in ("A", "C"):
        for m in cfg.modalities:
            dembs[m] += df[off: off + D]
            off += D
    if cfg.fusion in ("B", "C"):
        for a, b in cfg.pairs:
            g = df[off: off + D] * np.sign(embs[a] - embs[b])
            dembs[a] += g
            dembs[b] -= g
            off += D
    return dembs


# ---------------------------------------------------------------------------
# Full model
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Features:
    """Model inputs for one video; ``visual`` may be raw AUs or window descriptors."""

    visual: np.ndarray | None = None
    audio: np.ndarray | None = None
    text: np.ndarray | None = None


def features_for(sample: VideoSample, cfg: ModelConfig) -> Features:
    """Turn a sample into model inputs, windowing the AUs if configured."""
    visual = sample.visual
    if cfg.visual_input == "windowed":
        visual = window_stats(visual, WindowConfig(*cfg.window)).descriptors
    return Features(visual=visual, audio=sample.audio, text=sample.text)


def _check_features(x: Features, cfg: ModelConfig):
    for m in cfg.modalities:
        arr = getattr(x, m)
        if arr is None:
            raise DimensionError(f"missing {m} input")
        want = cfg.input_dims[m]
        if m in TEMPORAL:
            if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != want:
                raise DimensionError(f"{m} input must be (T>=1, {want}), got {arr.shape}")
        elif arr.shape != (want,):
            raise DimensionError(f"{m} input must be ({want},), got {arr.shape}")


def forward_cached(x: Features, params: ModelParams, cfg: ModelConfig, mode="eval", rng=None):
    """Forward pass returning ``(logit, cache)`` for :func:`backward`."""
    _check_features(x, cfg)
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
    dropout = mode == "train" and cfg.dropout_p > 0.0
    if dropout and rng is None:
        raise ConfigurationError("train-mode dropout needs an explicit RNG")
    act = cfg.proj_activation
    cache = {"mods": {}}
    embs = {}
    for m in cfg.modalities:
        if m in TEMPORAL:
            Hm, lstm_cache = _bilstm_forward(getattr(x, m), params, m, cfg.lstm_layers)
            pooled, att_cache = _attention_forward(Hm, params[f"{m}.att.w"], params[f"{m}.att.v"])
            inp = pooled
            cache["mods"][m] = (lstm_cache, att_cache, pooled)
        else:
            inp = getattr(x, m)
            cache["mods"][m] = (None, None, inp)
        embs[m] = _activate(params[f"{m}.proj.w"] @ inp + params[f"{m}.proj.b"], act)
    fused = _fuse_forward(embs, cfg.modalities, cfg.fusion)
    cache["embs"] = embs
    layers = []
    h = fused
    n_layers = len(cfg.mlp_hidden) + 1
    for k in range(n_layers):
        inp = h
        z = params[f"head.l{k}.w"] @ inp + params[f"head.l{k}.b"]
        if k == n_layers - 1:
            layers.append((inp, None, None))
            h = z
            break
        a = np.tanh(z)
        mask = None
        if dropout:
            keep = rng.random(a.shape) >= cfg.dropout_p
            mask = keep / (1.0 - cfg.dropout_p)
            h = a * mask
        else:
            h = a
        layers.append((inp, a, mask))
    cache["head"] = layers
    return float(h[0]), cache


def backward(dlogit: float, cache, params: ModelParams, cfg: ModelConfig, out: ModelParams | None = None) -> ModelParams:
    """Gradient of ``dlogit * logit`` with respect to every parameter.

    Every entry of ``out`` is overwritten (each parameter is used exactly once
    per forward pass), so a buffer can be reused across samples.
    """
    grads = params.zeros_like() if out is None else out
    dh = np.array([dlogit])
    for k in range(len(cache["head"]) - 1, -1, -1):
        inp, a, mask = cache["head"][k]
        if a is not None:
            if mask is not None:
                dh = dh * mask
            dh = dh * (1.0 - a * a)
        np.multiply.outer(dh, inp, out=grads[f"head.l{k}.w"])
        grads[f"head.l{k}.b"] = dh
        dh = params[f"head.l{k}.w"].T @ dh
    dembs = _fuse_backward(dh, cache["embs"], cfg)
    for m in cfg.modalities:
        lstm_cache, att_cache, inp = cache["mods"][m]
        dz = dembs[m] * _activate_grad(cache["embs"][m], cfg.proj_activation)
        np.multiply.outer(dz, inp, out=grads[f"{m}.proj.w"])
        grads[f"{m}.proj.b"] = dz
        if m in TEMPORAL:
            dpooled = params[f"{m}.proj.w"].T @ dz
            dH, dw, dv = _attention_backward(dpooled, att_cache, params[f"{m}.att.w"], params[f"{m}.att.v"])
            grads[f"{m}.att.w"] = dw
            grads[f"{m}.att.v"] = dv
            _bilstm_backward(dH, lstm_cache, params, grads, m)
    return grads


def forward(x: Features, params: ModelParams, cfg: ModelConfig, mode="eval", rng=None) -> float:
    """Scalar logit for one video.  Deterministic in eval mode."""
    return forward_cached(x, params, cfg, mode, rng)[0]


def embeddings(x: Features, params: ModelParams, cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Shared-space embedding of each configured modality (eval mode)."""
    return forward_cached(x, params, cfg, "eval")[1]["embs"]


def numeric_gradient(params: ModelParams, sample, loss_fn: Callable, eps: float = 1e-5, indices=None) -> np.ndarray:
    """Central differences ``(L(θ+εe_i) - L(θ-εe_i)) / 2ε`` for the chosen entries.

    ``params`` is perturbed in place and restored bit-for-bit afterwards.
    """
    flat = params.flat
    idx = np.arange(flat.size) if indices is None else np.asarray(list(indices), dtype=np.int64)
    out = np.empty(idx.size)
    for k, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + eps
        lp = loss_fn(params, sample)[0]
        flat[i] = orig - eps
        lm = loss_fn(params, sample)[0]
        flat[i] = orig
        out[k] = (lp - lm) / (2.0 * eps)
    return out


def relative_errors(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """Per-entry ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def gradient_pair(params: ModelParams, sample, loss_fn: Callable, eps: float = 1e-5, indices=None):
    """Analytic and central-difference gradients for the chosen entries."""
    _, grads = loss_fn(params, sample)
    analytic = np.array(grads.flat if isinstance(grads, ModelParams) else grads, dtype=np.float64)
    idx = np.arange(params.flat.size) if indices is None else np.asarray(list(indices), dtype=np.int64)
    return analytic[idx], numeric_gradient(params, sample, loss_fn, eps, idx)


def gradient_check(
    params: ModelParams,
    sample,
    loss_fn: Callable,
    eps: float = 1e-5,
    indices: Iterable[int] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(params, sample)`` must return ``(loss, grads)`` where ``grads``
    is a :class:`ModelParams` (or flat array) laid out like ``params``.
    ``params`` is perturbed in place and restored afterwards.

    The 1e-8 denominator floor is absolute, so entries whose true gradient is
    below roughly ``1e-16 * loss / eps`` are dominated by round-off in the
    numeric side; see :func:`relative_errors` for per-entry values.
    """
    analytic, numeric = gradient_pair(params, sample, loss_fn, eps, indices)
    if analytic.size == 0:
        return 0.0
    return float(relative_errors(analytic, numeric).max())


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: ModelParams, cfg: ModelConfig, meta: dict | None = None) -> None:
    """Write config and tensors to an ``.npz`` archive, atomically."""
    path = Path(path)
    arrays = {f"param/{k}": v for k, v in params.items()}
    arrays["__format__"] = np.array(CHECKPOINT_FORMAT)
    arrays["__config__"] = np.array(json.dumps(cfg.to_dict(), sort_keys=True))
    arrays["__meta__"] = np.array(json.dumps(meta or {}, sort_keys=True))
    # Entries get a fixed timestamp so identical parameters give identical bytes.
    with atomic_path(path) as tmp, zipfile.ZipFile(tmp, "w", zipfile.ZIP_STORED) as zf:
        for key in sorted(arrays):
            info = zipfile.ZipInfo(key + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asarray(arrays[key]), allow_pickle=False)


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig, dict]:
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"checkpoint not found: {path}")
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise IngestError(f"{path}: not a readable checkpoint ({exc})") from exc
    with archive as z:
        fmt = str(z["__format__"]) if "__format__" in z.files else None
        if fmt != CHECKPOINT_FORMAT:
            raise IngestError(f"{path}: unsupported checkpoint format {fmt!r}")
        cfg = ModelConfig.from_dict(json.loads(str(z["__config__"])))
        meta = json.loads(str(z["__meta__"]))
        params = ModelParams(param_shapes(cfg))
        for name, arr in params.items():
            key = f"param/{name}"
            if key not in z.files:
                raise IngestError(f"{path}: missing tensor {name}")
            stored = z[key]
            if stored.shape != arr.shape:
                raise DimensionError(f"{path}: tensor {name} has shape {stored.shape}, expected {arr.shape}")
            arr[...] = stored
    return params, cfg, meta
