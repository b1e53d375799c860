"""Class-weighted BCE, AdamW, cosine schedule, clipping and the training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, VideoSample
from .errors import ConfigurationError, NonFiniteLossError
from .metrics import evaluate_features
from .model import (
    ModelConfig,
    ModelParams,
    backward,
    features_for,
    forward_cached,
    init_params,
)

log = logging.getLogger(__name__)


def bce_with_logits(logit: float, label: int, pos_weight: float = 1.0) -> float:
    """Weighted binary cross-entropy on a raw logit, overflow-free.

    ``-(w * y * log(sigmoid(z)) + (1 - y) * log(1 - sigmoid(z)))``
    """
    z = float(logit)
    softplus_neg = math.log1p(math.exp(-abs(z))) + max(-z, 0.0)  # log(1 + e^-z)
    return (1 - label) * z + (1.0 + (pos_weight - 1.0) * label) * softplus_neg


def bce_grad(logit: float, label: int, pos_weight: float = 1.0) -> float:
    """d bce_with_logits / d logit."""
    z = float(logit)
    sig_neg = 0.5 * (1.0 - math.tanh(0.5 * z))  # sigmoid(-z)
    return (1 - label) - (1.0 + (pos_weight - 1.0) * label) * sig_neg


def auto_pos_weight(labels) -> float:
    """``N_negative / N_positive`` over the training labels."""
    labels = np.asarray(labels)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = int(np.count_nonzero(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ConfigurationError(
            f"class weighting needs both classes in training data (pos={n_pos}, neg={n_neg})"
        )
    return n_neg / n_pos


def cosine_lr(epoch, base_lr, total: int = 30, min_lr=0.0):
    """Cosine-annealed rate; works elementwise when ``base_lr`` is an array."""
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + math.cos(math.pi * epoch / total))


def clip_global_norm(grads: np.ndarray, max_norm: float = 1.0) -> np.ndarray:
    """Scale ``grads`` so its L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(np.dot(grads, grads)))
    if norm > max_norm:
        return grads * (max_norm / norm)
    return grads


@dataclass
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamWState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adamw_step(params, grads, state: AdamWState, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
    """One decoupled-weight-decay Adam update, in place on ``params`` and ``state``.

    ``lr`` may be a scalar or an array broadcastable to ``params`` (for
    per-group rates).  Returns ``params``.
    """
    b1, b2 = betas
    state.step += 1
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    params -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * params)
    return params


class EarlyStopping:
    """Tracks the best score; signals a stop after ``patience`` non-improving epochs.

    ``patience=None`` disables stopping.  Only strict improvements reset the
    counter, so the best epoch is the first one reaching the maximum.
    """

    def __init__(self, patience: int | None):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = -1
        self.bad_epochs = 0

    def update(self, epoch: int, score: float) -> bool:
        if score > self.best:
            self.best = score
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.patience is not None and self.bad_epochs >= self.patience


@dataclass
class TrainConfig:
    epochs: int = 30
    base_lr: float = 5e-4
    # The pretrained-text learning rate.  Text arrives as a fixed vector, so
    # nothing is fine-tuned at this rate; kept so configs stay comparable.
    bert_lr: float = 5e-5
    group_lr: dict = field(default_factory=dict)  # parameter-name prefix -> rate
    weight_decay: float = 0.01
    batch_size: int = 16
    clip_norm: float = 1.0
    patience: int | None = 8
    seed: int = 0
    pos_weight: str | float = "auto"
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    min_lr: float = 0.0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ConfigurationError("patience must be >= 1 (or None to disable)")
        if self.clip_norm <= 0:
            raise ConfigurationError("clip_norm must be > 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.pos_weight != "auto" and not float(self.pos_weight) > 0:
            raise ConfigurationError("explicit pos_weight must be > 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: float
    lr: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False
    pos_weight: float = 1.0

    @property
    def best_val_f1(self) -> float:
        return self.records[self.best_epoch].val_f1

    def __len__(self):
        return len(self.records)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.to_csv(fh)

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_f1", "lr", "is_best"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_f1), repr(r.lr), int(r.epoch == self.best_epoch)])


def group_learning_rates(params: ModelParams, cfg: TrainConfig) -> np.ndarray:
    """Per-element base learning rate; the longest matching prefix in ``group_lr`` wins."""
    lrs = np.full(len(params), cfg.base_lr)
    prefixes = sorted(cfg.group_lr, key=len)
    for name in params.keys():
        for p in prefixes:
            if name.startswith(p):
                lrs[params.slice_of(name)] = cfg.group_lr[p]
    return lrs


def sample_loss_and_grad(params, cfg: ModelConfig, x, label, pos_weight=1.0, mode="eval", rng=None, out=None):
    """Weighted BCE of one video and its gradient (written into ``out`` if given)."""
    logit, cache = forward_cached(x, params, cfg, mode, rng)
    loss = bce_with_logits(logit, label, pos_weight)
    grads = backward(bce_grad(logit, label, pos_weight), cache, params, cfg, out)
    return loss, grads


def train(
    dataset: Dataset | list[VideoSample],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_split: str = "train",
    val_split: str = "val",
) -> tuple[ModelParams, TrainHistory]:
    """Fit the model; return the best-validation-F1 parameters and the history."""
    samples = list(dataset)
    train_set = [s for s in samples if s.split == train_split]
    val_set = [s for s in samples if s.split == val_split]
    if not train_set or not val_set:
        raise ConfigurationError(
            f"need non-empty {train_split!r} and {val_split!r} splits "
            f"(got {len(train_set)} and {len(val_set)})"
        )
    train_x = [features_for(s, model_cfg) for s in train_set]
    train_y = np.array([s.label for s in train_set])
    val_x = [features_for(s, model_cfg) for s in val_set]
    val_y = np.array([s.label for s in val_set])

    if train_cfg.pos_weight == "auto":
        pos_weight = auto_pos_weight(train_y)
    else:
        pos_weight = float(train_cfg.pos_weight)

    seed = train_cfg.seed
    params = init_params(model_cfg, np.random.default_rng([seed, 0]))
    shuffle_rng = np.random.default_rng([seed, 1])
    dropout_rng = np.random.default_rng([seed, 2])
    base_lrs = group_learning_rates(params, train_cfg)
    state = AdamWState.zeros(len(params))
    stopper = EarlyStopping(train_cfg.patience)
    history = TrainHistory(pos_weight=pos_weight)
    best = params.copy()
    n = len(train_x)
    sample_grad = params.zeros_like()
    grad = np.zeros(len(params))

    for epoch in range(train_cfg.epochs):
        lrs = cosine_lr(epoch, base_lrs, train_cfg.epochs, train_cfg.min_lr)
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for b, start in enumerate(range(0, n, train_cfg.batch_size)):
            batch = order[start:start + train_cfg.batch_size]
            grad.fill(0.0)
            batch_loss = 0.0
            for i in batch:
                loss, _ = sample_loss_and_grad(
                    params, model_cfg, train_x[i], int(train_y[i]), pos_weight, "train", dropout_rng, sample_grad
                )
                batch_loss += loss
                grad += sample_grad.flat
            if not (math.isfinite(batch_loss) and np.all(np.isfinite(grad))):
                raise NonFiniteLossError(epoch, b, float(np.linalg.norm(params.flat)))
            loss_sum += batch_loss
            grad /= len(batch)
            step = clip_global_norm(grad, train_cfg.clip_norm)
            adamw_step(params.flat, step, state, lrs, train_cfg.betas, train_cfg.eps, train_cfg.weight_decay)
        val_f1, _ = evaluate_features(params, model_cfg, val_x, val_y)
        history.records.append(EpochRecord(epoch, loss_sum / n, val_f1, float(cosine_lr(epoch, train_cfg.base_lr, train_cfg.epochs, train_cfg.min_lr))))
        log.info("epoch %d loss %.4f val_f1 %.4f", epoch, loss_sum / n, val_f1)
        if stopper.update(epoch, val_f1):
            best = params.copy()
        if stopper.should_stop:
            history.stopped_early = True
            break
    history.best_epoch = stopper.best_epoch
    return best, history
