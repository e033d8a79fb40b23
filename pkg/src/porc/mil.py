"""Attention-pooled multiple-instance classification over feature bags.

Each bag is an (instances, features) matrix; a learned attention vector
pools it into one embedding that a linear layer classifies. The
attention path runs through the autodiff engine; the published recipe
(single-bag steps, low learning rate, no weight decay) is the default.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .errors import ConfigError, ShapeError
from .optim import AdamWState, Params, adamw_step


@dataclass(frozen=True)
class MilConfig:
    n_classes: int = 2
    attention_dim: int = 16
    lr: float = 2e-5
    epochs: int = 50
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError("MilConfig: need at least two classes")
        if self.attention_dim < 1 or self.epochs < 1:
            raise ConfigError("MilConfig: attention_dim and epochs must be >= 1")


@dataclass
class MilModel:
    params: Params
    config: MilConfig
    feat_dim: int
    losses: list[float] = field(default_factory=list)  # mean loss per epoch


def _init_params(feat_dim: int, config: MilConfig, rng) -> Params:
    # classifier starts at zero so early predictions are driven by the
    # labels, not by the draw of the attention weights
    return {
        "att.v": rng.normal(scale=0.1, size=(config.attention_dim, feat_dim)),
        "att.w": rng.normal(scale=0.1, size=(config.attention_dim, 1)),
        "cls.w": np.zeros((feat_dim, config.n_classes)),
        "cls.b": np.zeros(config.n_classes),
    }


def _forward(params, bag: np.ndarray):
    """Returns (logits (1, K) Tensor, attention (n,) Tensor)."""
    h = Tensor(np.asarray(bag, dtype=np.float64))
    gate = ad.tanh(ad.matmul(h, ad.transpose(params["att.v"])))
    scores = ad.reshape(ad.matmul(gate, params["att.w"]), (bag.shape[0],))
    attention = ad.softmax(scores)
    pooled = ad.matmul(ad.reshape(attention, (1, bag.shape[0])), h)
    logits = ad.add(ad.matmul(pooled, params["cls.w"]), params["cls.b"])
    return logits, attention


def _check_bag(bag: np.ndarray, feat_dim: int | None) -> np.ndarray:
    b = np.asarray(bag, dtype=np.float64)
    if b.ndim != 2 or b.shape[0] < 1:
        raise ShapeError(f"mil: each bag must be a non-empty 2-D matrix, got {b.shape}")
    if feat_dim is not None and b.shape[1] != feat_dim:
        raise ShapeError(f"mil: bag width {b.shape[1]} != expected {feat_dim}")
    return b


def train_mil(bags, labels, config: MilConfig = MilConfig(), seed: int = 0) -> MilModel:
    """One optimizer step per bag; bag order reshuffles every epoch."""
    if len(bags) == 0:
        raise ConfigError("mil: no training bags")
    if len(bags) != len(labels):
        raise ShapeError("mil: bag and label counts disagree")
    feat_dim = np.asarray(bags[0]).shape[1]
    bags = [_check_bag(b, feat_dim) for b in bags]
    y = np.asarray(labels)
    if y.min() < 0 or y.max() >= config.n_classes:
        raise ConfigError(f"mil: labels outside [0, {config.n_classes})")

    params = _init_params(feat_dim, config, np.random.default_rng(seed))
    opt = AdamWState(weight_decay=config.weight_decay)
    epoch_losses = []
    for epoch in range(config.epochs):
        order = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(epoch,))
        ).permutation(len(bags))
        total = 0.0
        for i in order:
            tensors = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
            onehot = np.zeros((1, config.n_classes))
            onehot[0, y[i]] = 1.0
            with Tape() as tape:
                logits, _ = _forward(tensors, bags[i])
                loss = ad.neg(ad.tsum(ad.mul(Tensor(onehot), ad.log_softmax(logits))))
                backward(tape, loss)
            grads = {k: t.grad for k, t in tensors.items() if t.grad is not None}
            params = adamw_step(params, grads, opt, config.lr)
            total += loss.item()
        epoch_losses.append(total / len(bags))
    return MilModel(params=params, config=config, feat_dim=feat_dim, losses=epoch_losses)


def mil_forward(model: MilModel, bag) -> tuple[np.ndarray, np.ndarray]:
    """(class probabilities (K,), attention weights (n,)) for one bag."""
    b = _check_bag(bag, model.feat_dim)
    tensors = {k: Tensor(v) for k, v in model.params.items()}
    logits, attention = _forward(tensors, b)
    z = logits.data[0]
    e = np.exp(z - z.max())
    return e / e.sum(), attention.data.copy()


def predict_mil(model: MilModel, bags) -> np.ndarray:
    """Class-probability matrix, one row per bag."""
    return np.stack([mil_forward(model, b)[0] for b in bags])
