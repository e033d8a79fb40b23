"""Desk-scale patch encoder: token grid, mixing blocks, projection heads.

A view is reduced to a g x g grid of per-cell mean colors (the token
inputs), embedded, optionally mask-replaced, passed through ``depth``
mixing blocks (token-mixing linear + per-token MLP, each residual and
layer-normalized), and projected to the output feature width. The global
feature is the L2-normalized mean of the token features.

Parameters live in flat dicts keyed ``<prefix>name`` so the same
functions serve the student and the teacher.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError

TensorMap = Mapping[str, Tensor]


@dataclass(frozen=True)
class EncoderConfig:
    grid: int = 4
    embed_dim: int = 16
    depth: int = 2
    feat_dim: int = 16
    mlp_hidden: int = 16

    def __post_init__(self):
        if self.grid < 1:
            raise ConfigError("EncoderConfig: grid must be >= 1")
        if min(self.embed_dim, self.feat_dim, self.mlp_hidden) < 1:
            raise ConfigError("EncoderConfig: dimensions must be >= 1")
        if self.depth < 0:
            raise ConfigError("EncoderConfig: depth must be >= 0")

    @property
    def tokens(self) -> int:
        return self.grid * self.grid


@dataclass(frozen=True)
class HeadConfig:
    hidden: int = 16
    prototypes: int = 64

    def __post_init__(self):
        if self.hidden < 1 or self.prototypes < 2:
            raise ConfigError("HeadConfig: hidden >= 1 and prototypes >= 2 required")


def init_encoder_params(
    config: EncoderConfig, rng: np.random.Generator, prefix: str = "encoder."
) -> dict[str, np.ndarray]:
    e, f, h, t = config.embed_dim, config.feat_dim, config.mlp_hidden, config.tokens
    p: dict[str, np.ndarray] = {}
    p[prefix + "embed.w"] = rng.normal(0.0, 1.0 / np.sqrt(3.0), (3, e))
    p[prefix + "embed.b"] = np.zeros(e)
    p[prefix + "mask_token"] = rng.normal(0.0, 0.02, e)
    for i in range(config.depth):
        b = f"{prefix}block{i}."
        p[b + "mix.w"] = rng.normal(0.0, 0.2 / np.sqrt(t), (t, t))
        p[b + "mlp.w1"] = rng.normal(0.0, 0.5 / np.sqrt(e), (e, h))
        p[b + "mlp.b1"] = np.zeros(h)
        p[b + "mlp.w2"] = rng.normal(0.0, 0.5 / np.sqrt(h), (h, e))
        p[b + "mlp.b2"] = np.zeros(e)
    p[prefix + "out.w"] = rng.normal(0.0, 1.0 / np.sqrt(e), (e, f))
    p[prefix + "out.b"] = np.zeros(f)
    return p


def identity_encoder_params(config: EncoderConfig, prefix: str = "encoder.") -> dict[str, np.ndarray]:
    """Identity embed/projection for degenerate-path tests (depth 0, dims 3)."""
    if config.depth != 0 or config.embed_dim != 3 or config.feat_dim != 3:
        raise ConfigError("identity params require depth=0 and embed_dim=feat_dim=3")
    return {
        prefix + "embed.w": np.eye(3),
        prefix + "embed.b": np.zeros(3),
        prefix + "mask_token": np.zeros(3),
        prefix + "out.w": np.eye(3),
        prefix + "out.b": np.zeros(3),
    }


def init_head_params(
    feat_dim: int, config: HeadConfig, rng: np.random.Generator, prefix: str
) -> dict[str, np.ndarray]:
    h, k = config.hidden, config.prototypes
    return {
        prefix + "w1": rng.normal(0.0, 1.0 / np.sqrt(feat_dim), (feat_dim, h)),
        prefix + "b1": np.zeros(h),
        prefix + "w2": rng.normal(0.0, 1.0 / np.sqrt(h), (h, h)),
        prefix + "b2": np.zeros(h),
        # small prototype init keeps initial logits near zero (near-uniform
        # output distributions, which the collapse diagnostics rely on)
        prefix + "proto": rng.normal(0.0, 0.02, (h, k)),
    }


def cell_means(view: np.ndarray, grid: int) -> np.ndarray:
    """Mean color of each grid cell, scaled to [0, 1]; shape (grid^2, 3)."""
    v = np.asarray(view)
    if v.ndim != 3 or v.shape[2] != 3:
        raise ShapeError(f"cell_means: expected (H, W, 3) view, got {v.shape}")
    hgt, wid = v.shape[:2]
    if hgt % grid or wid % grid:
        raise ShapeError(f"cell_means: view {hgt}x{wid} not divisible by grid {grid}")
    ch, cw = hgt // grid, wid // grid
    blocks = v.reshape(grid, ch, grid, cw, 3).astype(np.float64)
    return blocks.mean(axis=(1, 3)).reshape(grid * grid, 3) / 255.0


def encode(
    params: TensorMap,
    view: np.ndarray,
    token_mask: np.ndarray | None = None,
    *,
    config: EncoderConfig,
    teacher: bool = False,
    prefix: str = "encoder.",
) -> tuple[Tensor, Tensor]:
    """Encode one view; returns (global feature (F,), token features (T, F)).

    ``token_mask`` replaces the embedded inputs of masked tokens with the
    learned mask embedding. The teacher path never sees masks.
    """
    if teacher and token_mask is not None:
        raise ConfigError("encode: the teacher path only processes unmasked views")

    x = ad.matmul(Tensor(cell_means(view, config.grid)), params[prefix + "embed.w"])
    x = ad.add(x, params[prefix + "embed.b"])

    if token_mask is not None:
        m = np.asarray(token_mask, dtype=bool)
        if m.shape != (config.tokens,):
            raise ShapeError(
                f"encode: token mask shape {m.shape} != ({config.tokens},)"
            )
        col = Tensor(m.astype(np.float64).reshape(-1, 1))
        keep = ad.mul(x, Tensor(1.0 - m.astype(np.float64).reshape(-1, 1)))
        rep = ad.mul(ad.reshape(params[prefix + "mask_token"], (1, config.embed_dim)), col)
        x = ad.add(keep, rep)

    for i in range(config.depth):
        b = f"{prefix}block{i}."
        x = ad.layer_norm(ad.add(x, ad.matmul(params[b + "mix.w"], x)))
        h = ad.gelu(ad.add(ad.matmul(x, params[b + "mlp.w1"]), params[b + "mlp.b1"]))
        h = ad.add(ad.matmul(h, params[b + "mlp.w2"]), params[b + "mlp.b2"])
        x = ad.layer_norm(ad.add(x, h))

    tokens = ad.add(ad.matmul(x, params[prefix + "out.w"]), params[prefix + "out.b"])
    global_feat = ad.l2_normalize(ad.tmean(tokens, axis=0))
    return global_feat, tokens


def head_forward(params: TensorMap, rows: Tensor, prefix: str) -> Tensor:
    """Projection head: 2-layer MLP -> L2 normalize -> prototype logits."""
    if rows.ndim == 1:
        rows = ad.reshape(rows, (1, rows.shape[0]))
    h = ad.gelu(ad.add(ad.matmul(rows, params[prefix + "w1"]), params[prefix + "b1"]))
    h = ad.add(ad.matmul(h, params[prefix + "w2"]), params[prefix + "b2"])
    h = ad.l2_normalize(h)
    return ad.matmul(h, params[prefix + "proto"])
