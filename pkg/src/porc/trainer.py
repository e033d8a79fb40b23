"""Teacher-student pretraining loop, EMA, checkpoints, feature extraction.

The student is the only side with gradients; the teacher is its
exponential moving average and generates detached targets from the
unmasked global crops. Feature extraction always runs through the
teacher. Checkpoints ("POCK") and feature matrices ("FEAT") are fixed
little-endian binary formats, written deterministically (sorted tensor
names, canonical JSON) so equal states produce equal bytes.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .crops import CropConfig, CropSet
from .encoder import (
    EncoderConfig,
    HeadConfig,
    encode,
    head_forward,
    init_encoder_params,
    init_head_params,
)
from .errors import ConfigError, DataFormatError, NumericalError, ShapeError
from .losses import _teacher_probs, dino_loss, ibot_loss, koleo_loss, update_center
from .optim import AdamWState, Params, Schedule, adamw_step, clip_global_norm, schedule_value

CKPT_MAGIC = b"POCK"
CKPT_VERSION = 1
FEAT_MAGIC = b"FEAT"

# prototype layers sit behind the L2-normalized head output; they are the
# parameters held frozen during the configured initial epochs
FROZEN_LAST_LAYER = ("dino_head.proto", "ibot_head.proto")


@dataclass(frozen=True)
class SslHyper:
    """Training hyperparameters; schedule endpoints follow the published recipe."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    crop: CropConfig = field(default_factory=CropConfig)
    mask_ratio: tuple[float, float] = (0.1, 0.5)
    epochs: int = 20
    steps_per_epoch: int = 10
    warmup_epochs: int = 2
    freeze_epochs: int = 1
    teacher_temp_warmup_epochs: int = 6
    batch_size: int = 3072
    lr_peak: float = 2e-3
    lr_final: float = 1e-6
    teacher_temp: tuple[float, float] = (0.04, 0.4)
    student_temp: float = 0.1
    momentum: tuple[float, float] = (0.992, 1.0)
    weight_decay: tuple[float, float] = (0.04, 0.4)
    clip_norm: float = 3.0
    dino_weight: float = 1.0
    ibot_weight: float = 1.0
    koleo_weight: float = 0.1
    center_momentum: float = 0.9
    use_centering: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        lo, hi = self.mask_ratio
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError(f"SslHyper: mask_ratio ({lo}, {hi}) invalid")
        if self.epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigError("SslHyper: epochs and steps_per_epoch must be >= 1")
        if not 0 <= self.warmup_epochs <= self.epochs:
            raise ConfigError("SslHyper: warmup_epochs outside [0, epochs]")
        if self.student_temp <= 0 or min(self.teacher_temp) <= 0:
            raise ConfigError("SslHyper: temperatures must be positive")
        if not (0.0 <= self.momentum[0] <= 1.0 and 0.0 <= self.momentum[1] <= 1.0):
            raise ConfigError("SslHyper: momentum endpoints must lie in [0, 1]")
        if min(self.dino_weight, self.ibot_weight, self.koleo_weight) < 0:
            raise ConfigError("SslHyper: loss weights must be >= 0")

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    @property
    def teacher_temp_span(self) -> int:
        return max(1, min(self.teacher_temp_warmup_epochs * self.steps_per_epoch, self.total_steps))

    def schedules(self) -> dict[str, Schedule]:
        return {
            "lr": Schedule(
                "warmup-cosine",
                peak=self.lr_peak,
                final=self.lr_final,
                warmup_steps=self.warmup_epochs * self.steps_per_epoch,
                total_steps=self.total_steps,
            ),
            # teacher temperature ramps over its warmup window, then holds
            "teacher_temp": Schedule(
                "cosine",
                start=self.teacher_temp[0],
                final=self.teacher_temp[1],
                total_steps=self.teacher_temp_span,
            ),
            "momentum": Schedule(
                "cosine",
                start=self.momentum[0],
                final=self.momentum[1],
                total_steps=self.total_steps,
            ),
            "weight_decay": Schedule(
                "cosine",
                start=self.weight_decay[0],
                final=self.weight_decay[1],
                total_steps=self.total_steps,
            ),
        }

    def resolve(self, step: int) -> tuple[float, float, float, float]:
        """(lr, teacher_temp, momentum, weight_decay) at ``step``, with holds."""
        s = self.schedules()
        clamp = min(step, self.total_steps)
        return (
            schedule_value(s["lr"], clamp),
            schedule_value(s["teacher_temp"], min(step, self.teacher_temp_span)),
            schedule_value(s["momentum"], clamp),
            schedule_value(s["weight_decay"], clamp),
        )


@dataclass
class SslState:
    hyper: SslHyper
    student: Params
    teacher: Params
    center_dino: np.ndarray
    center_ibot: np.ndarray
    opt: AdamWState
    step: int = 0
    seed: int = 0


@dataclass
class StepMetrics:
    step: int
    total: float
    dino: float
    ibot: float
    koleo: float
    grad_norm: float
    lr: float
    teacher_temp: float
    momentum: float
    weight_decay: float
    teacher_entropy: float


def init_state(hyper: SslHyper, seed: int = 0) -> SslState:
    rng = np.random.default_rng(seed)
    student: Params = {}
    student.update(init_encoder_params(hyper.encoder, rng))
    student.update(init_head_params(hyper.encoder.feat_dim, hyper.head, rng, "dino_head."))
    student.update(init_head_params(hyper.encoder.feat_dim, hyper.head, rng, "ibot_head."))
    teacher = {k: v.copy() for k, v in student.items()}
    k = hyper.head.prototypes
    return SslState(
        hyper=hyper,
        student=student,
        teacher=teacher,
        center_dino=np.zeros(k),
        center_ibot=np.zeros(k),
        opt=AdamWState(beta1=hyper.adam_beta1, beta2=hyper.adam_beta2, eps=hyper.adam_eps),
        step=0,
        seed=seed,
    )


def ema_update(teacher: Params, student: Params, m: float) -> Params:
    """teacher <- m * teacher + (1 - m) * student, elementwise."""
    if not 0.0 <= m <= 1.0:
        raise ConfigError(f"ema_update: momentum must lie in [0, 1], got {m}")
    if teacher.keys() != student.keys():
        raise ShapeError("ema_update: teacher/student parameter names differ")
    out: Params = {}
    for name, t in teacher.items():
        s = student[name]
        if t.shape != s.shape:
            raise ShapeError(f"ema_update: shape mismatch for '{name}'")
        out[name] = m * t + (1.0 - m) * s
    return out


def sample_token_mask(token_count: int, ratio_range: tuple[float, float], rng) -> np.ndarray:
    """Boolean mask over tokens; the masked count is round(ratio * tokens).

    ``ratio`` is uniform in ``ratio_range``; rounding is half-up so the
    count is deterministic in the drawn ratio. ``rng`` may be a seed or a
    numpy Generator.
    """
    lo, hi = ratio_range
    if not (0.0 <= lo <= hi <= 1.0):
        raise ConfigError(f"sample_token_mask: ratio range ({lo}, {hi}) invalid")
    if token_count < 1:
        raise ConfigError("sample_token_mask: token_count must be >= 1")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ratio = rng.uniform(lo, hi)
    n = int(math.floor(ratio * token_count + 0.5))
    n = min(n, token_count)
    mask = np.zeros(token_count, dtype=bool)
    if n:
        mask[rng.choice(token_count, size=n, replace=False)] = True
    return mask


def _mean_scalars(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.mul(total, Tensor(1.0 / len(terms)))


def _entropy(probs: np.ndarray) -> float:
    p = np.clip(probs, 1e-300, None)
    return float(-(p * np.log(p)).sum(axis=-1).mean())


def train_step(state: SslState, crop_sets: list[CropSet]) -> tuple[SslState, StepMetrics]:
    """One optimization step over a batch of crop sets; state is advanced in place."""
    hyper = state.hyper
    if not crop_sets:
        raise ConfigError("train_step: empty batch")
    lr, teacher_temp, momentum, wd = hyper.resolve(state.step)
    tokens = hyper.encoder.tokens
    mask_rng = np.random.default_rng(np.random.SeedSequence(state.seed, spawn_key=(state.step,)))

    student_t = {k: Tensor(v, requires_grad=True) for k, v in state.student.items()}
    teacher_t = {k: Tensor(v) for k, v in state.teacher.items()}

    dino_terms: list[Tensor] = []
    ibot_terms: list[Tensor] = []
    koleo_rows: list[Tensor] = []
    teacher_dino_rows: list[np.ndarray] = []
    teacher_token_rows: list[np.ndarray] = []
    entropies: list[float] = []

    try:
        with Tape() as tape:
            for cs in crop_sets:
                if cs.global_count < 1:
                    raise ConfigError("train_step: crop set has no global views")

                # teacher: unmasked global crops only
                t_globals = []
                t_token_logits = []
                for view in cs.globals:
                    g, tok = encode(teacher_t, view, None, config=hyper.encoder, teacher=True)
                    t_globals.append(g)
                    t_token_logits.append(
                        head_forward(teacher_t, tok, "ibot_head.").data
                    )
                t_dino_logits = head_forward(
                    teacher_t, ad.concat_rows(t_globals), "dino_head."
                ).data

                # student: masked globals (token route + view route), plain locals
                masks = [
                    sample_token_mask(tokens, hyper.mask_ratio, mask_rng)
                    for _ in cs.globals
                ]
                s_feats = []
                s_token_logits = []
                for view, m in zip(cs.globals, masks):
                    g, tok = encode(student_t, view, m, config=hyper.encoder)
                    s_feats.append(g)
                    s_token_logits.append(head_forward(student_t, tok, "ibot_head."))
                for view in cs.locals:
                    g, _ = encode(student_t, view, None, config=hyper.encoder)
                    s_feats.append(g)
                s_dino_logits = head_forward(student_t, ad.concat_rows(s_feats), "dino_head.")

                center_d = state.center_dino if hyper.use_centering else None
                center_i = state.center_ibot if hyper.use_centering else None
                dino_terms.append(
                    dino_loss(
                        t_dino_logits,
                        s_dino_logits,
                        center=center_d,
                        teacher_temp=teacher_temp,
                        student_temp=hyper.student_temp,
                        n_shared_views=len(cs.globals),
                    )
                )
                for t_tok, s_tok, m in zip(t_token_logits, s_token_logits, masks):
                    ibot_terms.append(
                        ibot_loss(
                            t_tok,
                            s_tok,
                            m,
                            center=center_i,
                            teacher_temp=teacher_temp,
                            student_temp=hyper.student_temp,
                        )
                    )
                koleo_rows.extend(s_feats[: len(cs.globals)])

                teacher_dino_rows.append(t_dino_logits)
                teacher_token_rows.extend(t_token_logits)
                # entropy is measured on the actual (centered, sharpened) targets
                entropies.append(_entropy(_teacher_probs(t_dino_logits, center_d, teacher_temp)))

            dino_total = _mean_scalars(dino_terms)
            ibot_total = _mean_scalars(ibot_terms)
            if hyper.koleo_weight > 0.0:
                koleo_total = koleo_loss(ad.concat_rows(koleo_rows))
            else:
                koleo_total = Tensor(0.0)
            total = ad.add(
                ad.add(
                    ad.mul(dino_total, Tensor(hyper.dino_weight)),
                    ad.mul(ibot_total, Tensor(hyper.ibot_weight)),
                ),
                ad.mul(koleo_total, Tensor(hyper.koleo_weight)),
            )
            if not np.isfinite(total.data):
                raise NumericalError("train_step: non-finite loss")
            backward(tape, total)
    except NumericalError as e:
        parts = {
            "dino": dino_terms[-1].item() if dino_terms else None,
            "ibot": ibot_terms[-1].item() if ibot_terms else None,
        }
        raise NumericalError(f"{e} (step {state.step}, last per-term values: {parts})") from e

    frozen = state.step // hyper.steps_per_epoch < hyper.freeze_epochs
    grads: Params = {}
    for name, t in student_t.items():
        if t.grad is None:
            continue
        if frozen and name in FROZEN_LAST_LAYER:
            continue
        grads[name] = t.grad
    grads, grad_norm = clip_global_norm(grads, hyper.clip_norm)

    state.opt.weight_decay = wd
    state.student = adamw_step(state.student, grads, state.opt, lr)
    state.teacher = ema_update(state.teacher, state.student, momentum)
    if hyper.use_centering:
        state.center_dino = update_center(
            state.center_dino, np.concatenate(teacher_dino_rows, axis=0), hyper.center_momentum
        )
        state.center_ibot = update_center(
            state.center_ibot, np.concatenate(teacher_token_rows, axis=0), hyper.center_momentum
        )

    metrics = StepMetrics(
        step=state.step,
        total=total.item(),
        dino=dino_total.item(),
        ibot=ibot_total.item(),
        koleo=koleo_total.item(),
        grad_norm=grad_norm,
        lr=lr,
        teacher_temp=teacher_temp,
        momentum=momentum,
        weight_decay=wd,
        teacher_entropy=float(np.mean(entropies)),
    )
    state.step += 1
    return state, metrics


def extract_features(state: SslState, patches) -> np.ndarray:
    """Teacher global features for each patch, one row per patch (float64)."""
    feats = np.zeros((len(patches), state.hyper.encoder.feat_dim))
    teacher_t = {k: Tensor(v) for k, v in state.teacher.items()}
    for i, patch in enumerate(patches):
        g, _ = encode(teacher_t, patch, None, config=state.hyper.encoder, teacher=True)
        feats[i] = g.data
    return feats


# ------------------------------------------------------------- serialization

_TUPLE_FIELDS = {
    "mask_ratio",
    "teacher_temp",
    "momentum",
    "weight_decay",
    "global_scale",
    "local_scale",
    "blur_sigma",
}


def _hyper_to_dict(hyper: SslHyper) -> dict:
    return dataclasses.asdict(hyper)


def _tuples(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out[k] = _tuples(v)
        elif k in _TUPLE_FIELDS and isinstance(v, list):
            out[k] = tuple(v)
        else:
            out[k] = v
    return out


def _hyper_from_dict(d: dict) -> SslHyper:
    d = _tuples(d)
    d["encoder"] = EncoderConfig(**d["encoder"])
    d["head"] = HeadConfig(**d["head"])
    d["crop"] = CropConfig(**d["crop"])
    return SslHyper(**d)


def _write_tensor(fh, name: str, arr: np.ndarray) -> None:
    raw = name.encode("utf-8")
    fh.write(struct.pack("<H", len(raw)))
    fh.write(raw)
    a = np.asarray(arr, dtype=np.float64)
    fh.write(struct.pack("<B", a.ndim))
    for d in a.shape:
        fh.write(struct.pack("<I", d))
    fh.write(a.astype("<f8").tobytes())


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise DataFormatError(f"{self.path}: truncated")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _read_tensor(r: _Reader) -> tuple[str, np.ndarray]:
    name = r.take(r.u16()).decode("utf-8")
    ndim = r.u8()
    shape = tuple(r.u32() for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(r.take(count * 8), dtype="<f8").reshape(shape)
    return name, data.astype(np.float64)


def save_checkpoint(state: SslState, path) -> None:
    meta = {
        "hyper": _hyper_to_dict(state.hyper),
        "seed": state.seed,
        "step": state.step,
        "adam_t": state.opt.t,
        "adam_weight_decay": state.opt.weight_decay,
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors: dict[str, np.ndarray] = {}
    tensors.update({f"student.{k}": v for k, v in state.student.items()})
    tensors.update({f"teacher.{k}": v for k, v in state.teacher.items()})
    tensors["center.dino"] = state.center_dino
    tensors["center.ibot"] = state.center_ibot
    tensors.update({f"opt.m.{k}": v for k, v in state.opt.m.items()})
    tensors.update({f"opt.v.{k}": v for k, v in state.opt.v.items()})

    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            _write_tensor(fh, name, tensors[name])


def load_checkpoint(path) -> SslState:
    raw = Path(path).read_bytes()
    r = _Reader(raw, path)
    if r.take(4) != CKPT_MAGIC:
        raise DataFormatError(f"{path}: bad checkpoint magic")
    version = r.u32()
    if version != CKPT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(r.take(r.u32()).decode("utf-8"))
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: corrupt metadata block: {e.msg}") from e
    n = r.u32()
    tensors = dict(_read_tensor(r) for _ in range(n))
    if r.pos != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - r.pos} trailing bytes")

    hyper = _hyper_from_dict(meta["hyper"])
    student = {k[len("student.") :]: v for k, v in tensors.items() if k.startswith("student.")}
    teacher = {k[len("teacher.") :]: v for k, v in tensors.items() if k.startswith("teacher.")}
    if student.keys() != teacher.keys() or not student:
        raise DataFormatError(f"{path}: student/teacher tensor sets inconsistent")
    opt = AdamWState(
        m={k[len("opt.m.") :]: v for k, v in tensors.items() if k.startswith("opt.m.")},
        v={k[len("opt.v.") :]: v for k, v in tensors.items() if k.startswith("opt.v.")},
        t=int(meta["adam_t"]),
        beta1=hyper.adam_beta1,
        beta2=hyper.adam_beta2,
        eps=hyper.adam_eps,
        weight_decay=float(meta.get("adam_weight_decay", 0.0)),
    )
    return SslState(
        hyper=hyper,
        student=student,
        teacher=teacher,
        center_dino=tensors["center.dino"],
        center_ibot=tensors["center.ibot"],
        opt=opt,
        step=int(meta["step"]),
        seed=int(meta["seed"]),
    )


def save_features(path, features: np.ndarray) -> None:
    f = np.asarray(features)
    if f.ndim != 2:
        raise DataFormatError(f"save_features: expected 2-D matrix, got shape {f.shape}")
    with open(path, "wb") as fh:
        fh.write(FEAT_MAGIC)
        fh.write(struct.pack("<II", f.shape[0], f.shape[1]))
        fh.write(f.astype("<f4").tobytes())


def load_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    r = _Reader(raw, path)
    if r.take(4) != FEAT_MAGIC:
        raise DataFormatError(f"{path}: bad feature-file magic")
    rows, dim = r.u32(), r.u32()
    data = np.frombuffer(r.take(rows * dim * 4), dtype="<f4")
    if r.pos != len(raw):
        raise DataFormatError(f"{path}: {len(raw) - r.pos} trailing bytes")
    return data.reshape(rows, dim).astype(np.float64)
