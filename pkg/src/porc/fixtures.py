"""Synthetic task data, generated per task from a seed and (where the
protocol consumes features) pushed through the checkpoint encoder.

Every generator draws from a SeedSequence spawned off (base seed, task
id), so any task regenerates its exact data in isolation. A fixture
carries a sha256 fingerprint of its arrays for cheap equality checks
across runs and processes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .registry import Task
from .trainer import SslState, extract_features


@dataclass
class Fixture:
    kind: str
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    bags: list[np.ndarray] = field(default_factory=list)
    bag_labels: np.ndarray | None = None
    true_maps: list[np.ndarray] = field(default_factory=list)
    pred_maps: list[np.ndarray] = field(default_factory=list)
    truths_by_class: dict = field(default_factory=dict)
    preds_by_class: dict = field(default_factory=dict)
    targets: np.ndarray | None = None
    patients: np.ndarray | None = None
    fingerprint: str = ""


def task_rng(base_seed: int, task_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(task_id,)))


def _patch_from_prototype(rng, prototype: np.ndarray, cell: int = 4, noise: float = 18.0) -> np.ndarray:
    """Blow a (grid, grid, 3) color prototype up to pixels and add noise."""
    img = np.repeat(np.repeat(prototype, cell, axis=0), cell, axis=1)
    img = img + rng.normal(scale=noise, size=img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _class_prototypes(rng, n_classes: int, grid: int) -> np.ndarray:
    # colors kept away from 0/255 so the noise is not clipped flat
    return rng.uniform(30.0, 225.0, size=(n_classes, grid, grid, 3))


def _patch_label_fixture(task: Task, state: SslState, rng, per_class: int = 20) -> Fixture:
    grid = state.hyper.encoder.grid
    protos = _class_prototypes(rng, task.classes, grid)
    patches, labels = [], []
    for c in range(task.classes):
        for _ in range(per_class):
            patches.append(_patch_from_prototype(rng, protos[c]))
            labels.append(c)
    return Fixture(
        kind=task.fixture,
        features=extract_features(state, patches),
        labels=np.array(labels),
    )


def _bag_fixture(task: Task, state: SslState, rng, per_class: int = 6, instances: int = 5) -> Fixture:
    grid = state.hyper.encoder.grid
    protos = _class_prototypes(rng, task.classes, grid)
    background = _class_prototypes(rng, 1, grid)[0]
    bags, labels = [], []
    for c in range(task.classes):
        for _ in range(per_class):
            patches = []
            for i in range(instances):
                # each bag mixes class-evidence patches into background
                proto = protos[c] if i < (instances + 1) // 2 else background
                patches.append(_patch_from_prototype(rng, proto))
            bags.append(extract_features(state, patches))
            labels.append(c)
    return Fixture(kind=task.fixture, bags=bags, bag_labels=np.array(labels))


def _label_map_fixture(task: Task, rng, n_maps: int = 4, coarse: int = 8, scale: int = 4) -> Fixture:
    true_maps, pred_maps = [], []
    for _ in range(n_maps):
        base = rng.integers(0, task.classes, size=(coarse, coarse))
        truth = np.repeat(np.repeat(base, scale, axis=0), scale, axis=1)
        pred = truth.copy()
        corrupt = rng.random(truth.shape) < 0.15
        pred[corrupt] = rng.integers(0, task.classes, size=int(corrupt.sum()))
        true_maps.append(truth)
        pred_maps.append(pred)
    return Fixture(kind=task.fixture, true_maps=true_maps, pred_maps=pred_maps)


def _box_fixture(task: Task, rng, images: int = 3, canvas: float = 32.0) -> Fixture:
    truths_by_class: dict = {c: [] for c in range(task.classes)}
    preds_by_class: dict = {c: [] for c in range(task.classes)}
    for img in range(images):
        for c in range(task.classes):
            for _ in range(int(rng.integers(3, 6))):
                w, h = rng.uniform(4.0, 8.0, size=2)
                x = rng.uniform(0.0, canvas - w)
                y = rng.uniform(0.0, canvas - h)
                truths_by_class[c].append((img, (x, y, x + w, y + h)))
                if rng.random() < 0.8:  # detected, slightly jittered
                    dx, dy = rng.uniform(-1.0, 1.0, size=2)
                    box = (x + dx, y + dy, x + w + dx, y + h + dy)
                    preds_by_class[c].append((img, float(rng.uniform(0.5, 1.0)), box))
            for _ in range(int(rng.integers(0, 3))):  # spurious boxes
                w, h = rng.uniform(3.0, 6.0, size=2)
                x = rng.uniform(0.0, canvas - w)
                y = rng.uniform(0.0, canvas - h)
                preds_by_class[c].append(
                    (img, float(rng.uniform(0.0, 0.5)), (x, y, x + w, y + h))
                )
    return Fixture(kind=task.fixture, truths_by_class=truths_by_class, preds_by_class=preds_by_class)


def _expression_fixture(
    task: Task, state: SslState, rng, n_patients: int = 6, per_patient: int = 8
) -> Fixture:
    grid = state.hyper.encoder.grid
    patches = []
    patients = []
    for p in range(n_patients):
        for _ in range(per_patient):
            proto = rng.uniform(30.0, 225.0, size=(grid, grid, 3))
            patches.append(_patch_from_prototype(rng, proto))
            patients.append(f"patient-{p:02d}")
    feats = extract_features(state, patches)
    mixing = rng.normal(size=(feats.shape[1], task.classes))
    targets = feats @ mixing + rng.normal(scale=0.05, size=(feats.shape[0], task.classes))
    return Fixture(
        kind=task.fixture,
        features=feats,
        targets=targets,
        patients=np.array(patients),
    )


def _fingerprint(fx: Fixture) -> str:
    h = hashlib.sha256()
    h.update(fx.kind.encode())

    def eat(arr):
        a = np.ascontiguousarray(arr)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())

    for arr in (fx.features, fx.labels, fx.bag_labels, fx.targets, fx.patients):
        if arr is not None:
            eat(arr)
    for arr in list(fx.bags) + list(fx.true_maps) + list(fx.pred_maps):
        eat(arr)
    for mapping in (fx.truths_by_class, fx.preds_by_class):
        for c in sorted(mapping):
            for entry in mapping[c]:
                h.update(repr((c,) + tuple(entry[:-1]) + (tuple(np.round(entry[-1], 9)),)).encode())
    return h.hexdigest()


def make_fixture(task: Task, state: SslState | None, base_seed: int = 0) -> Fixture:
    """Build the synthetic dataset for one task."""
    rng = task_rng(base_seed, task.id)
    needs_encoder = task.fixture in ("patch-labels", "bags", "expression")
    if needs_encoder and state is None:
        raise ConfigError(f"fixture: task {task.id} needs a checkpoint to extract features")
    if task.fixture == "patch-labels":
        fx = _patch_label_fixture(task, state, rng)
    elif task.fixture == "bags":
        fx = _bag_fixture(task, state, rng)
    elif task.fixture == "label-maps":
        fx = _label_map_fixture(task, rng)
    elif task.fixture == "boxes":
        fx = _box_fixture(task, rng)
    elif task.fixture == "expression":
        fx = _expression_fixture(task, state, rng)
    else:
        raise ConfigError(f"fixture: unknown family '{task.fixture}'")
    fx.fingerprint = _fingerprint(fx)
    return fx
