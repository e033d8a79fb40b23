"""Task execution: fixture -> protocol -> metric values, one task at a
time or as a suite with optional worker processes.

Output files are deliberately timing-free: two runs with the same
checkpoint and seed produce byte-identical summary CSVs and JSON.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MetricError
from .fixtures import Fixture, make_fixture, task_rng
from .metrics import (
    accuracy,
    auroc,
    balanced_accuracy,
    macro_auroc,
    mean_average_precision,
    pearson_mean,
    segmentation_scores,
    weighted_f1,
)
from .mil import MilConfig, predict_mil, train_mil
from .probe import predict_proba, train_probe
from .regression import run_lopo
from .registry import Task, load_registry
from .retrieval import accuracy_at_k, knn_search, majority_vote
from .splits import split_indices
from .trainer import SslState

# slide-level training shortened for bench runs; the library defaults
# stay at the published recipe
HARNESS_MIL = {"epochs": 25, "lr": 1e-3, "attention_dim": 8}


@dataclass
class RunResult:
    task_id: int
    name: str
    category: str
    protocol: str
    metrics: dict[str, float]
    fingerprint: str
    wall_time: float = 0.0


@dataclass
class Aggregate:
    category_means: dict[str, float]
    tasks_run: dict[str, int]
    tasks_total: dict[str, int]
    missing: list[int] = field(default_factory=list)
    overall_mean: float = 0.0


def _classification_metrics(task, y_true, y_pred, probs) -> dict[str, float]:
    out = {}
    for name in task.metrics:
        if name == "accuracy":
            out[name] = accuracy(y_true, y_pred)
        elif name == "balanced_accuracy":
            out[name] = balanced_accuracy(y_true, y_pred)
        elif name == "weighted_f1":
            out[name] = weighted_f1(y_true, y_pred)
        elif name == "auroc":
            out[name] = auroc(y_true, probs[:, 1])
        elif name == "macro_auroc":
            out[name] = macro_auroc(y_true, probs)
        else:
            raise ConfigError(f"task {task.id}: metric '{name}' not valid for {task.protocol}")
    return out


def _run_probe(task: Task, fx: Fixture, seed: int) -> dict[str, float]:
    train, test = split_indices(len(fx.labels), task.split, seed=seed, labels=fx.labels)
    model = train_probe(fx.features[train], fx.labels[train], n_classes=task.classes)
    probs = predict_proba(model, fx.features[test])
    return _classification_metrics(task, fx.labels[test], probs.argmax(axis=1), probs)


def _run_mil(task: Task, fx: Fixture, seed: int) -> dict[str, float]:
    train, test = split_indices(len(fx.bag_labels), task.split, seed=seed, labels=fx.bag_labels)
    config = MilConfig(n_classes=task.classes, **HARNESS_MIL)
    model = train_mil([fx.bags[i] for i in train], fx.bag_labels[train], config, seed=seed)
    probs = predict_mil(model, [fx.bags[i] for i in test])
    return _classification_metrics(task, fx.bag_labels[test], probs.argmax(axis=1), probs)


def _run_knn(task: Task, fx: Fixture, seed: int) -> dict[str, float]:
    train, test = split_indices(len(fx.labels), task.split, seed=seed, labels=fx.labels)
    neighbors, _ = knn_search(fx.features[test], fx.features[train], k=5)
    train_labels = fx.labels[train]
    test_labels = fx.labels[test]
    out = {}
    for name in task.metrics:
        if name.startswith("acc_at_"):
            out[name] = accuracy_at_k(train_labels, test_labels, neighbors, k=int(name[-1]))
        elif name == "mv_acc_at_5":
            votes = majority_vote(train_labels, neighbors)
            out[name] = float((votes == test_labels).mean())
        else:
            raise ConfigError(f"task {task.id}: metric '{name}' not valid for knn")
    return out


def _run_segmentation(task: Task, fx: Fixture) -> dict[str, float]:
    per_map = [segmentation_scores(p, t) for p, t in zip(fx.pred_maps, fx.true_maps)]
    return {name: float(np.mean([m[name] for m in per_map])) for name in task.metrics}


def _run_detection(task: Task, fx: Fixture) -> dict[str, float]:
    out = {}
    for name in task.metrics:
        if not name.startswith("map_"):
            raise ConfigError(f"task {task.id}: metric '{name}' not valid for detection")
        thr = int(name.split("_")[1]) / 100.0
        out[name] = mean_average_precision(fx.preds_by_class, fx.truths_by_class, thr, kind="box")
    return out


def _run_ridge(task: Task, fx: Fixture) -> dict[str, float]:
    pred = run_lopo(fx.features, fx.targets, fx.patients, lam=1.0)
    return {"pearson_mean": pearson_mean(fx.targets, pred)}


def run_task(task: Task, state: SslState | None, base_seed: int = 0) -> RunResult:
    """Execute one registry task end to end on its synthetic fixture."""
    started = time.perf_counter()
    fx = make_fixture(task, state, base_seed)
    if fx.kind != task.fixture:
        raise ConfigError(f"task {task.id}: fixture kind {fx.kind} != {task.fixture}")
    # per-task split/model seed, distinct from the fixture stream
    seed = int(task_rng(base_seed, task.id + 100000).integers(0, 2**31))
    if task.protocol == "probe":
        metrics = _run_probe(task, fx, seed)
    elif task.protocol == "mil":
        metrics = _run_mil(task, fx, seed)
    elif task.protocol == "knn":
        metrics = _run_knn(task, fx, seed)
    elif task.protocol == "segmentation-metrics":
        metrics = _run_segmentation(task, fx)
    elif task.protocol == "detection-metrics":
        metrics = _run_detection(task, fx)
    elif task.protocol == "ridge-lopo":
        metrics = _run_ridge(task, fx)
    else:
        raise ConfigError(f"task {task.id}: unknown protocol '{task.protocol}'")
    for name in task.metrics:
        if name not in metrics:
            raise MetricError(f"task {task.id}: metric '{name}' was not produced")
    return RunResult(
        task_id=task.id,
        name=task.name,
        category=task.category,
        protocol=task.protocol,
        metrics=metrics,
        fingerprint=fx.fingerprint,
        wall_time=time.perf_counter() - started,
    )


def _worker(args) -> RunResult:
    task, state, base_seed = args
    return run_task(task, state, base_seed)


def run_suite(
    task_ids, state: SslState | None, base_seed: int = 0, jobs: int = 1
) -> list[RunResult]:
    """Run the listed tasks (ids) and return results sorted by task id."""
    registry = {t.id: t for t in load_registry()}
    tasks = []
    for tid in task_ids:
        if tid not in registry:
            raise ConfigError(f"run_suite: no task {tid}")
        tasks.append(registry[tid])
    if jobs < 1:
        raise ConfigError(f"run_suite: jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(tasks) <= 1:
        results = [run_task(t, state, base_seed) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_worker, [(t, state, base_seed) for t in tasks]))
    return sorted(results, key=lambda r: r.task_id)


def primary_metric(result: RunResult) -> float:
    """The headline number for a task: its first listed metric."""
    if not result.metrics:
        raise MetricError(f"task {result.task_id}: no metrics recorded")
    return result.metrics[next(iter(result.metrics))]


def aggregate(results: list[RunResult]) -> Aggregate:
    """Category means of each task's first metric, plus coverage bookkeeping."""
    registry = load_registry()
    totals: dict[str, int] = {}
    for t in registry:
        totals[t.category] = totals.get(t.category, 0) + 1
    by_category: dict[str, list[float]] = {}
    seen = set()
    for r in results:
        if r.task_id in seen:
            raise ConfigError(f"aggregate: task {r.task_id} reported twice")
        seen.add(r.task_id)
        by_category.setdefault(r.category, []).append(primary_metric(r))
    missing = sorted(t.id for t in registry if t.id not in seen)
    means = {c: float(np.mean(v)) for c, v in sorted(by_category.items())}
    all_values = [v for vs in by_category.values() for v in vs]
    return Aggregate(
        category_means=means,
        tasks_run={c: len(v) for c, v in sorted(by_category.items())},
        tasks_total=totals,
        missing=missing,
        overall_mean=float(np.mean(all_values)) if all_values else 0.0,
    )


def write_summary_csv(results: list[RunResult], path) -> None:
    """Long-format metric table; no timing columns, so reruns are
    byte-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_id", "name", "category", "protocol", "metric", "value"])
        for r in sorted(results, key=lambda r: r.task_id):
            for metric in sorted(r.metrics):
                writer.writerow(
                    [r.task_id, r.name, r.category, r.protocol, metric, f"{r.metrics[metric]:.10g}"]
                )


def write_category_means_csv(agg: Aggregate, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "mean", "tasks_run", "tasks_total"])
        for category in sorted(agg.category_means):
            writer.writerow(
                [
                    category,
                    f"{agg.category_means[category]:.10g}",
                    agg.tasks_run[category],
                    agg.tasks_total[category],
                ]
            )


def write_summary_json(results: list[RunResult], agg: Aggregate, path) -> None:
    payload = {
        "results": [
            {
                "task_id": r.task_id,
                "name": r.name,
                "category": r.category,
                "protocol": r.protocol,
                "metrics": {k: r.metrics[k] for k in sorted(r.metrics)},
                "fingerprint": r.fingerprint,
            }
            for r in sorted(results, key=lambda r: r.task_id)
        ],
        "category_means": agg.category_means,
        "overall_mean": agg.overall_mean,
        "missing": agg.missing,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
