"""The benchmark task registry: 112 evaluation tasks across six
categories, loaded from a packaged JSON file and validated on load.

Each task fixes its protocol, data level, class/target count, split
policy, metric list, and synthetic fixture family, so a run is fully
specified by a task id plus a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .errors import ConfigError, DataFormatError

CATEGORIES = (
    "quality-control",
    "pan-cancer",
    "reference-benchmarks",
    "cancer-subtyping",
    "grading-staging",
    "molecular",
)
CATEGORY_SIZES = {
    "quality-control": 12,
    "pan-cancer": 3,
    "reference-benchmarks": 15,
    "cancer-subtyping": 36,
    "grading-staging": 36,
    "molecular": 10,
}
PROTOCOLS = ("probe", "mil", "knn", "segmentation-metrics", "detection-metrics", "ridge-lopo")
LEVELS = ("patch", "wsi")
SPLITS = ("7:3", "8:2", "lopo", "none")
FIXTURES = ("patch-labels", "bags", "label-maps", "boxes", "expression")
METRIC_NAMES = (
    "accuracy",
    "balanced_accuracy",
    "weighted_f1",
    "auroc",
    "macro_auroc",
    "acc_at_1",
    "acc_at_3",
    "acc_at_5",
    "mv_acc_at_5",
    "pixel_accuracy",
    "mean_pixel_accuracy",
    "mean_iou",
    "mean_dice",
    "map_50",
    "map_25",
    "pearson_mean",
)
TOTAL_TASKS = 112

# protocol -> (expected level, expected fixture, split policy check)
_PROTOCOL_LEVEL = {
    "probe": "patch",
    "knn": "patch",
    "segmentation-metrics": "patch",
    "detection-metrics": "patch",
    "mil": "wsi",
    "ridge-lopo": "wsi",
}
_PROTOCOL_FIXTURE = {
    "probe": "patch-labels",
    "knn": "patch-labels",
    "mil": "bags",
    "segmentation-metrics": "label-maps",
    "detection-metrics": "boxes",
    "ridge-lopo": "expression",
}


@dataclass(frozen=True)
class Task:
    id: int
    name: str
    category: str
    protocol: str
    level: str
    classes: int  # prediction targets for ridge-lopo tasks
    split: str
    metrics: tuple[str, ...]
    fixture: str


def _err(task_id, message) -> DataFormatError:
    return DataFormatError(f"registry: task {task_id}: {message}")


def validate_registry(tasks: list[Task]) -> None:
    if len(tasks) != TOTAL_TASKS:
        raise DataFormatError(f"registry: expected {TOTAL_TASKS} tasks, found {len(tasks)}")
    ids = [t.id for t in tasks]
    if ids != list(range(1, TOTAL_TASKS + 1)):
        raise DataFormatError("registry: task ids must be exactly 1..112 in order")
    names = {t.name for t in tasks}
    if len(names) != TOTAL_TASKS:
        raise DataFormatError("registry: task names must be unique")
    counts: dict[str, int] = {}
    for t in tasks:
        if t.category not in CATEGORY_SIZES:
            raise _err(t.id, f"unknown category '{t.category}'")
        counts[t.category] = counts.get(t.category, 0) + 1
        if t.protocol not in PROTOCOLS:
            raise _err(t.id, f"unknown protocol '{t.protocol}'")
        if t.level not in LEVELS:
            raise _err(t.id, f"unknown level '{t.level}'")
        if t.level != _PROTOCOL_LEVEL[t.protocol]:
            raise _err(t.id, f"protocol {t.protocol} requires level {_PROTOCOL_LEVEL[t.protocol]}")
        if t.split not in SPLITS:
            raise _err(t.id, f"unknown split '{t.split}'")
        if (t.split == "lopo") != (t.protocol == "ridge-lopo"):
            raise _err(t.id, "the lopo split is exactly the ridge-lopo protocol")
        metrics_only = t.protocol in ("segmentation-metrics", "detection-metrics")
        if (t.split == "none") != metrics_only:
            raise _err(t.id, "split 'none' is exactly the metrics-only protocols")
        if not t.metrics:
            raise _err(t.id, "no metrics listed")
        for m in t.metrics:
            if m not in METRIC_NAMES:
                raise _err(t.id, f"unknown metric '{m}'")
        if t.fixture != _PROTOCOL_FIXTURE[t.protocol]:
            raise _err(t.id, f"protocol {t.protocol} requires fixture {_PROTOCOL_FIXTURE[t.protocol]}")
        if t.classes < 1 or (t.classes < 2 and t.protocol in ("probe", "mil", "knn")):
            raise _err(t.id, f"implausible class count {t.classes}")
    if counts != CATEGORY_SIZES:
        raise DataFormatError(f"registry: category sizes {counts} != {CATEGORY_SIZES}")


def load_registry() -> list[Task]:
    raw = resources.files("porc").joinpath("data/registry.json").read_text("utf-8")
    try:
        entries = json.loads(raw)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"registry: invalid JSON: {e.msg}") from e
    if not isinstance(entries, list):
        raise DataFormatError("registry: top level must be a list")
    tasks = []
    for entry in entries:
        try:
            tasks.append(
                Task(
                    id=int(entry["id"]),
                    name=str(entry["name"]),
                    category=str(entry["category"]),
                    protocol=str(entry["protocol"]),
                    level=str(entry["level"]),
                    classes=int(entry["classes"]),
                    split=str(entry["split"]),
                    metrics=tuple(entry["metrics"]),
                    fixture=str(entry["fixture"]),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"registry: malformed entry {entry.get('id', '?')}: {e}") from e
    validate_registry(tasks)
    return tasks


def get_task(task_id: int) -> Task:
    tasks = load_registry()
    if not 1 <= task_id <= len(tasks):
        raise ConfigError(f"registry: no task {task_id}; ids run 1..{len(tasks)}")
    return tasks[task_id - 1]
