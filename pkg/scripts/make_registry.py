"""Regenerates src/porc/data/registry.json.

The registry is data, not code, but its layout is entirely mechanical,
so it is produced by this script and committed. Re-run after changing
the assignment rules below.
"""

import json
from pathlib import Path

QC_NAMES = [
    "sharp-focus", "blur-grade", "tissue-fold", "pen-marking",
    "coverslip-edge", "stain-quality", "air-bubble", "section-thickness",
    "tissue-coverage", "artifact-mix", "contamination", "scan-stripe",
]
PAN_NAMES = ["pan-tumor-screen", "pan-origin-site", "pan-malignancy"]
REF_SEG = ["gland", "nuclei", "tumor-bed", "stroma", "vessel", "necrosis"]
REF_DET = ["mitosis", "nuclei", "signet"]
ORGANS = [
    "lung", "breast", "colon", "stomach", "liver", "kidney",
    "bladder", "prostate", "ovary", "uterus", "pancreas", "esophagus",
    "thyroid", "skin", "brain", "lymph-node", "soft-tissue", "testis",
]

SUBTYPE_KNN = {49, 56}
SUBTYPE_SEG = {64}
SUBTYPE_PROBE = {31, 34, 35, 41, 42, 43, 44, 48, 54, 55, 60, 61, 62, 63, 65}
GRADING_PROBE = {97, 98}


def protocol_for(task_id: int) -> str:
    if task_id <= 12:
        return "probe"
    if task_id <= 17:
        return "mil"
    if task_id <= 21:
        return "probe"
    if task_id <= 27:
        return "segmentation-metrics"
    if task_id <= 30:
        return "detection-metrics"
    if task_id <= 66:
        if task_id in SUBTYPE_KNN:
            return "knn"
        if task_id in SUBTYPE_SEG:
            return "segmentation-metrics"
        return "probe" if task_id in SUBTYPE_PROBE else "mil"
    if task_id <= 102:
        return "probe" if task_id in GRADING_PROBE else "mil"
    return "ridge-lopo"


def category_for(task_id: int) -> str:
    if task_id <= 12:
        return "quality-control"
    if task_id <= 15:
        return "pan-cancer"
    if task_id <= 30:
        return "reference-benchmarks"
    if task_id <= 66:
        return "cancer-subtyping"
    if task_id <= 102:
        return "grading-staging"
    return "molecular"


def name_for(task_id: int) -> str:
    if task_id <= 12:
        return f"qc-{QC_NAMES[task_id - 1]}"
    if task_id <= 15:
        return PAN_NAMES[task_id - 13]
    if task_id <= 17:
        return f"ref-slide-panel-{'ab'[task_id - 16]}"
    if task_id <= 21:
        return f"ref-tile-class-{'abcd'[task_id - 18]}"
    if task_id <= 27:
        return f"ref-seg-{REF_SEG[task_id - 22]}"
    if task_id <= 30:
        return f"ref-det-{REF_DET[task_id - 28]}"
    if task_id <= 66:
        i = task_id - 31
        return f"sub-{ORGANS[i % 18]}-{'ab'[i // 18]}"
    if task_id <= 102:
        i = task_id - 67
        return f"grade-{ORGANS[i % 18]}-{'ab'[i // 18]}"
    return f"gene-panel-{task_id - 102:02d}"


def classes_for(task_id: int, protocol: str) -> int:
    return {
        "probe": 2 + task_id % 4,
        "mil": 2 + task_id % 3,
        "knn": 4,
        "segmentation-metrics": 3 + task_id % 3,
        "detection-metrics": 1 + task_id % 2,
        "ridge-lopo": 4 + task_id % 5,
    }[protocol]


def metrics_for(protocol: str, classes: int) -> list[str]:
    if protocol in ("probe", "mil"):
        ranked = "auroc" if classes == 2 else "macro_auroc"
        return ["accuracy", "balanced_accuracy", "weighted_f1", ranked]
    if protocol == "knn":
        return ["acc_at_1", "acc_at_3", "acc_at_5", "mv_acc_at_5"]
    if protocol == "segmentation-metrics":
        return ["pixel_accuracy", "mean_pixel_accuracy", "mean_iou", "mean_dice"]
    if protocol == "detection-metrics":
        return ["map_50", "map_25"]
    return ["pearson_mean"]


def split_for(task_id: int, protocol: str) -> str:
    if protocol in ("segmentation-metrics", "detection-metrics"):
        return "none"
    if protocol == "ridge-lopo":
        return "lopo"
    return "8:2" if task_id == 51 else "7:3"


def main() -> None:
    entries = []
    for task_id in range(1, 113):
        protocol = protocol_for(task_id)
        classes = classes_for(task_id, protocol)
        entries.append(
            {
                "id": task_id,
                "name": name_for(task_id),
                "category": category_for(task_id),
                "protocol": protocol,
                "level": "wsi" if protocol in ("mil", "ridge-lopo") else "patch",
                "classes": classes,
                "split": split_for(task_id, protocol),
                "metrics": metrics_for(protocol, classes),
                "fixture": {
                    "probe": "patch-labels",
                    "knn": "patch-labels",
                    "mil": "bags",
                    "segmentation-metrics": "label-maps",
                    "detection-metrics": "boxes",
                    "ridge-lopo": "expression",
                }[protocol],
            }
        )
    out = Path(__file__).resolve().parent.parent / "src" / "porc" / "data" / "registry.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(entries, indent=1) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(entries)} tasks)")


if __name__ == "__main__":
    main()
