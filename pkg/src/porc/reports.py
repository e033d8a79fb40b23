"""Structured diagnostic reports and inter-reader agreement.

Two report families: lymph-node cases carry a subtype call plus an
immunohistochemistry panel whose required markers depend on the
subtype, and colorectal cases carry a malignancy verdict where grades
and polyp types are mutually exclusive. Agreement between two sets of
reports counts only cases both sides answered.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SUBTYPES = ("AITL", "DLBCL", "FL", "NKT", "reactive")

# stain vocabulary; panels below may only draw from this list
MARKERS = (
    "CD5", "CD3", "CD20", "CD79a", "CD21", "EBER", "CD10", "Bcl-6",
    "Bcl-2", "MUM-1", "CD4", "CD23", "PD-1", "Cyclin D1", "CD19",
    "CD22", "CD8", "C-myc", "CD56", "Granzyme B", "TIA-1", "Perforin",
    "CD2", "CD30", "CD7", "CD38", "ICOS", "CXCL-13", "ALK", "PD-L1",
)

PANELS: dict[str, tuple[str, ...]] = {
    "AITL": (
        "CD3", "CD4", "CD8", "CD10", "CD20", "CD21", "PD-1", "CXCL-13",
        "ICOS", "Bcl-6", "EBER", "CD2", "CD5", "CD7",
    ),
    "DLBCL": (
        "CD20", "CD79a", "CD19", "CD22", "CD10", "Bcl-6", "Bcl-2",
        "MUM-1", "C-myc", "CD5", "CD30", "CD3", "Cyclin D1", "EBER",
    ),
    "FL": ("CD20", "CD10", "Bcl-2", "Bcl-6", "CD3", "CD21", "CD23", "MUM-1", "Cyclin D1"),
    "NKT": ("CD2", "CD3", "CD56", "CD5", "CD7", "Granzyme B", "TIA-1", "Perforin", "EBER", "CD30"),
    "reactive": ("CD3", "CD20", "CD21", "CD23", "Bcl-2", "CD10", "CD5"),
}

STATUSES = ("positive", "negative", "equivocal")

GRADES = ("cancerous", "low-grade", "high-grade")
POLYPS = ("hyperplastic", "inflammatory", "polypoid-hyperplasia", "none")


@dataclass(frozen=True)
class LymphomaReport:
    case_id: str
    subtype: str
    markers: dict[str, str]
    missing_markers: tuple[str, ...] = ()


def compose_lymphoma(case_id: str, subtype: str, observed: dict[str, str]) -> LymphomaReport:
    """Assemble a lymph-node report; panel markers without results are
    listed as missing, in panel order."""
    if subtype not in PANELS:
        raise ConfigError(f"report: unknown subtype '{subtype}'; expected one of {SUBTYPES}")
    for marker, status in observed.items():
        if marker not in MARKERS:
            raise ConfigError(f"report: unknown marker '{marker}'")
        if status not in STATUSES:
            raise ConfigError(f"report: marker {marker} has unknown status '{status}'")
    missing = tuple(m for m in PANELS[subtype] if m not in observed)
    return LymphomaReport(
        case_id=str(case_id),
        subtype=subtype,
        markers=dict(observed),
        missing_markers=missing,
    )


@dataclass
class ColorectalReport:
    """Malignant cases carry a grade and no polyp call; benign cases
    carry a polyp call (default 'none') and no grade."""

    case_id: str
    malignant: bool
    grade: str | None = None
    polyp: str | None = None

    def __post_init__(self):
        if self.malignant:
            if self.grade not in GRADES:
                raise ConfigError(
                    f"report {self.case_id}: malignant cases need a grade from {GRADES}"
                )
            if self.polyp is not None:
                raise ConfigError(f"report {self.case_id}: polyp type is for benign cases only")
        else:
            if self.grade is not None:
                raise ConfigError(f"report {self.case_id}: grade is for malignant cases only")
            if self.polyp is None:
                self.polyp = "none"
            if self.polyp not in POLYPS:
                raise ConfigError(
                    f"report {self.case_id}: polyp type must be one of {POLYPS}"
                )


def verdict(report) -> str:
    """The single comparable call of a report."""
    if isinstance(report, LymphomaReport):
        return report.subtype
    if isinstance(report, ColorectalReport):
        return f"malignant:{report.grade}" if report.malignant else f"benign:{report.polyp}"
    raise ConfigError(f"report: cannot summarize {type(report).__name__}")


@dataclass
class AgreementResult:
    rate: float | None  # None when no case was answered by both sides
    agree: int
    disagree: int
    skipped: tuple[str, ...]  # case ids answered by only one side
    rows: list[tuple[str, str, str, bool]] = field(default_factory=list)


def agreement(reference: dict[str, str], candidate: dict[str, str]) -> AgreementResult:
    """Verdict agreement over case ids; one-sided cases are excluded
    from the rate but reported."""
    cases = sorted(set(reference) | set(candidate))
    agree = disagree = 0
    skipped = []
    rows = []
    for case in cases:
        if case not in reference or case not in candidate:
            skipped.append(case)
            continue
        same = reference[case] == candidate[case]
        rows.append((case, reference[case], candidate[case], same))
        if same:
            agree += 1
        else:
            disagree += 1
    compared = agree + disagree
    rate = agree / compared if compared else None
    return AgreementResult(
        rate=rate, agree=agree, disagree=disagree, skipped=tuple(skipped), rows=rows
    )


def agreement_matrix(result: AgreementResult) -> tuple[np.ndarray, list[str]]:
    """Confusion counts (reference rows, candidate columns) over the
    verdicts that actually occur."""
    labels = sorted({r[1] for r in result.rows} | {r[2] for r in result.rows})
    index = {v: i for i, v in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=int)
    for _, ref, cand, _ in result.rows:
        counts[index[ref], index[cand]] += 1
    return counts, labels


# ------------------------------------------------------------ serialization

def report_to_dict(report) -> dict:
    if isinstance(report, LymphomaReport):
        return {
            "kind": "lymphoma",
            "case_id": report.case_id,
            "subtype": report.subtype,
            "markers": dict(sorted(report.markers.items())),
            "missing_markers": list(report.missing_markers),
        }
    if isinstance(report, ColorectalReport):
        return {
            "kind": "colorectal",
            "case_id": report.case_id,
            "malignant": report.malignant,
            "grade": report.grade,
            "polyp": report.polyp,
        }
    raise ConfigError(f"report: cannot serialize {type(report).__name__}")


def report_from_dict(entry: dict):
    kind = entry.get("kind")
    if kind == "lymphoma":
        return compose_lymphoma(entry["case_id"], entry["subtype"], entry.get("markers", {}))
    if kind == "colorectal":
        return ColorectalReport(
            case_id=str(entry["case_id"]),
            malignant=bool(entry["malignant"]),
            grade=entry.get("grade"),
            polyp=entry.get("polyp"),
        )
    raise ConfigError(f"report: unknown kind '{kind}'")


def reports_to_json(reports) -> str:
    payload = [report_to_dict(r) for r in reports]
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
