"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration problems, 2 malformed
data or files, 3 numerical failures. The seed comes from --seed, then
the PORC_SEED environment variable, then 0.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataFormatError,
    GraphError,
    MetricError,
    NumericalError,
    ShapeError,
    UsageError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad arguments; this front end reserves 2
    for data errors, so usage problems are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("PORC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise UsageError(f"PORC_SEED must be an integer, got '{env}'") from e
    return 0


def _read_image(path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except FileNotFoundError as e:
        raise DataFormatError(f"{path}: {e.strerror}") from e
    except UnidentifiedImageError as e:
        raise DataFormatError(f"{path}: not a readable image") from e


def _read_int_column(path) -> np.ndarray:
    values = []
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataFormatError(f"{path}: {e.strerror}") from e
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError as e:
            raise DataFormatError(f"{path}:{lineno}: expected an integer, got '{line}'") from e
    if not values:
        raise DataFormatError(f"{path}: no values")
    return np.array(values)


def _read_str_column(path) -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataFormatError(f"{path}: {e.strerror}") from e
    values = [line.strip() for line in text.splitlines() if line.strip()]
    if not values:
        raise DataFormatError(f"{path}: no values")
    return np.array(values)


def _read_matrix(path) -> np.ndarray:
    rows = []
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise DataFormatError(f"{path}: {e.strerror}") from e
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError as e:
            raise DataFormatError(f"{path}:{lineno}: non-numeric value") from e
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no rows")
    return np.array(rows)


def _write_metrics(metrics: dict, out: str | None) -> None:
    for name in sorted(metrics):
        print(f"{name}={metrics[name]:.6g}")
    if out:
        with open(out, "w") as fh:
            json.dump({k: metrics[k] for k in sorted(metrics)}, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")


def _classification_metric_set(y_true, y_pred, probs) -> dict:
    from .metrics import accuracy, auroc, balanced_accuracy, macro_auroc, weighted_f1

    out = {
        "accuracy": accuracy(y_true, y_pred),
        "balanced_accuracy": balanced_accuracy(y_true, y_pred),
        "weighted_f1": weighted_f1(y_true, y_pred),
    }
    if probs is not None:
        classes = np.unique(y_true)
        if classes.size == 2 and probs.shape[1] == 2:
            out["auroc"] = auroc(y_true, probs[:, 1])
        elif classes.size >= 2:
            out["macro_auroc"] = macro_auroc(y_true, probs)
    return out


# ------------------------------------------------------------- subcommands

def _cmd_ingest(args) -> int:
    from .slides import compute_tissue_mask, sample_patches, write_container, write_manifest

    image = _read_image(args.image)
    container = write_container(image, args.tile, args.out, slide_id=args.slide_id)
    mask = compute_tissue_mask(container)
    kept = int(mask.tissue.sum())
    print(f"wrote {args.out}: {container.image.shape[1]}x{container.image.shape[0]} px, "
          f"{kept}/{mask.tissue.size} tissue tiles")
    if args.manifest:
        refs = sample_patches(
            container, mask, side=args.patch_side, cap=args.cap, seed=_resolve_seed(args.seed)
        )
        write_manifest(args.manifest, refs)
        print(f"wrote {args.manifest}: {len(refs)} patches")
    return EXIT_OK


def _load_hyper(args):
    from .trainer import SslHyper, _hyper_from_dict, _hyper_to_dict

    base = _hyper_to_dict(SslHyper())
    if getattr(args, "config", None):
        try:
            overrides = json.loads(Path(args.config).read_text())
        except OSError as e:
            raise DataFormatError(f"{args.config}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{args.config}: invalid JSON: {e.msg}") from e
        if not isinstance(overrides, dict):
            raise DataFormatError(f"{args.config}: expected a JSON object")
        _merge(base, overrides, args.config)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got '{item}'")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = base
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise UsageError(f"--set: unknown config group '{part}' in '{key}'")
            node = node[part]
        if parts[-1] not in node:
            raise UsageError(f"--set: unknown config key '{key}'")
        node[parts[-1]] = value
    try:
        return _hyper_from_dict(base)
    except TypeError as e:
        raise UsageError(f"invalid configuration: {e}") from e


def _merge(base: dict, overrides: dict, source: str) -> None:
    for key, value in overrides.items():
        if key not in base:
            raise DataFormatError(f"{source}: unknown config key '{key}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise DataFormatError(f"{source}: '{key}' must be an object")
            _merge(base[key], value, source)
        else:
            base[key] = value


def _patch_source(args, side: int):
    """Returns patch_count and a patch(index, rng) fetcher."""
    if getattr(args, "container", None):
        from .slides import read_container, read_manifest, read_patch

        if not getattr(args, "manifest", None):
            raise UsageError("--container requires --manifest")
        container = read_container(args.container)
        refs = read_manifest(args.manifest)
        if not refs:
            raise DataFormatError(f"{args.manifest}: no patches listed")

        def fetch(index, rng):
            return read_patch(container, refs[index % len(refs)])

        return len(refs), fetch

    def synth(index, rng):
        return rng.integers(0, 256, size=(side, side, 3), dtype=np.uint8)

    return 0, synth


def _cmd_pretrain(args) -> int:
    import dataclasses

    from .crops import make_crop_set
    from .trainer import init_state, load_checkpoint, save_checkpoint, train_step

    if args.steps < 1:
        raise UsageError(f"--steps must be >= 1, got {args.steps}")
    if args.resume:
        if args.config or args.set:
            raise UsageError("--resume takes its configuration from the checkpoint")
        state = load_checkpoint(args.resume)
    else:
        seed = _resolve_seed(args.seed)
        hyper = _load_hyper(args)
        # fold the step budget into the schedule horizon; --total-steps
        # plans a longer run than this invocation executes
        horizon = args.total_steps if args.total_steps else args.steps
        if horizon < args.steps:
            raise UsageError(f"--total-steps {horizon} is less than --steps {args.steps}")
        spe = max(1, math.ceil(horizon / hyper.epochs))
        hyper = dataclasses.replace(hyper, steps_per_epoch=spe, batch_size=args.batch)
        state = init_state(hyper, seed=seed)

    side = state.hyper.crop.global_size + 32
    batch = state.hyper.batch_size
    n_refs, fetch = _patch_source(args, side)
    history = []
    for step in range(args.steps):
        # keyed by the global step so a resumed run replays the same stream
        rng = np.random.default_rng(np.random.SeedSequence(state.seed, spawn_key=(1, state.step)))
        sets = []
        for b in range(batch):
            patch = fetch(int(rng.integers(0, max(1, n_refs or 1))), rng)
            sets.append(make_crop_set(patch, state.hyper.crop, seed=int(rng.integers(0, 2**31))))
        state, metrics = train_step(state, sets)
        history.append(metrics)
        if args.log_every and (step % args.log_every == 0 or step == args.steps - 1):
            print(f"step {metrics.step:5d} total {metrics.total:.4f} dino {metrics.dino:.4f} "
                  f"ibot {metrics.ibot:.4f} koleo {metrics.koleo:.4f} "
                  f"entropy {metrics.teacher_entropy:.4f} lr {metrics.lr:.2e}")
    save_checkpoint(state, args.out)
    print(f"wrote {args.out} after {args.steps} steps")
    if args.metrics_out:
        with open(args.metrics_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "total", "dino", "ibot", "koleo", "grad_norm",
                             "lr", "teacher_temp", "momentum", "weight_decay", "teacher_entropy"])
            for m in history:
                writer.writerow([m.step] + [f"{v:.10g}" for v in (
                    m.total, m.dino, m.ibot, m.koleo, m.grad_norm, m.lr,
                    m.teacher_temp, m.momentum, m.weight_decay, m.teacher_entropy)])
        print(f"wrote {args.metrics_out}")
    if args.curves:
        from .figures import plot_loss_curves

        plot_loss_curves(history, args.curves)
        print(f"wrote {args.curves}")
    return EXIT_OK


def _cmd_extract(args) -> int:
    from .trainer import extract_features, load_checkpoint, save_features

    state = load_checkpoint(args.checkpoint)
    seed = _resolve_seed(args.seed)
    if args.container:
        from .slides import read_container, read_manifest, read_patch

        if not args.manifest:
            raise UsageError("--container requires --manifest")
        container = read_container(args.container)
        refs = read_manifest(args.manifest)
        patches = [read_patch(container, ref) for ref in refs]
    else:
        grid = state.hyper.encoder.grid
        rng = np.random.default_rng(seed)
        patches = [
            rng.integers(0, 256, size=(grid * 4, grid * 4, 3), dtype=np.uint8)
            for _ in range(args.synthetic)
        ]
    if not patches:
        raise DataFormatError("extract: no patches to featurize")
    feats = extract_features(state, patches)
    save_features(args.out, feats)
    print(f"wrote {args.out}: {feats.shape[0]} rows x {feats.shape[1]} dims")
    return EXIT_OK


def _cmd_probe(args) -> int:
    from .probe import predict_proba, train_probe
    from .splits import split_indices
    from .trainer import load_features

    feats = load_features(args.features)
    labels = _read_int_column(args.labels)
    if len(labels) != feats.shape[0]:
        raise DataFormatError(
            f"{args.labels}: {len(labels)} labels for {feats.shape[0]} feature rows"
        )
    train, test = split_indices(len(labels), args.ratio, seed=_resolve_seed(args.seed), labels=labels)
    model = train_probe(feats[train], labels[train])
    probs = predict_proba(model, feats[test])
    metrics = _classification_metric_set(labels[test], probs.argmax(axis=1), probs)
    _write_metrics(metrics, args.out)
    return EXIT_OK


def _cmd_mil(args) -> int:
    from .mil import MilConfig, predict_mil, train_mil
    from .splits import split_indices
    from .trainer import load_features

    feats = load_features(args.features)
    bag_ids = _read_str_column(args.bag_ids)
    if len(bag_ids) != feats.shape[0]:
        raise DataFormatError(
            f"{args.bag_ids}: {len(bag_ids)} bag ids for {feats.shape[0]} feature rows"
        )
    label_map = {}
    for lineno, line in enumerate(_read_str_column(args.bag_labels), start=1):
        parts = line.split(",")
        if len(parts) != 2:
            raise DataFormatError(f"{args.bag_labels}:{lineno}: expected 'bag_id,label'")
        try:
            label_map[parts[0]] = int(parts[1])
        except ValueError as e:
            raise DataFormatError(f"{args.bag_labels}:{lineno}: label must be an integer") from e
    order = sorted(set(bag_ids))
    missing = [b for b in order if b not in label_map]
    if missing:
        raise DataFormatError(f"{args.bag_labels}: no label for bags {missing}")
    bags = [feats[bag_ids == b] for b in order]
    labels = np.array([label_map[b] for b in order])
    seed = _resolve_seed(args.seed)
    train, test = split_indices(len(bags), args.ratio, seed=seed, labels=labels)
    config = MilConfig(
        n_classes=int(labels.max()) + 1, epochs=args.epochs, lr=args.lr, attention_dim=8
    )
    model = train_mil([bags[i] for i in train], labels[train], config, seed=seed)
    probs = predict_mil(model, [bags[i] for i in test])
    metrics = _classification_metric_set(labels[test], probs.argmax(axis=1), probs)
    _write_metrics(metrics, args.out)
    return EXIT_OK


def _cmd_knn(args) -> int:
    from .retrieval import accuracy_at_k, knn_search, majority_vote
    from .splits import split_indices
    from .trainer import load_features

    feats = load_features(args.features)
    labels = _read_int_column(args.labels)
    if len(labels) != feats.shape[0]:
        raise DataFormatError(
            f"{args.labels}: {len(labels)} labels for {feats.shape[0]} feature rows"
        )
    train, test = split_indices(len(labels), args.ratio, seed=_resolve_seed(args.seed), labels=labels)
    k = min(args.k, len(train))
    neighbors, _ = knn_search(feats[test], feats[train], k=k)
    metrics = {f"acc_at_{kk}": accuracy_at_k(labels[train], labels[test], neighbors, k=kk)
               for kk in (1, 3, 5) if kk <= k}
    votes = majority_vote(labels[train], neighbors)
    metrics[f"mv_acc_at_{k}"] = float((votes == labels[test]).mean())
    _write_metrics(metrics, args.out)
    return EXIT_OK


def _cmd_genes(args) -> int:
    from .metrics import pearson_mean
    from .regression import run_lopo
    from .trainer import load_features

    feats = load_features(args.features)
    targets = _read_matrix(args.targets)
    patients = _read_str_column(args.patients)
    if targets.shape[0] != feats.shape[0] or len(patients) != feats.shape[0]:
        raise DataFormatError("genes: feature, target, and patient row counts differ")
    pred = run_lopo(feats, targets, patients, lam=args.lam)
    _write_metrics({"pearson_mean": pearson_mean(targets, pred)}, args.out)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    y_true = _read_int_column(args.true)
    y_pred = _read_int_column(args.pred)
    probs = _read_matrix(args.scores) if args.scores else None
    metrics = _classification_metric_set(y_true, y_pred, probs)
    _write_metrics(metrics, args.out)
    return EXIT_OK


def _cmd_run_task(args) -> int:
    from .harness import run_task
    from .registry import get_task
    from .trainer import load_checkpoint

    task = get_task(args.task)
    state = load_checkpoint(args.checkpoint) if args.checkpoint else None
    result = run_task(task, state, base_seed=_resolve_seed(args.seed))
    print(f"task {task.id} ({task.name}, {task.protocol})")
    _write_metrics(result.metrics, None)
    if args.out:
        payload = {
            "task_id": result.task_id,
            "name": result.name,
            "category": result.category,
            "protocol": result.protocol,
            "metrics": {k: result.metrics[k] for k in sorted(result.metrics)},
            "fingerprint": result.fingerprint,
        }
        with open(args.out, "w") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        print(f"wrote {args.out}")
    return EXIT_OK


def _parse_task_spec(spec: str) -> list[int]:
    from .registry import TOTAL_TASKS

    if spec.strip().lower() == "all":
        return list(range(1, TOTAL_TASKS + 1))
    ids = []
    for piece in spec.split(","):
        piece = piece.strip()
        if not piece:
            continue
        if "-" in piece:
            lo, _, hi = piece.partition("-")
            try:
                ids.extend(range(int(lo), int(hi) + 1))
            except ValueError as e:
                raise UsageError(f"--tasks: bad range '{piece}'") from e
        else:
            try:
                ids.append(int(piece))
            except ValueError as e:
                raise UsageError(f"--tasks: bad id '{piece}'") from e
    if not ids:
        raise UsageError(f"--tasks: nothing to run in '{spec}'")
    return ids


def _cmd_run_suite(args) -> int:
    from .figures import plot_category_means, plot_task_overview
    from .harness import (
        aggregate,
        run_suite,
        write_category_means_csv,
        write_summary_csv,
        write_summary_json,
    )
    from .trainer import load_checkpoint

    task_ids = _parse_task_spec(args.tasks)
    state = load_checkpoint(args.checkpoint) if args.checkpoint else None
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_suite(task_ids, state, base_seed=_resolve_seed(args.seed), jobs=args.jobs)
    agg = aggregate(results)
    write_summary_csv(results, out_dir / "summary.csv")
    write_category_means_csv(agg, out_dir / "category_means.csv")
    write_summary_json(results, agg, out_dir / "summary.json")
    plot_category_means(agg, out_dir / "category_means.png")
    plot_task_overview(results, out_dir / "task_overview.png")
    for category in sorted(agg.category_means):
        print(f"{category}: {agg.category_means[category]:.4f} "
              f"({agg.tasks_run[category]}/{agg.tasks_total[category]} tasks)")
    print(f"overall: {agg.overall_mean:.4f} over {len(results)} tasks")
    if agg.missing:
        print(f"not run: {len(agg.missing)} tasks")
    print(f"wrote {out_dir}/summary.csv, category_means.csv, summary.json, "
          f"category_means.png, task_overview.png")
    return EXIT_OK


def _demo_cases(n: int, seed: int) -> dict:
    from .reports import PANELS, SUBTYPES

    rng = np.random.default_rng(seed)
    subtypes = list(SUBTYPES)
    reference = []
    candidate = []
    for i in range(n):
        case = f"case-{i:03d}"
        true_subtype = subtypes[int(rng.integers(0, len(subtypes)))]
        panel = PANELS[true_subtype]
        observed = {
            m: ("positive" if rng.random() < 0.5 else "negative")
            for m in panel
            if rng.random() < 0.9
        }
        reference.append(
            {"kind": "lymphoma", "case_id": case, "subtype": true_subtype, "markers": observed}
        )
        if rng.random() < 0.1:  # candidate skipped this case
            continue
        called = true_subtype
        if rng.random() < 0.2:
            called = subtypes[int(rng.integers(0, len(subtypes)))]
        candidate.append(
            {"kind": "lymphoma", "case_id": case, "subtype": called, "markers": observed}
        )
    return {"reference": reference, "candidate": candidate}


def _cmd_report(args) -> int:
    from .figures import plot_agreement_heatmap
    from .reports import agreement, agreement_matrix, report_from_dict, reports_to_json, verdict

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.cases:
        try:
            payload = json.loads(Path(args.cases).read_text())
        except OSError as e:
            raise DataFormatError(f"{args.cases}: {e.strerror}") from e
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{args.cases}: invalid JSON: {e.msg}") from e
    else:
        payload = _demo_cases(args.demo, _resolve_seed(args.seed))
        with open(out_dir / "cases.json", "w") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
        print(f"wrote {out_dir}/cases.json ({args.demo} demo cases)")
    if not isinstance(payload, dict) or "reference" not in payload or "candidate" not in payload:
        raise DataFormatError("report: cases file needs 'reference' and 'candidate' lists")

    def side(entries):
        if not isinstance(entries, list):
            raise DataFormatError("report: 'reference' and 'candidate' must be lists")
        try:
            reports = [report_from_dict(e) for e in entries]
        except (KeyError, TypeError, AttributeError) as e:
            raise DataFormatError(f"report: malformed case entry ({e})") from e
        ids = [r.case_id for r in reports]
        if len(set(ids)) != len(ids):
            raise DataFormatError("report: duplicate case ids on one side")
        return reports, {r.case_id: verdict(r) for r in reports}

    ref_reports, ref_verdicts = side(payload["reference"])
    cand_reports, cand_verdicts = side(payload["candidate"])
    result = agreement(ref_verdicts, cand_verdicts)

    with open(out_dir / "agreement.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "reference", "candidate", "agree"])
        for case, ref, cand, same in result.rows:
            writer.writerow([case, ref, cand, "yes" if same else "no"])
    with open(out_dir / "reports.json", "w") as fh:
        fh.write(reports_to_json(ref_reports + cand_reports))
    counts, labels = agreement_matrix(result)
    if labels:
        plot_agreement_heatmap(counts, labels, out_dir / "agreement.png")
    if result.rate is None:
        print("agreement: no case was answered by both sides")
    else:
        print(f"agreement: {result.rate:.4f} ({result.agree}/{result.agree + result.disagree} cases)")
    if result.skipped:
        print(f"skipped (one-sided): {len(result.skipped)} cases")
    print(f"wrote {out_dir}/agreement.csv, reports.json"
          + (f", agreement.png" if labels else ""))
    return EXIT_OK


# ------------------------------------------------------------ parser wiring

def build_parser() -> _Parser:
    parser = _Parser(prog="porc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="pack an image into a tiled container")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tile", type=int, default=256)
    p.add_argument("--slide-id", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--patch-side", type=int, default=256)
    p.add_argument("--cap", type=int, default=500)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("pretrain", help="teacher-student pretraining")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None, help="continue from this checkpoint")
    p.add_argument("--total-steps", type=int, default=None,
                   help="schedule horizon when longer than --steps")
    p.add_argument("--config", default=None, help="JSON hyperparameter overrides")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted override, e.g. --set encoder.grid=2")
    p.add_argument("--container", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--metrics-out", default=None)
    p.add_argument("--curves", default=None, help="write loss-curve PNG here")
    p.set_defaults(func=_cmd_pretrain)

    p = sub.add_parser("extract", help="teacher features for patches")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--container", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--synthetic", type=int, default=64)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("probe", help="linear probe on a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--ratio", default="7:3")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser("mil", help="attention pooling over instance bags")
    p.add_argument("--features", required=True)
    p.add_argument("--bag-ids", required=True)
    p.add_argument("--bag-labels", required=True)
    p.add_argument("--ratio", default="7:3")
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_mil)

    p = sub.add_parser("knn", help="nearest-neighbor retrieval scores")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--ratio", default="7:3")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_knn)

    p = sub.add_parser("genes", help="expression regression with held-out patients")
    p.add_argument("--features", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--patients", required=True)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_genes)

    p = sub.add_parser("metrics", help="classification metrics from CSV columns")
    p.add_argument("--true", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--scores", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("run-task", help="run one benchmark task")
    p.add_argument("--task", type=int, required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_run_task)

    p = sub.add_parser("run-suite", help="run benchmark tasks and write summaries")
    p.add_argument("--tasks", default="all")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_run_suite)

    p = sub.add_parser("report", help="compose reports and score agreement")
    p.add_argument("--cases", default=None, help="JSON with reference/candidate report lists")
    p.add_argument("--demo", type=int, default=24, help="demo case count when --cases is absent")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"porc: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, ShapeError, MetricError) as e:
        print(f"porc: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        # unreadable or missing input files count as data problems
        print(f"porc: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, GraphError) as e:
        print(f"porc: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
