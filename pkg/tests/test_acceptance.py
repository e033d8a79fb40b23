"""Acceptance gate: ten go/no-go checks over the whole pipeline.

Each check prints a single PASS/FAIL line on the real stdout (bypassing
pytest capture) so the verdicts are visible in any log, then asserts.
Run order follows the numbering; every check is independent.
"""

import csv
import dataclasses
import math
import time

import numpy as np

from porc import autodiff as ad
from porc.autodiff import Tape, Tensor, backward, tensor
from porc.crops import make_crop_set
from porc.encoder import EncoderConfig
from porc.errors import ConfigError
from porc.harness import run_suite, write_summary_csv
from porc.losses import dino_loss, ibot_loss, koleo_loss
from porc.metrics import (
    auroc,
    average_precision,
    mean_average_precision,
    segmentation_scores,
    weighted_f1,
)
from porc.mil import MilConfig, _forward, predict_mil, train_mil
from porc.probe import predict, train_probe
from porc.regression import fit_ridge, predict_ridge
from porc.reports import GRADES, PANELS, POLYPS, ColorectalReport, compose_lymphoma
from porc.slides import compute_tissue_mask, read_container, sample_patches, write_container
from porc.trainer import SslHyper, ema_update, init_state, train_step

from helpers import fd_gradient, rel_err


def _verdict(capsys, ok: bool, name: str, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    with capsys.disabled():  # the verdict stays visible under capture
        print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------- check 1

def test_01_gradient_checks(capsys):
    """Five loss gradients vs central finite differences, 100 random
    probes each, worst relative error <= 1e-4, under 60 s."""
    t0 = time.perf_counter()
    worst: dict[str, float] = {}

    errs = []
    for i in range(100):
        rng = np.random.default_rng(1000 + i)
        tl = rng.normal(size=(2, 6), scale=2.0)
        c = rng.normal(size=6, scale=0.5)
        tt = float(rng.uniform(0.05, 0.5))
        ts = float(rng.uniform(0.1, 1.0))
        s0 = rng.normal(size=(4, 6))

        def f(v):
            return dino_loss(tl, tensor(v), center=c, teacher_temp=tt,
                             student_temp=ts, n_shared_views=2).item()

        s = tensor(s0, requires_grad=True)
        with Tape() as tape:
            loss = dino_loss(tl, s, center=c, teacher_temp=tt,
                             student_temp=ts, n_shared_views=2)
        backward(tape, loss)
        errs.append(rel_err(s.grad, fd_gradient(f, s0)))
    worst["view-alignment"] = max(errs)

    errs = []
    for i in range(100):
        rng = np.random.default_rng(2000 + i)
        tl = rng.normal(size=(7, 5), scale=2.0)
        c = rng.normal(size=5, scale=0.5)
        mask = rng.random(7) < 0.5
        mask[int(rng.integers(0, 7))] = True  # never empty
        tt = float(rng.uniform(0.05, 0.5))
        ts = float(rng.uniform(0.1, 1.0))
        s0 = rng.normal(size=(7, 5))

        def f(v):
            return ibot_loss(tl, tensor(v), mask, center=c, teacher_temp=tt,
                             student_temp=ts).item()

        s = tensor(s0, requires_grad=True)
        with Tape() as tape:
            loss = ibot_loss(tl, s, mask, center=c, teacher_temp=tt, student_temp=ts)
        backward(tape, loss)
        errs.append(rel_err(s.grad, fd_gradient(f, s0)))
    worst["masked-token"] = max(errs)

    errs = []
    for i in range(100):
        rng = np.random.default_rng(3000 + i)
        f0 = rng.normal(size=(5, 4))

        def f(v):
            return koleo_loss(tensor(v)).item()

        x = tensor(f0, requires_grad=True)
        with Tape() as tape:
            loss = koleo_loss(x)
        backward(tape, loss)
        errs.append(rel_err(x.grad, fd_gradient(f, f0)))
    worst["spreading"] = max(errs)

    errs = []
    for i in range(100):
        rng = np.random.default_rng(4000 + i)
        n, d, L, K = int(rng.integers(2, 6)), 3, 3, 2
        bag = rng.normal(size=(n, d))
        shapes = {"att.v": (L, d), "att.w": (L, 1), "cls.w": (d, K), "cls.b": (K,)}
        names = sorted(shapes)
        p0 = np.concatenate([rng.normal(size=shapes[k]).ravel() for k in names])
        y = int(rng.integers(0, K))
        onehot = np.zeros((1, K))
        onehot[0, y] = 1.0

        def unpack(vec):
            out, at = {}, 0
            for k in names:
                size = int(np.prod(shapes[k]))
                out[k] = vec[at : at + size].reshape(shapes[k])
                at += size
            return out

        def f(vec):
            tensors = {k: Tensor(v) for k, v in unpack(vec).items()}
            logits, _ = _forward(tensors, bag)
            return ad.neg(ad.tsum(ad.mul(Tensor(onehot), ad.log_softmax(logits)))).item()

        tensors = {k: Tensor(v, requires_grad=True) for k, v in unpack(p0).items()}
        with Tape() as tape:
            logits, _ = _forward(tensors, bag)
            loss = ad.neg(ad.tsum(ad.mul(Tensor(onehot), ad.log_softmax(logits))))
        backward(tape, loss)
        grad = np.concatenate([tensors[k].grad.ravel() for k in names])
        errs.append(rel_err(grad, fd_gradient(f, p0)))
    worst["attention-pool"] = max(errs)

    errs = []
    for i in range(100):
        rng = np.random.default_rng(5000 + i)
        n, d, K = 8, 3, 3
        x = rng.normal(size=(n, d))
        y = rng.integers(0, K, size=n)
        lr = 0.1
        # one descent step from zero exposes the analytic gradient
        model = train_probe(x, y, n_classes=K, lr=lr, max_iters=1)
        grad_code = np.concatenate([(-model.weights / lr).ravel(), -model.bias / lr])

        def f(vec):
            w = vec[: d * K].reshape(d, K)
            b = vec[d * K :]
            z = x @ w + b
            z = z - z.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            return float(-logp[np.arange(n), y].mean())

        errs.append(rel_err(grad_code, fd_gradient(f, np.zeros(d * K + K))))
    worst["linear-probe"] = max(errs)

    elapsed = time.perf_counter() - t0
    peak = max(worst.values())
    ok = peak <= 1e-4 and elapsed < 60.0
    _verdict(capsys, ok, "gradient-checks",
             f"worst rel err {peak:.2e} over 5 losses x 100 probes, {elapsed:.1f}s")


# ---------------------------------------------------------------- check 2

def test_02_loss_closed_forms(capsys):
    gaps = []
    for k in (2, 16, 64):
        gaps.append(abs(dino_loss(np.zeros(k), tensor(np.zeros(k))).item() - math.log(k)))
    empty = ibot_loss(np.zeros((4, 3)), tensor(np.zeros((4, 3))), np.zeros(4, dtype=bool)).item()
    ortho = koleo_loss(tensor(np.eye(2))).item()
    gaps.append(abs(ortho - (-math.log(math.sqrt(2.0)))))
    ok = max(gaps) <= 1e-12 and empty == 0.0
    _verdict(capsys, ok, "loss-closed-forms",
             f"uniform alignment ln K, empty-mask 0, orthonormal spread -ln sqrt(2); "
             f"max gap {max(gaps):.2e}")


# ---------------------------------------------------------------- check 3

def test_03_schedule_endpoints(capsys):
    h = SslHyper()
    start = h.resolve(0)
    peak_lr = h.resolve(h.warmup_epochs * h.steps_per_epoch)[0]
    end = h.resolve(h.total_steps)
    endpoints_ok = (
        start == (0.0, 0.04, 0.992, 0.04)
        and peak_lr == 2e-3
        and end == (1e-6, 0.4, 1.0, 0.4)
    )
    from porc.optim import clip_global_norm

    grads = {"g": np.array([6.0, 8.0])}  # norm 10
    clipped, pre_norm = clip_global_norm(grads, 3.0)
    post = float(np.linalg.norm(clipped["g"]))
    clip_ok = abs(post - 3.0) <= 1e-12 and abs(pre_norm - 10.0) <= 1e-12
    _verdict(capsys, endpoints_ok and clip_ok, "schedule-endpoints",
             f"lr 0->2e-3->1e-6, temp 0.04->0.4, momentum 0.992->1.0, wd 0.04->0.4 exact; "
             f"norm-10 gradient clipped to {post:.15f}")


# ---------------------------------------------------------------- check 4

def test_04_ema_closed_form(capsys):
    rng = np.random.default_rng(0)
    student = {"w": rng.normal(size=(5, 4)), "b": rng.normal(size=4)}
    t0 = {k: rng.normal(size=v.shape) for k, v in student.items()}
    m, k = 0.992, 100
    teacher = {k2: v.copy() for k2, v in t0.items()}
    for _ in range(k):
        teacher = ema_update(teacher, student, m)
    gap = max(
        float(np.abs(teacher[name] - (m**k * t0[name] + (1 - m**k) * student[name])).max())
        for name in student
    )
    _verdict(capsys, gap < 1e-12, "ema-closed-form",
             f"100 steps at momentum 0.992 vs geometric form, max |err| {gap:.2e}")


# ---------------------------------------------------------------- check 5

def test_05_collapse_sentinel(capsys):
    """Constant inputs, no spreading term, sharp teacher: without
    centering the teacher targets collapse; with centering they stay
    spread. 500 steps per arm."""
    base = SslHyper()

    def hyper(use_centering):
        return SslHyper(
            encoder=EncoderConfig(grid=2, embed_dim=8, depth=1, feat_dim=8, mlp_hidden=8),
            head=dataclasses.replace(base.head, hidden=8, prototypes=16),
            crop=dataclasses.replace(base.crop, global_size=32, local_size=16, local_count=2),
            epochs=20, steps_per_epoch=25, warmup_epochs=0, freeze_epochs=0,
            teacher_temp_warmup_epochs=1, batch_size=2,
            lr_peak=2e-3, lr_final=2e-3,
            teacher_temp=(0.04, 0.04), momentum=(0.9, 0.9), weight_decay=(0.0, 0.0),
            koleo_weight=0.0, use_centering=use_centering,
        )

    patch = np.full((64, 64, 3), 128, np.uint8)
    patch[:32] = 40
    sets = [make_crop_set(patch, hyper(True).crop, seed=0),
            make_crop_set(patch, hyper(True).crop, seed=1)]

    t0 = time.perf_counter()
    final = {}
    for centering in (False, True):
        state = init_state(hyper(centering), seed=0)
        for _ in range(500):
            state, m = train_step(state, sets)
        final[centering] = m.teacher_entropy
    elapsed = time.perf_counter() - t0

    ln_k = math.log(16)
    ok = final[False] < 0.01 * ln_k and final[True] > 0.1 * ln_k and elapsed < 300.0
    _verdict(capsys, ok, "collapse-sentinel",
             f"centering off {final[False]:.4f} < {0.01 * ln_k:.4f}, "
             f"on {final[True]:.4f} > {0.1 * ln_k:.4f} (ln K = {ln_k:.4f}), {elapsed:.1f}s")


# ---------------------------------------------------------------- check 6

def test_06_downstream_floors(capsys):
    # margin-1 separable clusters -> perfect training fit within the cap
    rng = np.random.default_rng(0)
    n = 30
    x = np.vstack([
        np.column_stack([rng.uniform(-1.5, -0.5, n), rng.normal(0, 0.3, n)]),
        np.column_stack([rng.uniform(0.5, 1.5, n), rng.normal(0, 0.3, n)]),
    ])
    y = np.repeat([0, 1], n)
    probe = train_probe(x, y)
    probe_acc = float((predict(probe, x) == y).mean())
    probe_ok = probe_acc == 1.0 and probe.n_iters <= 1000

    # signal-instance bags, default single-bag recipe, held-out ranking
    def bags_with_labels(seed, count):
        r = np.random.default_rng(seed)
        bags, labels = [], []
        for i in range(count):
            label = i % 2
            inst = r.normal(0.0, 0.1, size=(6, 4))
            if label:
                inst[:3, 0] += 3.0
            bags.append(inst)
            labels.append(label)
        return bags, np.array(labels)

    train_b, train_y = bags_with_labels(1, 20)
    test_b, test_y = bags_with_labels(2, 20)
    model = train_mil(train_b, train_y, MilConfig(), seed=0)
    mil_auc = auroc(test_y, predict_mil(model, test_b)[:, 1])
    mil_ok = mil_auc >= 0.95

    # exactly-linear targets reproduced by the closed-form fit
    xr = np.random.default_rng(3).normal(size=(40, 6))
    w = np.random.default_rng(4).normal(size=(6, 3))
    yr = xr @ w
    ridge = fit_ridge(xr, yr, lam=0.0)
    ridge_gap = float(np.abs(predict_ridge(ridge, xr) - yr).max())
    ridge_ok = ridge_gap <= 1e-9

    _verdict(capsys, probe_ok and mil_ok and ridge_ok, "downstream-floors",
             f"probe train acc {probe_acc:.2f} in {probe.n_iters} iters, "
             f"bag AUC {mil_auc:.3f}, ridge max |err| {ridge_gap:.1e}")


# ---------------------------------------------------------------- check 7

def _pair_count_auc(y, s):
    pos = s[y == 1]
    neg = s[y == 0]
    wins = sum((p > q) + 0.5 * (p == q) for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def _sweep_ap(preds, truths, thr):
    """Threshold-sweep oracle: evaluate precision/recall on every
    confidence prefix, envelope from the right, integrate."""

    def prefix_tp(prefix):
        matched = set()
        tp = 0
        for img, _, region in prefix:
            best, best_j = 0.0, -1
            for j, (timg, tregion) in enumerate(truths):
                if j in matched or timg != img:
                    continue
                ax0, ay0, ax1, ay1 = region
                bx0, by0, bx1, by1 = tregion
                ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
                iy = max(0.0, min(ay1, by1) - max(ay0, by0))
                inter = ix * iy
                union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
                ov = inter / union if union > 0 else 0.0
                if ov > best:
                    best, best_j = ov, j
            if best >= thr and best_j >= 0:
                matched.add(best_j)
                tp += 1
        return tp

    ranked = sorted(preds, key=lambda p: -p[1])
    points = []
    for k in range(1, len(ranked) + 1):
        tp = prefix_tp(ranked[:k])
        points.append((tp / len(truths), tp / k))
    ap, prev_r = 0.0, 0.0
    for idx, (r, _) in enumerate(points):
        best_p = max(p for _, p in points[idx:])
        ap += (r - prev_r) * best_p
        prev_r = r
    return ap


def test_07_metric_oracles(capsys):
    rng = np.random.default_rng(0)
    auc_gap = 0.0
    for _ in range(20):
        n = int(rng.integers(10, 201))
        y = rng.integers(0, 2, size=n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        s = np.round(rng.normal(size=n), 1)  # coarse scores force ties
        auc_gap = max(auc_gap, abs(auroc(y, s) - _pair_count_auc(y, s)))

    ap_gap = 0.0
    for scene in range(20):
        r = np.random.default_rng(100 + scene)
        truths = []
        for t in range(int(r.integers(1, 11))):
            x0, y0 = r.uniform(0, 24, size=2)
            truths.append(("img0", (x0, y0, x0 + r.uniform(3, 8), y0 + r.uniform(3, 8))))
        preds = []
        order = r.permutation(len(truths))
        confs = r.permutation(len(truths) + 2) + 1.0  # distinct confidences
        for rank, j in enumerate(order):
            if r.random() < 0.75:
                _, (x0, y0, x1, y1) = truths[j]
                jx, jy = r.uniform(-1, 1, size=2)
                preds.append(("img0", float(confs[rank]),
                              (x0 + jx, y0 + jy, x1 + jx, y1 + jy)))
        preds.append(("img0", float(confs[-1]), (0.0, 0.0, 2.0, 2.0)))
        for thr in (0.5, 0.25):
            ap_gap = max(ap_gap, abs(average_precision(preds, truths, iou_threshold=thr)
                                     - _sweep_ap(preds, truths, thr)))

    map_gap = abs(
        mean_average_precision(
            {"a": [("i", 0.9, (0, 0, 4, 4))], "b": []},
            {"a": [("i", (0, 0, 4, 4))], "b": [("i", (8, 8, 12, 12))]},
        )
        - 0.5
    )

    wf1 = weighted_f1(np.array([0, 0, 0, 1]), np.array([0, 0, 1, 1]))
    wf1_ok = abs(wf1 - 0.7667) <= 1e-4

    seg = segmentation_scores(np.array([[0, 0], [1, 1]]), np.array([[0, 0], [0, 1]]))
    seg_ok = seg["mean_pixel_accuracy"] == 5 / 6

    ok = auc_gap <= 1e-12 and ap_gap <= 1e-12 and map_gap <= 1e-12 and wf1_ok and seg_ok
    _verdict(capsys, ok, "metric-oracles",
             f"AUC vs pair counting {auc_gap:.1e}, AP vs threshold sweep {ap_gap:.1e}, "
             f"weighted F1 {wf1:.4f}, four-pixel MPA == 5/6")


# ---------------------------------------------------------------- check 8

EXPECTED_CATEGORY_COUNTS = {
    "quality-control": 12,
    "pan-cancer": 3,
    "reference-benchmarks": 15,
    "cancer-subtyping": 36,
    "grading-staging": 36,
    "molecular": 10,
}


def test_08_suite_determinism(tmp_path, capsys):
    state = init_state(SslHyper(), seed=0)
    ids = list(range(1, 113))
    paths = []
    for run in ("a", "b"):
        results = run_suite(ids, state, base_seed=0, jobs=2)
        path = tmp_path / f"summary_{run}.csv"
        write_summary_csv(results, path)
        paths.append(path)
    identical = paths[0].read_bytes() == paths[1].read_bytes()

    seen: dict[str, set] = {}
    with open(paths[0]) as fh:
        for row in csv.DictReader(fh):
            seen.setdefault(row["category"], set()).add(int(row["task_id"]))
    counts = {cat: len(tasks) for cat, tasks in seen.items()}
    total = len(set().union(*seen.values()))
    ok = identical and counts == EXPECTED_CATEGORY_COUNTS and total == 112
    _verdict(capsys, ok, "suite-determinism",
             f"two runs byte-identical over {total} tasks, category sizes "
             + "/".join(str(counts.get(c, 0)) for c in EXPECTED_CATEGORY_COUNTS))


# ---------------------------------------------------------------- check 9

def test_09_slide_store(tmp_path, capsys):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(512, 768, 3), dtype=np.uint8)
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    write_container(img, 256, tmp_path / "a" / "s.pths")
    c = read_container(tmp_path / "a" / "s.pths")
    write_container(c.image, c.tile_size, tmp_path / "b" / "s.pths")
    roundtrip_ok = (
        np.array_equal(c.image, img)
        and (tmp_path / "a" / "s.pths").read_bytes() == (tmp_path / "b" / "s.pths").read_bytes()
    )

    big = np.zeros((5120, 8192, 3), dtype=np.uint8)
    big[..., 0] = 150
    big[..., 2] = 130
    container = write_container(big, 256, tmp_path / "big.pths")
    refs = sample_patches(container, compute_tissue_mask(container), side=256, cap=500, seed=0)
    xs = np.array([r.x for r in refs])
    ys = np.array([r.y for r in refs])
    dx = np.abs(xs[:, None] - xs[None, :])
    dy = np.abs(ys[:, None] - ys[None, :])
    upper = np.triu(np.ones_like(dx, dtype=bool), k=1)
    disjoint = bool(((dx >= 256) | (dy >= 256))[upper].all())
    n_pairs = int(upper.sum())

    ok = roundtrip_ok and len(refs) == 500 and disjoint and n_pairs >= 10_000
    _verdict(capsys, ok, "slide-store",
             f"container round-trip byte-exact, {len(refs)} patches, "
             f"{n_pairs} pairs disjoint")


# ---------------------------------------------------------------- check 10

def test_10_report_composer(capsys):
    withheld = {"CD10", "CD20", "CXCL-13"}
    observed = {m: "positive" for m in PANELS["AITL"] if m not in withheld}
    report = compose_lymphoma("case-p1", "AITL", observed)
    missing_ok = set(report.missing_markers) == withheld and len(report.missing_markers) == 3

    rng = np.random.default_rng(0)
    grade_pool = list(GRADES) + [None, "bogus"]
    polyp_pool = list(POLYPS) + [None, "bogus"]
    violations = 0
    for i in range(10_000):
        malignant = bool(rng.integers(0, 2))
        grade = grade_pool[int(rng.integers(0, len(grade_pool)))]
        polyp = polyp_pool[int(rng.integers(0, len(polyp_pool)))]
        # the rule, restated independently: malignant reports carry a
        # valid grade and no polyp; benign reports carry a valid polyp
        # (defaulting to none) and no grade
        expect_ok = (
            (malignant and grade in GRADES and polyp is None)
            or (not malignant and grade is None and (polyp is None or polyp in POLYPS))
        )
        try:
            r = ColorectalReport(case_id=f"c{i}", malignant=malignant, grade=grade, polyp=polyp)
        except ConfigError:
            if expect_ok:
                violations += 1
            continue
        if not expect_ok:
            violations += 1
        elif (r.grade is not None) == (r.polyp is not None):  # exactly one must be set
            violations += 1

    ok = missing_ok and violations == 0
    _verdict(capsys, ok, "report-composer",
             f"withheld trio reported missing exactly, "
             f"grade-xor-polyp fuzz 10000 cases {violations} violations")
