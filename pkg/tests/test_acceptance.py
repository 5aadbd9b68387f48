"""End-to-end acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the terminal summary.  The two 500-step training runs
are shared by criteria 8 and 9 through a module-scoped fixture.
"""
import math
import time

import numpy as np
import pytest

from fourpoint.config import RunConfig
from fourpoint.data import DEFAULT_PALETTE, ClassPalette, SynthSpec, synth_generate
from fourpoint.data.synth import OCCLUDERS
from fourpoint.geometry import BoundingBox, CornerId, NormMode, WarpMode, expand_box, forward_map, inverse_map, wrap_angle
from fourpoint.loss_metrics import (
    confusion_counts,
    cross_entropy,
    dice_loss,
    f1_scores,
    occlusion_penalty,
    occlusion_value_map,
    one_hot,
    total_loss,
)
from fourpoint.micronet import (
    NetConfig,
    Tensor,
    TrainConfig,
    fixed_grid_resample,
    fpb_forward,
    ftnet_forward,
    grad_check,
    init_params,
    poly_lr,
    predict,
    train,
)
from fourpoint.micronet.tensor import conv2d
from fourpoint.micronet.train import loss_tensor
from fourpoint.pipeline import make_transform, smooth_noise_image, warp_dataset
from fourpoint.resample import FourPointTransform, WarpGrid

from . import oracles

OVERFIT_STEPS = 500
TOY_RUN = RunConfig(warp_size=64)


def in_box_mask(hw, b: BoundingBox):
    ys, xs = np.mgrid[0:hw[0], 0:hw[1]]
    return (xs + 0.5 > b.x_min) & (xs + 0.5 < b.x_max) & (ys + 0.5 > b.y_min) & (ys + 0.5 < b.y_max)


def weighted_sum(t: Tensor, w: np.ndarray) -> Tensor:
    return Tensor(np.sum(t.data * w), parents=(t,), backward=lambda g: (g * w,))


def toy_set(seed, count, occlusion):
    spec = SynthSpec(seed=seed, count=count, size=64, occlusion={k: occlusion for k in OCCLUDERS})
    return warp_dataset(synth_generate(spec), TOY_RUN)


class _Stop(Exception):
    pass


@pytest.fixture(scope="module")
def overfit_runs():
    """Train the default toy network for 500 steps with alpha = 2 and alpha = 0."""
    x, y = toy_set(seed=0, count=8, occlusion=0.3)
    net = NetConfig()
    runs = {}
    for alpha in (2.0, 0.0):
        t0 = time.perf_counter()
        params = init_params(net, 0)
        hist = train(params, x, y, net, TrainConfig(max_iter=OVERFIT_STEPS, alpha=alpha, seed=0))
        runs[alpha] = (params, hist, time.perf_counter() - t0)
    return net, x, y, runs


def test_criterion_01_geometry_round_trip(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    theta = rng.uniform(-math.pi, math.pi, 10_000)
    rho = rng.uniform(0.0, 0.999, 10_000)
    roi = expand_box(BoundingBox(140, 90, 300, 290), 1.5)
    worst = 0.0
    for norm in NormMode:
        for q in CornerId:
            mode = WarpMode(norm)
            th2, rho2 = forward_map(inverse_map((theta, rho), roi, q, mode), roi, q, mode)
            worst = max(worst, np.abs(wrap_angle(th2 - theta)).max(), np.abs(rho2 - rho).max())
    elapsed = time.perf_counter() - t0
    criterion(1, worst <= 1e-9 and elapsed < 1.0,
              f"max round-trip error {worst:.2e} (<= 1e-9), {elapsed:.2f} s (< 1 s)")


def test_criterion_02_warp_restore_fidelity(criterion):
    t0 = time.perf_counter()
    cfg = RunConfig()
    maes = []
    for i in range(20):
        img = smooth_noise_image(512, seed=i)
        side = 128 + (256 * i) // 19
        box = BoundingBox(256 - side / 2, 256 - side / 2, 256 + side / 2, 256 + side / 2)
        t = make_transform((512, 512), box, cfg)
        err = np.abs(t.restore(t.warp(img)) - img).mean(axis=2)
        maes.append(float(err[in_box_mask((512, 512), box)].mean()))
    const = np.full((512, 512, 3), 0.37)
    box = BoundingBox(192, 192, 320, 320)
    t = make_transform((512, 512), box, cfg)
    back = t.restore(t.warp(const))
    const_err = float(np.abs(back - const)[in_box_mask((512, 512), box)].max())
    elapsed = time.perf_counter() - t0
    ok = max(maes) <= 2 / 255 and const_err <= 1e-6 and elapsed < 30
    criterion(2, ok, f"worst in-box MAE {max(maes) * 255:.3f}/255 (<= 2/255), constant error "
                     f"{const_err:.1e} (<= 1e-6), {elapsed:.1f} s (< 30 s)")


def test_criterion_03_label_round_trip(criterion):
    t0 = time.perf_counter()
    cfg = RunConfig()
    agree = []
    spec = SynthSpec(seed=3, count=20, occlusion={k: 0.3 for k in OCCLUDERS})
    for _, lab, box in synth_generate(spec):
        t = make_transform(lab.shape, box, cfg)
        back = np.argmax(t.restore(t.warp(one_hot(lab, 14))), axis=2)
        m = in_box_mask(lab.shape, box)
        agree.append(float((back[m] == lab[m]).mean()))
    elapsed = time.perf_counter() - t0
    criterion(3, min(agree) >= 0.99 and elapsed < 30,
              f"lowest in-box label agreement {min(agree):.4f} (>= 0.99), {elapsed:.1f} s (< 30 s)")


def test_criterion_04_linearity_and_convexity(criterion):
    rng = np.random.default_rng(4)
    lin_err = conv_err = 0.0
    for case in range(100):
        h, w = rng.integers(24, 64, 2)
        k = int(rng.integers(2, 8))
        x0, y0 = rng.uniform(0, w / 2), rng.uniform(0, h / 2)
        box = BoundingBox(x0, y0, x0 + rng.uniform(4, w / 2), y0 + rng.uniform(4, h / 2))
        mode = WarpMode(NormMode.ELLIPTIC if case % 2 else NormMode.CONSTANT)
        t = FourPointTransform((h, w), (32, 32), expand_box(box, 1.5), mode)
        a, b = rng.random((2, h, w, k))
        ca, cb = rng.normal(size=2)
        lin_err = max(lin_err, np.abs(t.warp(ca * a + cb * b) - (ca * t.warp(a) + cb * t.warp(b))).max())
        wa = t.warp(a)
        lin_err = max(lin_err, np.abs(t.restore(ca * wa + cb * wa) - (ca + cb) * t.restore(wa)).max())
        probs = a / a.sum(axis=2, keepdims=True)
        warped = t.warp(probs)
        sums = warped.sum(axis=2)
        covered = sums > 0.5
        restored = t.restore(warped)
        rsums = restored.sum(axis=2)
        rcov = rsums > 0.5
        conv_err = max(conv_err,
                       np.abs(sums[covered] - 1).max(initial=0), np.abs(sums[~covered]).max(initial=0),
                       np.abs(rsums[rcov] - 1).max(initial=0),
                       max(0.0, -warped.min(), -restored.min()),
                       max(0.0, warped.max() - probs.max(), restored.max() - probs.max()))
    criterion(4, lin_err <= 1e-6 and conv_err <= 1e-6,
              f"linearity error {lin_err:.1e}, convexity error {conv_err:.1e} over 100 cases (<= 1e-6)")


def _palette(k):
    names = tuple(f"class{i}" for i in range(k))
    colors = tuple((i * 17 % 256, i * 53 % 256, i * 91 % 256) for i in range(k))
    return ClassPalette(names, colors, skin=1, occlusion=(k - 1,))


def test_criterion_05_loss_oracles(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        h, w = (int(v) for v in rng.integers(4, 33, 2))
        k = int(rng.integers(4, 15))
        pal = _palette(k)
        # piecewise-constant maps keep boundaries realistic (and the brute force affordable)
        coarse = rng.integers(0, k, (4, 4))
        g = coarse[np.arange(h) * 4 // h][:, np.arange(w) * 4 // w]
        logits = rng.normal(size=(h, w, k)) + 3.0 * one_hot(g, k)
        s = np.exp(logits)
        s /= s.sum(axis=2, keepdims=True)
        sl, gl = s.tolist(), g.tolist()
        occ = (k - 1,)
        diffs = [
            cross_entropy(s, g) - oracles.cross_entropy(sl, gl),
            dice_loss(s, one_hot(g, k)) - oracles.dice(sl, gl, k),
            occlusion_penalty(s, g, occlusion_value_map(g, pal), pal)
            - oracles.occlusion_penalty(sl, gl, occ, 1),
            total_loss(s, g, pal, alpha=2.0).total - oracles.total_loss(sl, gl, k, 2.0, occ, 1),
        ]
        worst = max(worst, max(abs(d) for d in diffs))
    g = np.random.default_rng(6).integers(0, 14, (16, 16))
    perfect = np.full((16, 16, 14), 1e-9 / 13)
    np.put_along_axis(perfect, g[..., None], 1 - 1e-9, axis=-1)
    perfect_total = total_loss(perfect, g).total
    uniform_gap = max(abs(cross_entropy(np.full((8, 8, c), 1.0 / c), g[:8, :8] % c) - math.log(c))
                      for c in (4, 9, 14))
    ok = worst <= 1e-9 and perfect_total <= 1e-6 and uniform_gap <= 1e-9
    criterion(5, ok, f"max oracle gap {worst:.1e} (<= 1e-9), perfect total {perfect_total:.1e} (<= 1e-6), "
                     f"uniform CE gap {uniform_gap:.1e} (<= 1e-9)")


def test_criterion_06_gradients(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    errs = {}

    p = {"x": Tensor(rng.normal(size=(1, 6, 6, 3)), requires_grad=True),
         "w": Tensor(rng.normal(size=(3, 3, 3, 4)), requires_grad=True),
         "b": Tensor(rng.normal(size=4), requires_grad=True)}
    wts = rng.normal(size=(1, 6, 6, 4))
    errs["conv2d"] = grad_check(lambda: weighted_sum(conv2d(p["x"], p["w"], p["b"]), wts), p)

    x = Tensor(rng.normal(size=(1, 8, 8, 2)), requires_grad=True)
    sx, sy = rng.uniform(-1, 8, (2, 6, 7))
    grid = WarpGrid(6, 7, sx, sy, rng.random((6, 7)) < 0.9)
    wts = rng.normal(size=(1, 6, 7, 2))
    errs["fixed_grid_resample"] = grad_check(lambda: weighted_sum(fixed_grid_resample(x, grid), wts),
                                             {"x": x}, eps=1e-4, tolerance=1e-6)

    fcfg = NetConfig(stem_channels=4, widths=(4,), blocks_per_stage=1, input_size=(8, 8), num_classes=2,
                     decoder_channels=4)
    fp = {k: v for k, v in init_params(fcfg, 6).items() if k.startswith("s0.b0")}
    for k in fp:
        if k.endswith(".b"):
            fp[k].data[:] = rng.normal(scale=0.1, size=fp[k].shape)
    fx = Tensor(rng.normal(size=(1, 8, 8, 4)), requires_grad=True)
    wts = rng.normal(size=(1, 8, 8, 4))
    errs["fpb"] = grad_check(lambda: weighted_sum(fpb_forward(fx, fp, "s0.b0"), wts), {"x": fx, **fp})

    net = NetConfig(stem_channels=4, widths=(4, 8), blocks_per_stage=1, input_size=(32, 32),
                    decoder_channels=8)
    np_ = init_params(net, 7)
    for k in np_:
        if k.endswith(".b"):
            np_[k].data[:] = rng.normal(scale=0.05, size=np_[k].shape)
    img, lab, box = synth_generate(SynthSpec(seed=6, count=1, size=64, occlusion={"hand_occ": 1.0}))[0]
    xw, yw = warp_dataset([(img, lab, box)], RunConfig(warp_size=32))
    errs["ftnet end-to-end"] = grad_check(
        lambda: loss_tensor(ftnet_forward(xw, np_, net), yw, alpha=2.0, weight_l=0.5)[0],
        np_, samples=20, seed=6, tolerance=1e-3)

    elapsed = time.perf_counter() - t0
    ok = all(r.passed for r in errs.values()) and elapsed < 300
    detail = ", ".join(f"{k} {r.max_rel_error:.1e} (< {r.tolerance:g})" for k, r in errs.items())
    criterion(6, ok, f"{detail}; {elapsed:.1f} s (< 5 min)")


def test_criterion_07_fpb_residual_identity(criterion):
    cfg = NetConfig(stem_channels=8, widths=(8,), blocks_per_stage=1, input_size=(16, 16), num_classes=2,
                    decoder_channels=4)
    p = init_params(cfg, 7)
    p["s0.b0.expand.w"].data[:] = 0.0
    p["s0.b0.expand.b"].data[:] = 0.0
    x = np.random.default_rng(7).normal(size=(2, 16, 16, 8))
    err = float(np.abs(fpb_forward(Tensor(x), p, "s0.b0").data - x).max())
    criterion(7, err <= 1e-12, f"max |FPB(x) - x| with zeroed residual path {err:.1e} (<= 1e-12)")


def test_criterion_08_toy_overfit(criterion, overfit_runs):
    net, x, y, runs = overfit_runs
    params, hist, seconds = runs[2.0]
    acc = float((predict(params, x, net).argmax(axis=-1) == y).mean())

    # determinism: a fresh run with the same seed reproduces the logged steps bitwise
    replay = []

    def log(rec):
        replay.append(rec)
        if len(replay) == 25:
            raise _Stop

    with pytest.raises(_Stop):
        train(init_params(net, 0), x, y, net, TrainConfig(max_iter=OVERFIT_STEPS, alpha=2.0, seed=0), log=log)
    same = replay == hist[:25]
    ok = acc >= 0.95 and same and seconds < 600
    criterion(8, ok, f"pixel accuracy {acc:.4f} after {len(hist)} steps (>= 0.95), "
                     f"rerun identical={same}, {seconds:.0f} s (< 10 min)")


def test_criterion_09_occlusion_awareness(criterion, overfit_runs):
    net, _, _, runs = overfit_runs
    xh, yh = toy_set(seed=1, count=16, occlusion=0.5)
    occ = np.isin(yh, DEFAULT_PALETTE.occlusion)
    rates = {}
    for alpha, (params, _, _) in runs.items():
        pred = predict(params, xh, net).argmax(axis=-1)
        rates[alpha] = float((pred[occ] == DEFAULT_PALETTE.skin).mean())
    criterion(9, rates[2.0] < rates[0.0],
              f"skin predicted inside occluders: alpha=2 {rates[2.0]:.3f} vs alpha=0 {rates[0.0]:.3f} "
              f"over {int(occ.sum())} held-out pixels (strictly lower)")


def test_criterion_10_schedule(criterion, overfit_runs):
    _, _, _, runs = overfit_runs
    hist = runs[2.0][1]
    lr0 = hist[0]["lr"]
    mid = hist[OVERFIT_STEPS // 2]["lr"]
    gap = abs(mid - 0.01 * 0.5 ** 0.9)
    ok = lr0 == 0.01 and gap <= 1e-9 and poly_lr(OVERFIT_STEPS // 2, OVERFIT_STEPS) == mid
    criterion(10, ok, f"logged lr at iter 0 = {lr0} (= 0.01), at iter {OVERFIT_STEPS // 2} = {mid:.12f} "
                      f"(0.01*0.5^0.9, gap {gap:.1e})")


def test_criterion_11_f1_machinery(criterion):
    g = np.array([[0, 0, 1, 1],
                  [0, 2, 1, 1],
                  [2, 2, 2, 1],
                  [0, 0, 2, 2]])
    p = np.array([[0, 1, 1, 1],
                  [0, 2, 2, 1],
                  [2, 2, 0, 1],
                  [0, 0, 2, 1]])
    counted = {0: (4, 1, 1), 1: (4, 2, 1), 2: (4, 1, 2)}  # (tp, fp, fn) by hand
    c = confusion_counts(p, g, 3)
    per, _ = f1_scores(p, g, 3)
    counts_ok = all((c.tp[k], c.fp[k], c.fn[k]) == v for k, v in counted.items())
    f1_ok = all(per[k] == 2 * tp / (2 * tp + fp + fn) for k, (tp, fp, fn) in counted.items())
    g2 = np.array([[1, 1, 0, 0]] * 4)
    p2 = np.ones((4, 4), int)  # class 1: precision 0.5, recall 1
    two_thirds, _ = f1_scores(p2, g2, 2)
    ok = counts_ok and f1_ok and abs(two_thirds[1] - 2 / 3) <= 1e-15
    criterion(11, ok, f"hand-counted tables match={counts_ok and f1_ok}, "
                      f"precision 0.5/recall 1 F1 = {two_thirds[1]:.6f} (2/3)")


@pytest.mark.xfail(strict=True, reason="the boundary weight l switches once predicted boundaries appear and "
                          "momentum overshoots early, so the first 50 totals are not monotone")
def test_total_loss_strictly_decreases_over_first_50_steps(overfit_runs):
    _, _, _, runs = overfit_runs
    totals = [r["total"] for r in runs[2.0][1][:50]]
    assert all(b < a for a, b in zip(totals, totals[1:]))
