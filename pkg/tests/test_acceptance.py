"""Acceptance suite: one PASS/FAIL line per criterion, with its runtime.

Run under pytest (lines are printed even with output capture on) or
directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import sys
import tempfile
import time
from collections import OrderedDict
from pathlib import Path

import numpy as np
import pytest

from pulsedistill.dataio import (
    SynthConfig,
    read_checkpoint,
    read_frames,
    read_hr,
    read_ppg,
    read_tensor,
    synth_video,
    write_checkpoint,
    write_frames,
    write_hr,
    write_ppg,
    write_tensor,
)
from pulsedistill.diffcore import Tensor, norm_layer
from pulsedistill.diffcore.gradcheck import check_gradients
from pulsedistill.distill import FeaturePair, SEWeights, afd_loss, se_attention, total_loss
from pulsedistill.errors import BadMagicError, ChecksumError, TruncatedPayloadError, ValidationError
from pulsedistill.experiments import (
    KD_STUDENT_EPOCHS,
    KD_TEACHER_EPOCHS,
    BenchmarkSpec,
    ablation,
    comparable,
    kd_benchmark,
    median_mae,
    synthetic_benchmark,
)
from pulsedistill.losses import (
    brute_force_soft_dtw,
    brute_force_temporal,
    cost_matrix,
    dilate,
    hard_dtw,
    mse,
    soft_dtw,
    temporal_term,
)
from pulsedistill.models.layers import AttentionMask, Conv, ConvTranspose, Dense
from pulsedistill.models.nets import StudentNet, TeacherNet
from pulsedistill.models.train import TrainConfig, evaluate, save_model, train_student_kd, train_teacher
from pulsedistill.models.tsm import TemporalShift, TsmConfig, channel_groups, temporal_shift
from pulsedistill.signal import (
    bland_altman,
    butterworth_bandpass,
    estimate_hr,
    heart_rate,
    mae,
    metrics,
    nmse,
    pearson,
    pos_baseline,
    psnr_from_mse,
    rmse,
    write_report,
)
from pulsedistill.types import PpgSignal

# -- pinned tolerances and budgets -------------------------------------------------
ORACLE_PAIRS = 100
ORACLE_GAMMAS = (1.0, 0.1, 0.01)
TOL_SOFT_DTW_REL = 1e-9
TOL_TEMPORAL_REL = 1e-7
ORACLE_BUDGET_S = 10.0
HARD_GAMMA = 1e-4
TOL_HARD_ABS = 1e-3
TOL_SOFT_LE_HARD = 1e-12  # float round-off allowance on soft <= hard
TOL_GRAD_REL = 1e-4
MIN_GRAD_PROBES = 500
GRAD_BUDGET_S = 60.0
HR_TONES_HZ = (0.8, 1.2, 1.5, 2.5)
TOL_BASELINE_BPM = 2.0
TOL_DRIFT_BPM = 1.0
BASELINE_NOISE_SD = 0.005
KD_SEEDS = range(5)
KD_BUDGET_S = 15 * 60.0
FUZZ_CASES = 10_000


# -- criteria --------------------------------------------------------------------
def _oracle_instances():
    rng = np.random.default_rng(2024)
    return [(rng.normal(size=k), rng.normal(size=k)) for k in rng.integers(2, 6, size=ORACLE_PAIRS)]


def c1_oracle():
    t0 = time.perf_counter()
    worst_v = worst_t = 0.0
    for a, b in _oracle_instances():
        for g in ORACLE_GAMMAS:
            c = cost_matrix(a, b, g)
            ref_v = brute_force_soft_dtw(c.delta.data, g)
            ref_t = brute_force_temporal(c.delta.data, c.omega, g)
            worst_v = max(worst_v, abs(soft_dtw(c).item() - ref_v) / abs(ref_v))
            worst_t = max(worst_t, abs(temporal_term(c).item() - ref_t) / abs(ref_t))
    elapsed = time.perf_counter() - t0
    ok = worst_v <= TOL_SOFT_DTW_REL and worst_t <= TOL_TEMPORAL_REL and elapsed < ORACLE_BUDGET_S
    return ok, f"{ORACLE_PAIRS * len(ORACLE_GAMMAS)} cases, max rel err value {worst_v:.1e}, temporal {worst_t:.1e}"


def c2_hard_limit():
    worst_gap, worst_excess = 0.0, -math.inf
    for a, b in _oracle_instances():
        c = cost_matrix(a, b, HARD_GAMMA)
        hard, _ = hard_dtw(c.delta.data)
        worst_gap = max(worst_gap, abs(soft_dtw(c).item() - hard))
        for g in ORACLE_GAMMAS + (HARD_GAMMA,):
            worst_excess = max(worst_excess, soft_dtw(cost_matrix(a, b, g)).item() - hard)
    ok = worst_gap < TOL_HARD_ABS and worst_excess <= TOL_SOFT_LE_HARD
    return ok, f"max |soft - hard| at gamma=1e-4 {worst_gap:.1e}, max (soft - hard) {worst_excess:.1e}"


def _gradient_cases(rng):
    def leaf(*shape, lo=-1.0, hi=1.0):
        return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)

    def weighted(fn, shape):
        w = Tensor(rng.normal(size=shape))
        return lambda: (fn() * w).sum()

    cases = []
    pred, truth = leaf(10), rng.normal(size=10)
    for g in ORACLE_GAMMAS:
        cases.append((f"dilate g={g}", lambda g=g: dilate(pred, truth, 0.5, g), [pred]))
    cases.append(("dilate normalized", lambda: dilate(pred, truth, 0.5, 0.1, normalize=True), [pred]))
    cases.append(("mse", lambda: mse(pred, truth), [pred]))

    se = SEWeights(4, 2, rng=rng)
    feat = Tensor(rng.normal(size=(4, 3, 2, 2)))
    cases.append(("se", weighted(lambda: se_attention(feat, se), (4,)), se.parameters()))
    guided, hint = leaf(3, 4, 4, 4), Tensor(rng.normal(size=(4, 3, 2, 2)))
    se2 = SEWeights(4, 2, rng=rng)
    cases.append(("afd", lambda: afd_loss([FeaturePair(hint, guided)], [se2], 2.0), [guided] + se2.parameters()))
    cases.append(("total loss", lambda: total_loss(afd_loss([FeaturePair(hint, guided)], [se2]),
                                                   dilate(guided.mean(axis=(1, 2, 3)), truth[:3], 0.5, 0.1),
                                                   10.0, 10.0), [guided] + se2.parameters()))

    x2, x3 = leaf(2, 3, 5, 5), leaf(1, 2, 3, 4, 4)
    for name, mod, x in (
        ("conv2d", Conv(2, 3, 2, 3, stride=2, padding=1, rng=rng), x2),
        ("conv3d", Conv(3, 2, 2, 3, padding=1, rng=rng), x3),
        ("deconv2d", ConvTranspose(2, 3, 2, 2, stride=2, rng=rng), x2),
        ("deconv3d", ConvTranspose(3, 2, 2, (3, 1, 1), padding=(1, 0, 0), rng=rng), x3),
        ("mask2d", AttentionMask(2, 3, rng=rng), x2),
        ("mask3d", AttentionMask(3, 2, rng=rng), x3),
    ):
        cases.append((name, weighted(lambda m=mod, x=x: m(x), mod(x).shape), [x] + mod.parameters()))
    xd = leaf(4, 6)
    dense = Dense(6, 3, rng=rng)
    cases.append(("dense", weighted(lambda: dense(xd), (4, 3)), [xd] + dense.parameters()))
    for kind in ("batch", "instance"):
        cases.append((f"{kind} norm", weighted(lambda k=kind: norm_layer(x3, k), x3.shape), [x3]))
    xt = leaf(3, 4, 4, 4, lo=-2, hi=2)
    for variant in ("TSM1", "TSM2", "TSM3"):
        block = TemporalShift(TsmConfig(variant), 4, pool_out=(2, 2), rng=rng)
        cases.append((variant.lower(), weighted(lambda b=block: b(xt), block(xt).shape), [xt] + block.parameters()))

    small = (3, 3, 3, 6, 6, 3)
    for name, net, x in (
        ("student", StudentNet(8, small, "TSM1", 3, seed=1), Tensor(rng.normal(size=(3, 3, 8, 8)))),
        ("student tsm3", StudentNet(8, small, "TSM3", 3, seed=2), Tensor(rng.normal(size=(3, 3, 8, 8)))),
        ("teacher", TeacherNet(8, small, 3, seed=3), Tensor(rng.normal(size=(3, 3, 8, 8)))),
    ):
        cases.append((name, weighted(lambda n=net, x=x: n(x)[0], (3,)), net.parameters(), 40))
    return cases


def c3_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst, total, worst_name = 0.0, 0, ""
    for case in _gradient_cases(rng):
        name, fn, params = case[:3]
        probes = case[3] if len(case) > 3 else None
        err, n = check_gradients(fn, params, probes=probes, rng=rng)
        total += n
        if err > worst:
            worst, worst_name = err, name
    elapsed = time.perf_counter() - t0
    ok = worst < TOL_GRAD_REL and total >= MIN_GRAD_PROBES and elapsed < GRAD_BUDGET_S
    return ok, f"{total} probes, max rel err {worst:.1e} ({worst_name})"


def _frame_indexed(t, c, hw=2):
    return np.broadcast_to(np.arange(1.0, t + 1)[:, None, None, None], (t, c, hw, hw)).copy()


def _expected_shift(t, c):
    f1, f2, _ = channel_groups(c)
    idx = np.arange(1.0, t + 1)
    exp = np.empty((t, c))
    exp[:, :f1] = np.append(idx[1:], 0.0)[:, None]
    exp[:, f1 : f1 + f2] = np.insert(idx[:-1], 0, 0.0)[:, None]
    exp[:, f1 + f2 :] = idx[:, None]
    return exp


def c4_tsm():
    checks = []
    assert channel_groups(3) == (1, 1, 1) and channel_groups(8) == (2, 2, 4) and channel_groups(16) == (5, 5, 6)
    for t, c in ((4, 3), (5, 4), (4, 5), (6, 8), (3, 16)):
        checks.append(np.array_equal(temporal_shift(Tensor(_frame_indexed(t, c))).data[:, :, 0, 0],
                                     _expected_shift(t, c)))
    # TSM2: adaptive pool to 2x2 then the same shift
    out = TemporalShift(TsmConfig("TSM2"), 5, pool_out=(2, 2))(Tensor(_frame_indexed(4, 5, 4))).data
    checks.append(out.shape == (4, 5, 2, 2))
    checks.append(all(np.array_equal(out[:, :, i, j], _expected_shift(4, 5)) for i in range(2) for j in range(2)))
    # TSM3: identity deconvolution, batch norm over the clip, then the shift
    block = TemporalShift(TsmConfig("TSM3"), 4, rng=np.random.default_rng(0))
    w = np.zeros_like(block.deconv.weight.data)
    for ch in range(4):
        w[ch, ch, 1, 1, 1] = 1.0
    block.deconv.weight.data, block.deconv.bias.data = w, np.zeros(4)
    x = np.random.default_rng(1).integers(-3, 4, size=(5, 4, 3, 3)).astype(float)
    normed = norm_layer(Tensor(x.transpose(1, 0, 2, 3)[None]), "batch", eps=block.cfg.norm_eps).data[0]
    normed = normed.transpose(1, 0, 2, 3)
    pre = block.prepare(Tensor(x)).data
    checks.append(np.max(np.abs(pre - normed)) < 1e-12)
    got = block(Tensor(x)).data
    f1, f2, _ = channel_groups(4)
    exp = np.zeros_like(pre)
    exp[:-1, :f1] = pre[1:, :f1]
    exp[1:, f1 : f1 + f2] = pre[:-1, f1 : f1 + f2]
    exp[:, f1 + f2 :] = pre[:, f1 + f2 :]
    checks.append(np.array_equal(got, exp))
    checks.append(TemporalShift(TsmConfig("TSM1"), 4).num_parameters() == 0)
    return all(checks), f"{sum(checks)}/{len(checks)} exact shift checks (zero boundaries, tie-break 5/5/6 at C=16)"


def c5_spectral_hr():
    fs = 30.0
    t = np.arange(int(10 * fs)) / fs
    errs = []
    res = None
    for f in HR_TONES_HZ:
        hr = estimate_hr(PpgSignal(np.sin(2 * np.pi * f * t + 0.4), fs), 10)
        res = hr.resolution_bpm
        errs.append(abs(hr.values[0] - 60 * f))
    tones_ok = max(errs) <= res
    # DC and a strong 0.2 Hz tone sit on top of a weak 1.2 Hz pulse
    long_t = np.arange(int(30 * fs)) / fs
    dc = butterworth_bandpass(PpgSignal(np.full(long_t.size, 5.0), fs), 0.75, 3.0).samples
    dc_ok = np.max(np.abs(dc[300:-300])) < 1e-6
    mix = 5.0 + 3.0 * np.sin(2 * np.pi * 0.2 * long_t) + 0.3 * np.sin(2 * np.pi * 1.2 * long_t)
    hr_mix = heart_rate(PpgSignal(mix, fs), 10)
    low_ok = bool(np.all(np.abs(hr_mix.values - 72.0) <= hr_mix.resolution_bpm))
    ok = tones_ok and dc_ok and low_ok
    return ok, f"max tone error {max(errs):.3f} bpm (bin {res:.3f}), DC/0.2 Hz rejected: {dc_ok and low_ok}"


def c6_baseline():
    errs, shifts = [], []
    for i, f in enumerate((0.9, 1.3, 1.7, 2.2)):
        base = dict(hr_hz=f, pulse_amp=0.01, noise_sd=BASELINE_NOISE_SD, seed=10 + i)
        seq, ppg = synth_video(SynthConfig(**base), 900, fps=30.0)
        drift, _ = synth_video(SynthConfig(**base, illum_drift_hz=0.1, illum_drift_amp=0.02), 900, fps=30.0)
        est, gt = heart_rate(pos_baseline(seq)), heart_rate(ppg)
        errs.append(np.max(np.abs(est.values - gt.values)))
        shifts.append(np.max(np.abs(heart_rate(pos_baseline(drift)).values - est.values)))
    ok = max(errs) <= TOL_BASELINE_BPM and max(shifts) < TOL_DRIFT_BPM
    return ok, f"POS max error {max(errs):.3f} bpm, max drift shift {max(shifts):.3f} bpm"


def c7_kd_benefit():
    t0 = time.perf_counter()
    outcomes = kd_benchmark(KD_SEEDS, TrainConfig(epochs=KD_STUDENT_EPOCHS), BenchmarkSpec(),
                            teacher_epochs=KD_TEACHER_EPOCHS)
    kd, plain = median_mae(outcomes)
    elapsed = time.perf_counter() - t0
    per_seed = ", ".join(f"{o.kd.mae:.2f}/{o.no_kd.mae:.2f}" for o in outcomes)
    ok = kd <= plain and elapsed < KD_BUDGET_S
    return ok, f"median test MAE KD {kd:.3f} vs no-KD {plain:.3f} bpm (per seed KD/no-KD: {per_seed})"


def c8_ablation():
    spec = BenchmarkSpec(n_train=4, n_val=1, n_test=2)
    bench = synthetic_benchmark(spec, seed=0)
    cfg = TrainConfig(epochs=2)
    teacher = train_teacher(bench.train, cfg).model
    reports = ablation(bench, cfg, teacher)
    expected = {"alpha=0", "alpha=0.25", "alpha=0.5", "alpha=0.75", "alpha=1",
                "beta=1,eta=1", "beta=1,eta=10", "beta=10,eta=1", "beta=10,eta=10"}
    ok = set(reports) == expected and comparable(reports)
    return ok, f"{len(reports)} runs, {next(iter(reports.values())).n_windows} windows each, comparable={ok}"


def c9_param_count():
    deconv = StudentNet(16, head="deconv").num_parameters()
    dense = StudentNet(16, head="dense").num_parameters()
    return deconv < dense, f"deconvolution head {deconv} vs dense head {dense} parameters"


def c10_metrics():
    checks = [
        mae([70, 72, 74], [71, 70, 74]) == 1.0,
        rmse([70, 72, 74], [71, 70, 74]) == math.sqrt(5 / 3),
        pearson(2 * np.array([1.0, 4.0, 2.0, 8.0]) + 3, [1.0, 4.0, 2.0, 8.0]) == pytest.approx(1.0, abs=1e-15),
        psnr_from_mse(0.01, 1.0) == pytest.approx(20.0, abs=1e-12),
    ]
    same = np.array([62.0, 75.5, 90.25, 101.0])
    rep = metrics(same, same)
    ba = bland_altman(same, same)
    checks += [nmse(same, same) == 0.0, rep.nmse == 0.0, ba.mean_diff == 0.0, ba.sd == 0.0]
    rng = np.random.default_rng(11)
    violations = 0
    for _ in range(FUZZ_CASES):
        n = int(rng.integers(2, 30))
        scale = 10.0 ** rng.uniform(-3, 3)
        p, t = rng.normal(size=n) * scale, rng.normal(size=n) * scale
        if mae(p, t) > rmse(p, t) * (1 + 1e-12):
            violations += 1
    ok = all(checks) and violations == 0
    return ok, f"{sum(checks)}/{len(checks)} hand examples exact, {violations} MAE > RMSE in {FUZZ_CASES} fuzz cases"


def c11_determinism_io():
    checks = []
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        spec = BenchmarkSpec(n_train=2, n_val=1, n_test=2, seq_len=16)
        for tag in ("a", "b"):
            bench = synthetic_benchmark(spec, seed=3)
            cfg = TrainConfig(seq_len=16, epochs=2, seed=3)
            teacher = train_teacher(bench.train, cfg).model
            res = train_student_kd(bench.train, cfg, teacher, bench.val)
            save_model(d / f"{tag}.pdc", res.model, cfg.seed, res.best_epoch)
            write_report(evaluate(res.model, bench.test), d / f"{tag}.txt", d / f"{tag}.csv")
        for ext in ("pdc", "txt", "csv"):
            checks.append((d / f"a.{ext}").read_bytes() == (d / f"b.{ext}").read_bytes())

        rng = np.random.default_rng(0)
        arr = rng.normal(size=(3, 4, 5))
        write_tensor(d / "t.pdt", arr)
        checks.append(read_tensor(d / "t.pdt").tobytes() == arr.tobytes())
        sig = PpgSignal(rng.normal(size=40), 30.0)
        write_ppg(d / "p.csv", sig)
        checks.append(read_ppg(d / "p.csv").samples.tobytes() == sig.samples.tobytes())
        hr = estimate_hr(PpgSignal(np.sin(np.arange(600) / 30 * 2 * np.pi * 1.1), 30.0), 10)
        write_hr(d / "h.csv", hr)
        checks.append(read_hr(d / "h.csv")[0].values.tobytes() == hr.values.tobytes())
        seq, _ = synth_video(SynthConfig(noise_sd=0.01, seed=2), 4, 4, 4)
        write_frames(d / "f.pdt", seq)
        checks.append(read_frames(d / "f.pdt").frames.tobytes() == seq.frames.tobytes())
        state = OrderedDict(w=arr, b=np.arange(3.0))
        write_checkpoint(d / "c.pdc", state, {"kind": "x"}, 1, 2)
        back, _ = read_checkpoint(d / "c.pdc")
        checks.append(all(back[k].tobytes() == state[k].tobytes() for k in state))

        blob = (d / "t.pdt").read_bytes()
        flipped = bytearray(blob)
        flipped[60] ^= 0x10
        for name, data, err in (
            ("magic", b"XXXXXXXX" + blob[8:], BadMagicError),
            ("truncated", blob[:-30], TruncatedPayloadError),
            ("flipped", bytes(flipped), ChecksumError),
            ("trailing", blob + b"\0", ValidationError),
        ):
            (d / f"{name}.pdt").write_bytes(data)
            try:
                read_tensor(d / f"{name}.pdt")
                checks.append(False)
            except err:
                checks.append(True)
        (d / "bad.csv").write_text("time_s,value\n0.0,1.0\n0.0,2.0\n")
        try:
            read_ppg(d / "bad.csv")
            checks.append(False)
        except ValidationError:
            checks.append(True)
    return all(checks), f"{sum(checks)}/{len(checks)} determinism, round-trip and corruption checks"


CRITERIA = [
    (1, "loss-oracle equivalence", c1_oracle),
    (2, "hard-DTW limit", c2_hard_limit),
    (3, "gradient suite", c3_gradients),
    (4, "TSM semantics", c4_tsm),
    (5, "spectral HR", c5_spectral_hr),
    (6, "baseline end-to-end", c6_baseline),
    (7, "KD benefit at desk scale", c7_kd_benefit),
    (8, "ablation machinery", c8_ablation),
    (9, "parameter-count analogue", c9_param_count),
    (10, "metric unit suite", c10_metrics),
    (11, "determinism and I/O", c11_determinism_io),
]


def run_criterion(number, title, fn):
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failure with its reason on the line
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail} ({time.perf_counter() - t0:.1f}s)"
    return ok, line


@pytest.mark.parametrize("number,title,fn", CRITERIA, ids=[f"c{n}" for n, _, _ in CRITERIA])
def test_criterion(number, title, fn, capsys):
    ok, line = run_criterion(number, title, fn)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [run_criterion(*c) for c in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
