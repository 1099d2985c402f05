"""Seeded synthetic benchmark, the KD-vs-no-KD comparison and ablation grids."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataio.preprocess import frame_diff, prepare_label
from .dataio.synth import SynthConfig, synth_video
from .models.train import (
    Sample,
    TrainConfig,
    evaluate,
    train_student_kd,
    train_teacher,
)
from .signal.metrics import MetricReport
from .types import FrameSequence, PpgSignal

# 81 frames at 8 fps: 80 differences spanning one 10 s heart-rate window
BENCH_FPS = 8.0
# training budget of the KD comparison, sized for the desk-scale runtime limit
KD_STUDENT_EPOCHS = 20
KD_TEACHER_EPOCHS = 40


def make_sample(seq: FrameSequence, ppg: PpgSignal, name: str = "") -> Sample:
    x = frame_diff(seq)
    y = prepare_label(ppg, length=x.shape[0])
    return Sample(x, y.samples, seq.fps, name)


@dataclass(frozen=True)
class BenchmarkSpec:
    n_train: int = 8
    n_val: int = 2
    n_test: int = 4
    seq_len: int = 80
    input_hw: int = 16
    fps: float = BENCH_FPS
    hr_range: tuple[float, float] = (0.9, 2.4)
    noise_sd: float = 0.003
    drift_amp: float = 0.01
    motion_px: float = 0.25


@dataclass
class Benchmark:
    train: list[Sample]
    val: list[Sample]
    test: list[Sample]


def synthetic_benchmark(spec: BenchmarkSpec = BenchmarkSpec(), seed: int = 0) -> Benchmark:
    """Independent seeded clips with heart rates spread over ``hr_range``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    sets = []
    for split, n in (("train", spec.n_train), ("val", spec.n_val), ("test", spec.n_test)):
        out = []
        # stratify heart rates so each split covers the range
        edges = np.linspace(*spec.hr_range, n + 1)
        for i in range(n):
            cfg = SynthConfig(
                hr_hz=float(rng.uniform(edges[i], edges[i + 1])),
                pulse_amp=0.01,
                harmonic_amp=float(rng.uniform(0.0, 0.3)),
                noise_sd=spec.noise_sd,
                illum_drift_hz=float(rng.uniform(0.05, 0.3)),
                illum_drift_amp=spec.drift_amp,
                motion_px=spec.motion_px,
                phase=float(rng.uniform(0, 2 * np.pi)),
                seed=int(rng.integers(2**31)),
            )
            seq, ppg = synth_video(cfg, spec.seq_len + 1, spec.input_hw, spec.input_hw, spec.fps,
                                   subject=f"{split}{i}")
            out.append(make_sample(seq, ppg, f"{split}{i}"))
        sets.append(out)
    return Benchmark(*sets)


@dataclass
class KdOutcome:
    seed: int
    kd: MetricReport
    no_kd: MetricReport
    teacher: MetricReport
    kd_history: list = field(default_factory=list)
    no_kd_history: list = field(default_factory=list)


def kd_comparison(bench: Benchmark, cfg: TrainConfig, teacher_cfg: TrainConfig | None = None) -> KdOutcome:
    """Train one teacher, then the same student with and without distillation."""
    teacher_cfg = teacher_cfg or cfg
    teacher = train_teacher(bench.train, teacher_cfg, bench.val).model
    kd = train_student_kd(bench.train, cfg, teacher, bench.val)
    plain = train_student_kd(bench.train, replace(cfg, beta=0.0), teacher, bench.val)
    return KdOutcome(
        cfg.seed,
        evaluate(kd.model, bench.test),
        evaluate(plain.model, bench.test),
        evaluate(teacher, bench.test),
        kd.history,
        plain.history,
    )


def kd_benchmark(seeds: Sequence[int], cfg: TrainConfig, spec: BenchmarkSpec = BenchmarkSpec(),
                 teacher_epochs: int | None = None, log=None) -> list[KdOutcome]:
    out = []
    for seed in seeds:
        t0 = time.perf_counter()
        run_cfg = replace(cfg, seed=seed, seq_len=spec.seq_len, input_hw=spec.input_hw)
        teacher_cfg = replace(run_cfg, epochs=teacher_epochs) if teacher_epochs else run_cfg
        res = kd_comparison(synthetic_benchmark(spec, seed), run_cfg, teacher_cfg)
        out.append(res)
        if log:
            log(f"seed {seed}: KD MAE {res.kd.mae:.3f}, no-KD MAE {res.no_kd.mae:.3f}, "
                f"teacher MAE {res.teacher.mae:.3f} ({time.perf_counter() - t0:.1f}s)")
    return out


def median_mae(outcomes: Sequence[KdOutcome]) -> tuple[float, float]:
    return (float(np.median([o.kd.mae for o in outcomes])),
            float(np.median([o.no_kd.mae for o in outcomes])))


# -- ablation grids ------------------------------------------------------------
ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
BETA_ETA_GRID = ((1.0, 1.0), (1.0, 10.0), (10.0, 1.0), (10.0, 10.0))


def ablation(bench: Benchmark, cfg: TrainConfig, teacher=None, alphas=ALPHA_GRID,
             beta_eta=BETA_ETA_GRID) -> dict[str, MetricReport]:
    """Student runs over the alpha grid (at the configured beta, eta) and the (beta, eta) grid.

    Keys look like ``alpha=0.5`` and ``beta=10,eta=10``. A teacher is
    trained once if none is supplied.
    """
    if teacher is None:
        teacher = train_teacher(bench.train, cfg, bench.val).model
    reports = {}
    for a in alphas:
        res = train_student_kd(bench.train, replace(cfg, alpha=a), teacher, bench.val)
        reports[f"alpha={_g(a)}"] = evaluate(res.model, bench.test)
    for b, e in beta_eta:
        res = train_student_kd(bench.train, replace(cfg, beta=b, eta=e), teacher, bench.val)
        reports[f"beta={_g(b)},eta={_g(e)}"] = evaluate(res.model, bench.test)
    return reports


def ablation_table(reports: dict[str, MetricReport]) -> str:
    cols = ["mae", "rmse", "pearson", "nmse", "psnr_db", "ba_mean_diff", "ba_sd", "n_windows"]
    lines = ["setting," + ",".join(cols)]
    for key, rep in reports.items():
        vals = [getattr(rep, c) for c in cols]
        lines.append(f'"{key}",' + ",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def _g(x: float) -> str:
    return f"{x:g}"


def comparable(reports: dict[str, MetricReport]) -> bool:
    """Every report has the same window count and finite MAE/RMSE."""
    counts = {r.n_windows for r in reports.values()}
    return len(counts) == 1 and all(math.isfinite(r.mae) and math.isfinite(r.rmse) for r in reports.values())
