"""Command-line entry point; stages exchange data only through files.

Every successful run writes one JSON manifest (command line, configuration,
input hashes, outputs, seed, timing, versions). ``replay`` re-executes a
manifest's command. On failure all outputs created by the run are removed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PulseDistillError
from .types import PpgSignal

OUT_DIR_ENV = "PULSEDISTILL_OUT_DIR"


def _under_out_dir(path) -> Path:
    """Relative output paths are placed under ``$PULSEDISTILL_OUT_DIR`` when it is set."""
    p = Path(path)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base).resolve() / p
    return p


class _Run:
    """Tracks outputs so they can be reported or rolled back."""

    def __init__(self, args, argv):
        self.args, self.argv = args, list(argv)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.created_dirs: list[Path] = []
        self.t0 = time.perf_counter()

    def out(self, path) -> Path:
        p = _under_out_dir(path)
        self._ensure_dir(p.parent)
        self.outputs.append(p)
        return p

    def out_dir(self, path) -> Path:
        p = _under_out_dir(path)
        self._ensure_dir(p)
        return p

    def _ensure_dir(self, d: Path) -> None:
        missing = []
        for parent in [d, *d.parents]:
            if parent.exists():
                break
            missing.append(parent)
        for m in reversed(missing):
            m.mkdir()
            self.created_dirs.append(m)

    def inp(self, path) -> Path:
        p = Path(path)
        self.inputs.append(p)
        return p

    def rollback(self) -> None:
        for p in self.outputs:
            p.unlink(missing_ok=True)
        for d in reversed(self.created_dirs):
            try:
                d.rmdir()
            except OSError:
                pass

    def manifest(self, path: Path, seed) -> None:
        import scipy

        config = {k: v for k, v in vars(self.args).items() if k != "func"}
        data = {
            "command": self.args.command,
            "argv": self.argv,
            "config": config,
            "inputs": {str(p): _file_hash(p) for p in self.inputs if p.is_file()},
            "outputs": [str(p) for p in self.outputs],
            "seed": seed,
            "wall_clock_s": time.perf_counter() - self.t0,
            "versions": {
                "pulsedistill": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
        }
        self.outputs.append(path)
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")


def _file_hash(p: Path) -> str:
    return hashlib.blake2b(p.read_bytes(), digest_size=16).hexdigest()


def _band(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"band must look like lo:hi, got {text!r}") from None
    return lo, hi


# -- sample directories ----------------------------------------------------------
def _write_sample_dir(run: _Run, out: Path, x: np.ndarray, label: PpgSignal, fps: float, meta: dict) -> None:
    from .dataio.formats import write_ppg, write_tensor

    write_tensor(run.out(out / "diffs.pdt"), x)
    write_ppg(run.out(out / "label.csv"), label)
    run.out(out / "sample.json").write_text(json.dumps({"fps": fps, **meta}, sort_keys=True) + "\n")


def _read_sample_dir(run: _Run, d):
    from .dataio.formats import read_ppg, read_tensor
    from .models.train import Sample

    d = Path(d)
    x = read_tensor(run.inp(d / "diffs.pdt"))
    meta = json.loads(run.inp(d / "sample.json").read_text())
    y = read_ppg(run.inp(d / "label.csv")) if (d / "label.csv").exists() else None
    labels = y.samples if y is not None else np.zeros(x.shape[0])
    return Sample(x, labels, meta["fps"], d.name)


def _train_config(args):
    from .models.train import TrainConfig

    fields = ("alpha", "beta", "eta", "gamma", "lambda_afd", "lr", "batch", "epochs", "seed", "tsm", "patience")
    kw = {f: getattr(args, f) for f in fields if getattr(args, f, None) is not None}
    if "tsm" in kw:
        kw["tsm"] = f"TSM{kw['tsm']}"
    return TrainConfig(**kw)


def _fit_config(cfg, samples):
    x = samples[0].x
    return replace(cfg, seq_len=x.shape[0], input_hw=x.shape[-1])


# -- subcommands -----------------------------------------------------------------
def cmd_synth(run: _Run, args) -> Path:
    from .dataio.formats import write_frames, write_ppg
    from .dataio.synth import SynthConfig, synth_video

    cfg = SynthConfig(
        hr_hz=args.hr, pulse_amp=args.pulse_amp, harmonic_amp=args.harmonic_amp, noise_sd=args.noise_sd,
        illum_drift_hz=args.drift_hz, illum_drift_amp=args.drift_amp, motion_px=args.motion_px, seed=args.seed,
    )
    n = int(round(args.seconds * args.fps))
    seq, ppg = synth_video(cfg, n, args.size, args.size, args.fps, subject=args.subject, condition=args.condition)
    out = run.out_dir(args.out)
    frames_path = run.out(out / "frames.pdt")
    run.out(out / "frames.pdt.json")
    write_frames(frames_path, seq)
    write_ppg(run.out(out / "ppg.csv"), ppg)
    return out / "manifest.json"


def cmd_preprocess(run: _Run, args) -> Path:
    from .dataio.formats import read_frames, read_ppg
    from .dataio.preprocess import frame_diff, prepare_label

    seq = read_frames(run.inp(args.frames))
    run.inp(str(args.frames) + ".json")
    x = frame_diff(seq)
    if args.ppg:
        label = prepare_label(read_ppg(run.inp(args.ppg)), length=x.shape[0], band=args.band)
    else:
        label = None
    out = run.out_dir(args.out)
    meta = {"subject": seq.subject, "condition": seq.condition}
    if label is None:
        from .dataio.formats import write_tensor

        write_tensor(run.out(out / "diffs.pdt"), x)
        run.out(out / "sample.json").write_text(json.dumps({"fps": seq.fps, **meta}, sort_keys=True) + "\n")
    else:
        _write_sample_dir(run, out, x, label, seq.fps, meta)
    return out / "manifest.json"


def cmd_train_teacher(run: _Run, args) -> Path:
    from .models.train import save_model, train_teacher

    train = [_read_sample_dir(run, d) for d in args.data]
    val = [_read_sample_dir(run, d) for d in args.val] if args.val else None
    cfg = _fit_config(_train_config(args), train)
    res = train_teacher(train, cfg, val)
    out = run.out(args.out)
    save_model(out, res.model, cfg.seed, res.best_epoch, {"train_config": cfg.to_dict()})
    run.out(str(out) + ".curves.csv").write_text(res.curves_csv())
    return Path(str(out) + ".manifest.json")


def cmd_distill(run: _Run, args) -> Path:
    from .models.train import load_model, save_model, train_student_kd

    train = [_read_sample_dir(run, d) for d in args.data]
    val = [_read_sample_dir(run, d) for d in args.val] if args.val else None
    cfg = _fit_config(_train_config(args), train)
    teacher = None
    if args.teacher:
        teacher, _ = load_model(run.inp(args.teacher))
    res = train_student_kd(train, cfg, teacher, val)
    out = run.out(args.out)
    save_model(out, res.model, cfg.seed, res.best_epoch, {"train_config": cfg.to_dict()})
    run.out(str(out) + ".curves.csv").write_text(res.curves_csv())
    return Path(str(out) + ".manifest.json")


def cmd_infer(run: _Run, args) -> Path:
    from .dataio.formats import read_frames, write_ppg
    from .models.train import load_model, predict
    from .signal.baselines import chrom_baseline, pos_baseline

    if args.baseline in ("pos", "chrom"):
        if not args.frames:
            raise PulseDistillError("--frames is required with a colour baseline")
        seq = read_frames(run.inp(args.frames))
        sig = pos_baseline(seq) if args.baseline == "pos" else chrom_baseline(seq, band=args.band)
    else:
        if not (args.model and args.data):
            raise PulseDistillError("--model and --data are required without a baseline")
        model, _ = load_model(run.inp(args.model))
        sample = _read_sample_dir(run, args.data)
        sig = PpgSignal(predict(model, sample.x), sample.fs)
    out = run.out(args.out)
    write_ppg(out, sig)
    return Path(str(out) + ".manifest.json")


def cmd_estimate_hr(run: _Run, args) -> Path:
    from .dataio.formats import read_ppg, write_hr
    from .signal.hr import estimate_hr, heart_rate

    sig = read_ppg(run.inp(args.signal))
    if args.no_filter:
        hr = estimate_hr(sig, args.window_seconds, args.band, args.stride_seconds)
    else:
        hr = heart_rate(sig, args.window_seconds, args.band, stride_seconds=args.stride_seconds)
    groups = [args.group] * len(hr) if args.group else None
    out = run.out(args.out)
    write_hr(out, hr, groups)
    return Path(str(out) + ".manifest.json")


def cmd_evaluate(run: _Run, args) -> Path:
    from .dataio.formats import read_hr, read_ppg
    from .signal.metrics import grouped_metrics, metrics, write_plot_tables

    pred, groups = read_hr(run.inp(args.pred))
    truth, _ = read_hr(run.inp(args.truth))
    pred_sig = truth_sig = None
    if args.pred_signal and args.truth_signal:
        pred_sig = read_ppg(run.inp(args.pred_signal))
        truth_sig = read_ppg(run.inp(args.truth_signal))
        n = min(len(pred_sig), len(truth_sig))
        pred_sig = pred_sig.with_samples(pred_sig.samples[:n])
        truth_sig = truth_sig.with_samples(truth_sig.samples[:n])
    report = metrics(pred, truth, pred_sig, truth_sig, strict=False)
    out = run.out_dir(args.out)
    run.out(out / "report.txt").write_text(report.to_text())
    run.out(out / "report.csv").write_text(report.to_csv())
    write_plot_tables(pred, truth, run.out(out / "bland_altman.csv"), run.out(out / "correlation.csv"))
    if groups is not None:
        lines = []
        for name, rep in grouped_metrics(pred, truth, groups).items():
            body = rep.to_csv().splitlines()
            if not lines:
                lines.append("group," + body[0])
            lines.append(f"{name}," + body[1])
        run.out(out / "grouped.csv").write_text("\n".join(lines) + "\n")
    print(report.to_text(), end="")
    return out / "manifest.json"


def cmd_oracle_check(run: _Run, args) -> Path | None:
    from .losses import (
        brute_force_soft_dtw,
        brute_force_temporal,
        cost_matrix,
        enumerate_paths,
        soft_dtw,
        temporal_term,
    )

    rng = np.random.default_rng(args.seed)
    paths = {k: enumerate_paths(k) for k in range(2, args.k + 1)}
    worst_v = worst_t = 0.0
    for _ in range(args.trials):
        k = int(rng.integers(2, args.k + 1))
        gamma = float(rng.choice(args.gammas))
        a, b = rng.normal(size=k), rng.normal(size=k)
        cost = cost_matrix(a, b, gamma)
        v = soft_dtw(cost).item()
        t = temporal_term(cost).item()
        bv = brute_force_soft_dtw(cost.delta.data, gamma, paths[k])
        bt = brute_force_temporal(cost.delta.data, cost.omega, gamma, paths[k])
        worst_v = max(worst_v, abs(v - bv) / max(abs(bv), 1e-12))
        worst_t = max(worst_t, abs(t - bt) / max(abs(bt), 1e-12))
    ok = worst_v <= args.tol_value and worst_t <= args.tol_temporal
    print(f"soft_dtw max rel err {worst_v:.3e} (tol {args.tol_value:g})")
    print(f"temporal max rel err {worst_t:.3e} (tol {args.tol_temporal:g})")
    print("PASS" if ok else "FAIL")
    if not ok:
        raise SystemExit(1)
    if args.out:
        out = run.out(args.out)
        out.write_text(json.dumps({"soft_dtw_rel_err": worst_v, "temporal_rel_err": worst_t}) + "\n")
        return Path(str(out) + ".manifest.json")
    return None


def cmd_replay(run: _Run, args) -> Path | None:
    manifest = json.loads(Path(args.manifest).read_text())
    code = main(manifest["argv"])
    if code:
        raise SystemExit(code)
    return None


# -- parser ------------------------------------------------------------------------
def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", nargs="+", required=True, help="sample directories from `preprocess`")
    p.add_argument("--val", nargs="*", help="validation sample directories")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lambda-afd", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--tsm", type=int, choices=(1, 2, 3))
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulsedistill", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic pulsatile video and its ground-truth PPG")
    p.add_argument("--hr", type=float, default=1.5, help="pulse frequency in Hz")
    p.add_argument("--seconds", type=float, default=30.0)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--pulse-amp", type=float, default=0.01)
    p.add_argument("--harmonic-amp", type=float, default=0.0)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--drift-hz", type=float, default=0.0)
    p.add_argument("--drift-amp", type=float, default=0.0)
    p.add_argument("--motion-px", type=float, default=0.0)
    p.add_argument("--subject", default="synthetic")
    p.add_argument("--condition", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="frame differences and the prepared label")
    p.add_argument("--frames", required=True)
    p.add_argument("--ppg")
    p.add_argument("--band", type=_band, default=(0.5, 3.0))
    p.add_argument("--out", required=True, help="output sample directory")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train-teacher", help="step 1: fit the 3D teacher by MSE")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="step 2: fit the TSM student by AFD + DILATE")
    _add_train_flags(p)
    p.add_argument("--teacher", help="teacher checkpoint; omit for a no-distillation student")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("infer", help="predict a pulse waveform")
    p.add_argument("--baseline", choices=("pos", "chrom", "none"), default="none")
    p.add_argument("--frames", help="frame tensor (baselines)")
    p.add_argument("--model", help="checkpoint (when --baseline none)")
    p.add_argument("--data", help="sample directory (when --baseline none)")
    p.add_argument("--band", type=_band, default=(0.75, 3.0))
    p.add_argument("--out", required=True, help="output PPG csv")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("estimate-hr", help="windowed spectral heart rate")
    p.add_argument("--signal", required=True)
    p.add_argument("--window-seconds", type=float, default=10.0)
    p.add_argument("--stride-seconds", type=float)
    p.add_argument("--band", type=_band, default=(0.75, 3.0))
    p.add_argument("--no-filter", action="store_true", help="skip the band-pass before the FFT")
    p.add_argument("--group", help="group label written to every window")
    p.add_argument("--out", required=True, help="output HR csv")
    p.set_defaults(func=cmd_estimate_hr)

    p = sub.add_parser("evaluate", help="metric report and plot tables")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--pred-signal")
    p.add_argument("--truth-signal")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("oracle-check", help="soft-DTW DP vs path enumeration")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--gammas", type=float, nargs="+", default=[1.0, 0.1, 0.01])
    p.add_argument("--tol-value", type=float, default=1e-9)
    p.add_argument("--tol-temporal", type=float, default=1e-7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def _origin(exc: BaseException) -> str:
    """Dotted module of the innermost package frame that raised ``exc``."""
    name = "pulsedistill"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        mod = frame.f_globals.get("__name__", "")
        if mod.startswith("pulsedistill") and mod != __name__:
            name = mod
    return name


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    run = _Run(args, argv)
    try:
        manifest_path = args.func(run, args)
        if manifest_path is not None:
            run.manifest(manifest_path, getattr(args, "seed", None))
    except SystemExit as exc:
        run.rollback()
        return int(exc.code or 0)
    except (PulseDistillError, ValueError, OSError, KeyError) as exc:
        run.rollback()
        print(f"error [{_origin(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        run.rollback()
        raise
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
