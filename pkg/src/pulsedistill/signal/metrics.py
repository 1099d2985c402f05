"""Heart-rate error metrics, signal PSNR and Bland-Altman agreement."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import DegenerateSignalError, ParameterError, UndefinedCorrelationError
from ..types import PpgSignal
from .hr import HrSeries


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred.values if isinstance(pred, HrSeries) else pred, dtype=np.float64).reshape(-1)
    t = np.asarray(truth.values if isinstance(truth, HrSeries) else truth, dtype=np.float64).reshape(-1)
    if p.size != t.size:
        raise ParameterError(f"length mismatch: {p.size} predictions vs {t.size} references")
    if p.size < 2:
        raise ParameterError("metrics need at least 2 paired values")
    return p, t


def mae(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def rmse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def pearson(pred, truth) -> float:
    p, t = _pair(pred, truth)
    dp, dt = p - p.mean(), t - t.mean()
    denom = np.sqrt(np.sum(dp * dp)) * np.sqrt(np.sum(dt * dt))
    if denom == 0:
        raise UndefinedCorrelationError("Pearson correlation is undefined for a constant series")
    return float(np.clip(np.sum(dp * dt) / denom, -1.0, 1.0))


def nmse(pred, truth) -> float:
    """Squared error over the spread of the predictions around the reference mean."""
    p, t = _pair(pred, truth)
    num = np.sum((p - t) ** 2)
    if num == 0:
        return 0.0
    denom = np.sum((p - t.mean()) ** 2)
    if denom == 0:
        raise UndefinedCorrelationError("NMSE denominator is zero")
    return float(num / denom)


def psnr_from_mse(mse: float, peak: float) -> float:
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(peak**2 / mse))


def _znorm(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd == 0:
        raise DegenerateSignalError("cannot normalize a constant signal")
    return (x - x.mean()) / sd


def psnr(pred_sig: PpgSignal, truth_sig: PpgSignal, normalize: bool = True) -> float:
    """PSNR in dB; the peak is the largest absolute (normalized) reference value."""
    p = np.asarray(getattr(pred_sig, "samples", pred_sig), dtype=np.float64)
    t = np.asarray(getattr(truth_sig, "samples", truth_sig), dtype=np.float64)
    if p.size != t.size:
        raise ParameterError("PSNR needs equal-length signals")
    if normalize:
        p, t = _znorm(p), _znorm(t)
    return psnr_from_mse(float(np.mean((p - t) ** 2)), float(np.max(np.abs(t))))


@dataclass(frozen=True)
class BlandAltman:
    mean_diff: float
    sd: float
    means: np.ndarray
    diffs: np.ndarray

    @property
    def limits_of_agreement(self) -> tuple[float, float]:
        return self.mean_diff - 1.96 * self.sd, self.mean_diff + 1.96 * self.sd


def bland_altman(pred, truth) -> BlandAltman:
    p, t = _pair(pred, truth)
    d = p - t
    return BlandAltman(float(d.mean()), float(d.std(ddof=1)), (p + t) / 2.0, d)


@dataclass(frozen=True)
class MetricReport:
    mae: float
    rmse: float
    pearson: float
    nmse: float
    psnr_db: float
    ba_mean_diff: float
    ba_sd: float
    n_windows: int

    def to_text(self) -> str:
        return "".join(f"{k}: {_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "MetricReport":
        values = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, raw = line.partition(":")
            values[key.strip()] = raw.strip()
        return cls._coerce(values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        row = asdict(self)
        writer.writerow(row.keys())
        writer.writerow(_fmt(v) for v in row.values())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        if len(rows) != 1:
            raise ParameterError("metric CSV must hold exactly one data row")
        return cls._coerce(rows[0])

    @classmethod
    def _coerce(cls, values: dict) -> "MetricReport":
        kwargs = {}
        for f in fields(cls):
            raw = values[f.name]
            kwargs[f.name] = int(raw) if f.name == "n_windows" else float(raw)
        return cls(**kwargs)


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else repr(float(v))


def metrics(
    pred,
    truth,
    pred_sig: PpgSignal | None = None,
    truth_sig: PpgSignal | None = None,
    strict: bool = True,
) -> MetricReport:
    """Build a :class:`MetricReport` for paired HR series.

    With ``strict=False`` undefined Pearson/NMSE values become NaN instead
    of raising. PSNR is NaN unless both waveforms are supplied.
    """
    p, t = _pair(pred, truth)

    def guarded(fn):
        try:
            return fn(p, t)
        except UndefinedCorrelationError:
            if strict:
                raise
            return math.nan

    ba = bland_altman(p, t)
    peak_snr = math.nan
    if pred_sig is not None and truth_sig is not None:
        peak_snr = psnr(pred_sig, truth_sig)
    return MetricReport(
        mae=mae(p, t),
        rmse=rmse(p, t),
        pearson=guarded(pearson),
        nmse=guarded(nmse),
        psnr_db=peak_snr,
        ba_mean_diff=ba.mean_diff,
        ba_sd=ba.sd,
        n_windows=int(p.size),
    )


def grouped_metrics(pred, truth, groups, strict: bool = False) -> dict[str, MetricReport]:
    """One report per distinct group label (e.g. activity or lighting tag)."""
    p, t = _pair(pred, truth)
    labels = np.asarray(groups).reshape(-1)
    if labels.size != p.size:
        raise ParameterError("one group label per window is required")
    out = {}
    for g in sorted(set(labels.tolist())):
        sel = labels == g
        if sel.sum() >= 2:
            out[str(g)] = metrics(p[sel], t[sel], strict=strict)
    return out


def write_report(report: MetricReport, text_path, csv_path) -> None:
    Path(text_path).write_text(report.to_text())
    Path(csv_path).write_text(report.to_csv())


def write_plot_tables(pred, truth, ba_path, corr_path) -> None:
    """Bland-Altman (mean, difference) and correlation (truth, pred) tables."""
    p, t = _pair(pred, truth)
    ba = bland_altman(p, t)
    lo, hi = ba.limits_of_agreement
    with open(ba_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mean_bpm", "diff_bpm", "mean_diff", "loa_low", "loa_high"])
        for m, d in zip(ba.means, ba.diffs):
            w.writerow([repr(float(m)), repr(float(d)), repr(ba.mean_diff), repr(lo), repr(hi)])
    with open(corr_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["truth_bpm", "pred_bpm"])
        for a, b in zip(t, p):
            w.writerow([repr(float(a)), repr(float(b))])
