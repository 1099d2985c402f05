"""Two-step training: teacher on MSE, then student on AFD + DILATE.

Every stochastic choice is drawn from child streams of one ``SeedSequence``
(model init, SE init, batch order), so changing ``beta`` never perturbs the
student's initial weights or the order in which it sees the data.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..dataio.formats import read_checkpoint, write_checkpoint
from ..diffcore import Adam, Tensor, backward, no_grad
from ..distill import SEWeights, FeaturePair, afd_loss, total_loss
from ..errors import ArchitectureError, NonFiniteError, ParameterError
from ..losses import dilate, mse
from ..signal.hr import estimate_hr
from ..signal.metrics import MetricReport, metrics
from ..types import PpgSignal
from .nets import STAGE_CHANNELS, StudentNet, TeacherNet
from .tsm import TsmConfig

# child-stream indices under the run seed
_STREAM_MODEL, _STREAM_SE, _STREAM_SHUFFLE = 0, 1, 2


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    beta: float = 10.0
    eta: float = 10.0
    gamma: float = 0.01
    lambda_afd: float = 1.0
    lr: float = 1e-3
    batch: int = 4
    seq_len: int = 80
    epochs: int = 80
    seed: int = 0
    input_hw: int = 16
    tsm: str = "TSM1"
    patience: int = 10
    se_reduction: int = 2
    normalize_dilate: bool = True
    attention: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("beta", "eta", "lambda_afd", "lr"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if not self.gamma > 0:
            raise ParameterError("gamma must be positive")
        if self.batch < 1 or self.epochs < 0 or self.seq_len < 2:
            raise ParameterError("batch >= 1, epochs >= 0 and seq_len >= 2 are required")
        object.__setattr__(self, "tsm", TsmConfig(self.tsm).variant)

    def streams(self) -> list[np.random.Generator]:
        children = np.random.SeedSequence(self.seed).spawn(3)
        return [np.random.default_rng(c) for c in children]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Sample:
    """One training pair: frame differences ``(T, 3, H, W)`` and the label ``(T,)``."""

    x: np.ndarray
    y: np.ndarray
    fs: float
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if x.ndim != 4 or x.shape[0] != y.size:
            raise ParameterError(f"sample frames {x.shape} do not match label length {y.size}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    afd: float = math.nan
    dilate: float = math.nan


@dataclass
class TrainResult:
    model: object
    history: list[EpochLog]
    best_epoch: int
    se: list[SEWeights] = field(default_factory=list)

    def curves_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,afd,dilate"]
        for h in self.history:
            lines.append(",".join([str(h.epoch)] + [repr(float(v)) for v in (h.train_loss, h.val_loss, h.afd, h.dilate)]))
        return "\n".join(lines) + "\n"


def build_teacher(cfg: TrainConfig, rng=None) -> TeacherNet:
    rng = rng if rng is not None else cfg.streams()[_STREAM_MODEL]
    return TeacherNet(cfg.input_hw, STAGE_CHANNELS, cfg.seq_len, cfg.attention, seed=rng)


def build_student(cfg: TrainConfig, rng=None) -> StudentNet:
    rng = rng if rng is not None else cfg.streams()[_STREAM_MODEL]
    return StudentNet(cfg.input_hw, STAGE_CHANNELS, cfg.tsm, cfg.seq_len, cfg.attention, seed=rng)


def _check_loss(loss: Tensor, where: str) -> float:
    value = loss.item()
    if not math.isfinite(value):
        raise NonFiniteError(f"non-finite loss {value} at {where}")
    return value


def _batches(n: int, batch: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start : start + batch]


def _check_samples(samples: Sequence[Sample], cfg: TrainConfig, what: str) -> None:
    if not samples:
        raise ParameterError(f"{what} set is empty")
    for s in samples:
        if s.x.shape[0] != cfg.seq_len:
            raise ParameterError(f"{what} sample {s.name!r} has {s.x.shape[0]} frames, expected {cfg.seq_len}")


class _EarlyStop:
    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.best_state = None
        self.waited = 0

    def update(self, epoch: int, value: float, state_fn) -> bool:
        """Record ``value``; return True when training should stop."""
        if value < self.best:
            self.best, self.best_epoch, self.best_state, self.waited = value, epoch, state_fn(), 0
            return False
        self.waited += 1
        return self.patience > 0 and self.waited >= self.patience


def teacher_loss(model: TeacherNet, s: Sample) -> Tensor:
    out, _ = model(s.x)
    return mse(out, s.y)


def train_teacher(train: Sequence[Sample], cfg: TrainConfig, val: Sequence[Sample] | None = None,
                  model: TeacherNet | None = None) -> TrainResult:
    """Fit the teacher by mean squared error with early stopping on validation loss.

    Without a validation set the training loss drives early stopping. The
    returned model holds the best-epoch weights.
    """
    _check_samples(train, cfg, "training")
    model_rng, _, shuffle_rng = cfg.streams()
    model = model if model is not None else build_teacher(cfg, model_rng)
    opt = Adam(model.parameters(), lr=cfg.lr)
    history = []
    stopper = _EarlyStop(cfg.patience)
    stopper.best_state = model.state_dict()
    for epoch in range(1, cfg.epochs + 1):
        seen = []
        for idx in _batches(len(train), cfg.batch, shuffle_rng):
            opt.zero_grad()
            for i in idx:
                loss = teacher_loss(model, train[i]) * (1.0 / len(idx))
                seen.append(_check_loss(loss, f"teacher epoch {epoch}, sample {train[i].name or i}") * len(idx))
                backward(loss)
            opt.step()
        train_loss = float(np.mean(seen))
        with no_grad():
            val_loss = float(np.mean([teacher_loss(model, s).item() for s in val])) if val else train_loss
        history.append(EpochLog(epoch, train_loss, val_loss))
        if stopper.update(epoch, val_loss, model.state_dict):
            break
    model.load_state_dict(stopper.best_state)
    return TrainResult(model, history, stopper.best_epoch)


def teacher_features(teacher: TeacherNet, samples: Sequence[Sample]) -> list[list[Tensor]]:
    """Frozen hint features for every sample, computed once without a graph."""
    with no_grad():
        return [[Tensor(f.data.copy()) for f in teacher(s.x)[1]] for s in samples]


def _student_losses(student, se, s: Sample, hints, cfg: TrainConfig, use_afd: bool):
    out, feats = student(s.x)
    task = dilate(out, s.y, cfg.alpha, cfg.gamma, cfg.normalize_dilate)
    if hints is None:
        return task, None, task * cfg.eta
    pairs = [FeaturePair(h, g, i + 1) for i, (h, g) in enumerate(zip(hints, feats))]
    afd = afd_loss(pairs, se, cfg.lambda_afd)
    if not use_afd:
        # beta = 0: the AFD value is still reported but contributes no gradient
        return task, afd.detach(), task * cfg.eta
    return task, afd, total_loss(afd, task, cfg.beta, cfg.eta)


def train_student_kd(train: Sequence[Sample], cfg: TrainConfig, teacher: TeacherNet | None = None,
                     val: Sequence[Sample] | None = None, model: StudentNet | None = None) -> TrainResult:
    """Step 2: minimize ``beta * AFD + eta * DILATE`` over student and SE weights.

    ``teacher=None`` trains the same student on ``eta * DILATE`` alone. The
    teacher is never updated. Early stopping watches the validation DILATE
    term so that runs with different ``beta`` use the same criterion.
    """
    _check_samples(train, cfg, "training")
    model_rng, se_rng, shuffle_rng = cfg.streams()
    student = model if model is not None else build_student(cfg, model_rng)
    se: list[SEWeights] = []
    train_hints = val_hints = None
    if teacher is not None:
        t_stages, s_stages = len(teacher.stages), len(student.stages)
        if t_stages != s_stages:
            raise ArchitectureError(f"teacher has {t_stages} stages, student {s_stages}")
        se = [SEWeights(c, cfg.se_reduction, se_rng) for c in student.channels]
        train_hints = teacher_features(teacher, train)
        val_hints = teacher_features(teacher, val) if val else None
    use_afd = teacher is not None and cfg.beta > 0
    params = student.parameters() + [p for g in se for p in g.parameters()]
    opt = Adam(params, lr=cfg.lr)
    history = []
    stopper = _EarlyStop(cfg.patience)
    snapshot = lambda: (student.state_dict(), [g.state_dict() for g in se])
    stopper.best_state = snapshot()
    for epoch in range(1, cfg.epochs + 1):
        totals, tasks, afds = [], [], []
        for idx in _batches(len(train), cfg.batch, shuffle_rng):
            opt.zero_grad()
            for i in idx:
                hints = train_hints[i] if train_hints is not None else None
                task, afd, total = _student_losses(student, se, train[i], hints, cfg, use_afd)
                where = f"student epoch {epoch}, sample {train[i].name or i}"
                totals.append(_check_loss(total, where))
                tasks.append(task.item())
                afds.append(afd.item() if afd is not None else math.nan)
                backward(total * (1.0 / len(idx)))
            opt.step()
        with no_grad():
            if val:
                val_loss = float(np.mean([
                    dilate(student(s.x)[0], s.y, cfg.alpha, cfg.gamma, cfg.normalize_dilate).item() for s in val
                ]))
            else:
                val_loss = float(np.mean(tasks))
        history.append(EpochLog(epoch, float(np.mean(totals)), val_loss, float(np.mean(afds)), float(np.mean(tasks))))
        if stopper.update(epoch, val_loss, snapshot):
            break
    best_student, best_se = stopper.best_state
    student.load_state_dict(best_student)
    for g, state in zip(se, best_se):
        g.load_state_dict(state)
    return TrainResult(student, history, stopper.best_epoch, se)


# -- inference and evaluation ------------------------------------------------
def predict(model, x) -> np.ndarray:
    with no_grad():
        out, _ = model(np.asarray(x, dtype=np.float64))
    return out.data.copy()


def evaluate(model, samples: Sequence[Sample], window_seconds: float | None = None) -> MetricReport:
    """Heart-rate metrics of predictions against labels, one or more windows per sample.

    The window defaults to each sample's full duration. Undefined Pearson or
    NMSE (constant series) become NaN rather than raising.
    """
    pred_hr, true_hr, pred_all, true_all = [], [], [], []
    for s in samples:
        p = predict(model, s.x)
        win = window_seconds or s.y.size / s.fs
        pred_hr.append(estimate_hr(PpgSignal(p, s.fs), win).values)
        true_hr.append(estimate_hr(PpgSignal(s.y, s.fs), win).values)
        pred_all.append(_z(p))
        true_all.append(_z(s.y))
    pred_sig = PpgSignal(np.concatenate(pred_all), samples[0].fs)
    true_sig = PpgSignal(np.concatenate(true_all), samples[0].fs)
    return metrics(np.concatenate(pred_hr), np.concatenate(true_hr), pred_sig, true_sig, strict=False)


def _z(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / sd if sd > 0 else x - x.mean()


# -- checkpoints ---------------------------------------------------------------
def model_arch(model) -> dict:
    arch = {
        "kind": "teacher" if isinstance(model, TeacherNet) else "student",
        "input_hw": model.input_hw,
        "channels": list(model.channels),
        "seq_len": model.seq_len,
        "attention": model.attention,
    }
    if isinstance(model, StudentNet):
        arch["tsm"] = model.tsm_cfg.variant
        arch["head"] = model.head_kind
    return arch


def model_from_arch(arch: dict):
    if arch["kind"] == "teacher":
        return TeacherNet(arch["input_hw"], arch["channels"], arch["seq_len"], arch["attention"])
    if arch["kind"] == "student":
        return StudentNet(arch["input_hw"], arch["channels"], arch["tsm"], arch["seq_len"],
                          arch["attention"], arch.get("head", "deconv"))
    raise ArchitectureError(f"unknown model kind {arch['kind']!r}")


def save_model(path, model, seed: int, epoch: int, extra: dict | None = None) -> None:
    arch = model_arch(model)
    if extra:
        arch = {**arch, "extra": extra}
    write_checkpoint(path, model.state_dict(), arch, seed, epoch)


def load_model(path):
    state, header = read_checkpoint(Path(path))
    model = model_from_arch(header["arch"])
    model.load_state_dict(state)
    return model, header


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
