"""On-disk formats: binary tensors, PPG/HR tables, frame sequences, checkpoints.

Tensor file layout (all integers little-endian)::

    magic    8 bytes  b"PDTENSOR"
    version  u32      1
    dtype    u32      1 = float64, 2 = uint8
    rank     u64
    dims     u64 * rank
    payload  prod(dims) elements, little-endian
    checksum u64      BLAKE2b-64 of every preceding byte

Checkpoints start with ``b"PDCKPT01\\n"``, then one line of JSON (architecture,
seed, epoch, parameter table), then the float64 weight blob and the same
trailing checksum.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import BadMagicError, ChecksumError, TruncatedPayloadError, ValidationError
from ..signal.hr import HrSeries
from ..types import FrameSequence, PpgSignal

TENSOR_MAGIC = b"PDTENSOR"
TENSOR_VERSION = 1
CHECKPOINT_MAGIC = b"PDCKPT01\n"
DTYPE_CODES = {1: np.dtype("<f8"), 2: np.dtype("u1")}
CODE_FOR_DTYPE = {np.dtype("<f8"): 1, np.dtype("u1"): 2}


def checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _atomic_write_text(path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


# -- tensors -----------------------------------------------------------------
def encode_tensor(array) -> bytes:
    arr = np.asarray(array)
    if arr.dtype == np.uint8:
        arr = arr.astype("u1")
    else:
        arr = arr.astype("<f8")
    header = TENSOR_MAGIC + struct.pack("<IIQ", TENSOR_VERSION, CODE_FOR_DTYPE[arr.dtype], arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    body = header + np.ascontiguousarray(arr).tobytes()
    return body + checksum(body)


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < len(TENSOR_MAGIC) or blob[: len(TENSOR_MAGIC)] != TENSOR_MAGIC:
        raise BadMagicError("not a tensor file (bad magic bytes)")
    pos = len(TENSOR_MAGIC)
    if len(blob) < pos + 16:
        raise TruncatedPayloadError("tensor header is truncated")
    version, code, rank = struct.unpack_from("<IIQ", blob, pos)
    pos += 16
    if version != TENSOR_VERSION:
        raise ValidationError(f"unsupported tensor file version {version}")
    if code not in DTYPE_CODES:
        raise ValidationError(f"unknown dtype code {code}")
    if rank > 32:
        raise ValidationError(f"implausible rank {rank}")
    if len(blob) < pos + 8 * rank:
        raise TruncatedPayloadError("tensor dims are truncated")
    dims = struct.unpack_from(f"<{rank}Q", blob, pos)
    pos += 8 * rank
    dtype = DTYPE_CODES[code]
    n_bytes = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    end = pos + n_bytes
    if len(blob) < end + 8:
        raise TruncatedPayloadError(f"payload truncated: need {end + 8} bytes, have {len(blob)}")
    if len(blob) > end + 8:
        raise ValidationError("unexpected bytes after the checksum")
    if checksum(blob[:end]) != blob[end : end + 8]:
        raise ChecksumError("tensor checksum mismatch")
    arr = np.frombuffer(blob, dtype=dtype, count=n_bytes // dtype.itemsize, offset=pos)
    return arr.reshape(dims).astype(dtype.newbyteorder("="))


def write_tensor(path, array) -> None:
    _atomic_write(path, encode_tensor(array))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


# -- PPG / HR tables ---------------------------------------------------------
PPG_HEADER = ["time_s", "value"]
HR_HEADER = ["start_s", "window_s", "hr_bpm"]


def write_ppg(path, sig: PpgSignal) -> None:
    rows = ["time_s,value"]
    rows += [f"{t!r},{v!r}" for t, v in zip(sig.times.tolist(), sig.samples.tolist())]
    _atomic_write_text(path, "\n".join(rows) + "\n")


def _read_rows(path, header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if [c.strip() for c in first[: len(header)]] != header:
            raise ValidationError(f"{path}: expected header {','.join(header)}, got {','.join(first)}")
        return [row for row in reader if row]


def read_ppg(path) -> PpgSignal:
    rows = _read_rows(path, PPG_HEADER)
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed row ({exc})") from exc
    if data.shape[0] < 2:
        raise ValidationError(f"{path}: a PPG file needs at least 2 samples")
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"{path}: non-finite value")
    t = data[:, 0]
    if np.any(np.diff(t) <= 0):
        raise ValidationError(f"{path}: timestamps must be strictly increasing")
    fs = round((len(t) - 1) / (t[-1] - t[0]), 9)
    return PpgSignal(data[:, 1], fs)


def write_hr(path, hr: HrSeries, groups=None) -> None:
    starts = hr.starts if hr.starts is not None else np.arange(len(hr)) * hr.window_seconds
    header = HR_HEADER + (["group"] if groups is not None else [])
    lines = [",".join(header)]
    for i, (s, v) in enumerate(zip(starts.tolist(), hr.values.tolist())):
        row = [repr(s), repr(float(hr.window_seconds)), repr(v)]
        if groups is not None:
            row.append(str(groups[i]))
        lines.append(",".join(row))
    meta = f"# fs_source={hr.fs_source!r} resolution_bpm={hr.resolution_bpm!r}\n"
    _atomic_write_text(path, meta + "\n".join(lines) + "\n")


def read_hr(path) -> tuple[HrSeries, list[str] | None]:
    with open(path) as fh:
        text = fh.read()
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            for item in line[1:].split():
                k, _, v = item.partition("=")
                meta[k] = float(v)
        elif line.strip():
            body.append(line)
    reader = list(csv.reader(body))
    if not reader or [c.strip() for c in reader[0][:3]] != HR_HEADER:
        raise ValidationError(f"{path}: expected header {','.join(HR_HEADER)}")
    has_group = len(reader[0]) > 3
    rows = reader[1:]
    if not rows:
        raise ValidationError(f"{path}: no heart-rate rows")
    try:
        starts = np.array([float(r[0]) for r in rows])
        window = float(rows[0][1])
        values = np.array([float(r[2]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed row ({exc})") from exc
    groups = [r[3] for r in rows] if has_group else None
    hr = HrSeries(values, window, meta.get("fs_source", float("nan")), starts,
                  meta.get("resolution_bpm", float("nan")))
    return hr, groups


# -- frame sequences ---------------------------------------------------------
def write_frames(path, seq: FrameSequence) -> None:
    path = Path(path)
    write_tensor(path, seq.frames)
    meta = {"fps": seq.fps, "subject": seq.subject, "condition": seq.condition}
    _atomic_write_text(path.with_suffix(path.suffix + ".json"), json.dumps(meta, sort_keys=True) + "\n")


def read_frames(path) -> FrameSequence:
    path = Path(path)
    frames = read_tensor(path)
    side = path.with_suffix(path.suffix + ".json")
    try:
        meta = json.loads(side.read_text())
    except FileNotFoundError:
        raise ValidationError(f"missing frame metadata {side}") from None
    return FrameSequence(frames, meta["fps"], meta.get("subject", ""), meta.get("condition", ""))


# -- checkpoints -------------------------------------------------------------
def encode_checkpoint(state: "OrderedDict[str, np.ndarray]", arch: dict, seed: int, epoch: int) -> bytes:
    table, blobs, offset = [], [], 0
    for name, arr in state.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        table.append([name, list(arr.shape), offset])
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {"arch": arch, "seed": int(seed), "epoch": int(epoch), "params": table, "blob_bytes": offset}
    body = CHECKPOINT_MAGIC + json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + b"".join(blobs)
    return body + checksum(body)


def decode_checkpoint(blob: bytes) -> tuple["OrderedDict[str, np.ndarray]", dict]:
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise BadMagicError("not a checkpoint file (bad magic bytes)")
    start = len(CHECKPOINT_MAGIC)
    nl = blob.find(b"\n", start)
    if nl < 0:
        raise TruncatedPayloadError("checkpoint header is truncated")
    try:
        header = json.loads(blob[start:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"checkpoint header is not valid JSON: {exc}") from exc
    end = nl + 1 + int(header["blob_bytes"])
    if len(blob) < end + 8:
        raise TruncatedPayloadError("checkpoint weight blob is truncated")
    if len(blob) > end + 8:
        raise ValidationError("unexpected bytes after the checksum")
    if checksum(blob[:end]) != blob[end : end + 8]:
        raise ChecksumError("checkpoint checksum mismatch")
    state = OrderedDict()
    for name, shape, offset in header["params"]:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=nl + 1 + offset)
        state[name] = arr.reshape(shape).astype(np.float64)
    return state, header


def write_checkpoint(path, state, arch: dict, seed: int, epoch: int) -> None:
    _atomic_write(path, encode_checkpoint(state, arch, seed, epoch))


def read_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
