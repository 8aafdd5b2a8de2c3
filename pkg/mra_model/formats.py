"""Signal and batch file formats.

Signal: JSON {k, magnitudes, phases}.
Batch: JSON header {k, n, sigma, seed, signal_hash, ...}. Samples are stored
as little-endian float64, row-major (Re y_1, Im y_1, ..., Re y_K, Im y_K) per
sample: embedded as base64 under "data_b64" for small batches, otherwise in a
sidecar file named by "data_file".
"""
import base64
import json
from pathlib import Path
from typing import Union

import numpy as np

from core.errors import BatchFormatError, MRAError
from core.models import SampleBatch, SignalSpec

# batches with at most this many float64 values are embedded in the JSON
EMBED_LIMIT = 1 << 16

PathLike = Union[str, Path]


def save_signal(signal: SignalSpec, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(signal.to_dict(), f, indent=2)
    return path


def load_signal(path: PathLike) -> SignalSpec:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise BatchFormatError(f"cannot read signal file {path}: {e}")
    return SignalSpec.from_dict(data)


def _to_bytes(batch: SampleBatch) -> bytes:
    flat = np.empty((batch.n, 2 * batch.k_max), dtype="<f8")
    flat[:, 0::2] = batch.data.real
    flat[:, 1::2] = batch.data.imag
    return flat.tobytes(order="C")


def _from_bytes(raw: bytes, n: int, k: int) -> np.ndarray:
    flat = np.frombuffer(raw, dtype="<f8")
    if flat.size != 2 * n * k:
        raise BatchFormatError("sample payload has the wrong length", expected=2 * n * k, found=flat.size)
    flat = flat.reshape(n, 2 * k)
    return flat[:, 0::2] + 1j * flat[:, 1::2]


def save_batch(batch: SampleBatch, path: PathLike, embed: bool = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if embed is None:
        embed = 2 * batch.n * batch.k_max <= EMBED_LIMIT
    payload = _to_bytes(batch)
    header = batch.header()
    if embed:
        header["data_b64"] = base64.b64encode(payload).decode("ascii")
    else:
        data_path = path.with_suffix(".bin")
        data_path.write_bytes(payload)
        header["data_file"] = data_path.name
    with open(path, "w", encoding="utf-8") as f:
        json.dump(header, f, indent=2)
    return path


def load_batch(path: PathLike) -> SampleBatch:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise BatchFormatError(f"cannot read batch file {path}: {e}")

    missing = [key for key in ("k", "n", "sigma", "seed") if key not in header]
    if missing:
        raise BatchFormatError("batch header is missing keys", missing=missing)
    n, k = int(header["n"]), int(header["k"])

    if "data_b64" in header:
        raw = base64.b64decode(header["data_b64"])
    elif "data_file" in header:
        data_path = path.parent / header["data_file"]
        if not data_path.exists():
            raise BatchFormatError(f"sample data file not found: {data_path}")
        raw = data_path.read_bytes()
    else:
        raise BatchFormatError("batch file carries neither data_b64 nor data_file")

    try:
        return SampleBatch(
            data=_from_bytes(raw, n, k),
            sigma=float(header["sigma"]),
            seed=int(header["seed"]),
            signal_hash=header.get("signal_hash", ""),
            no_rotation=bool(header.get("no_rotation", False)),
            debug=bool(header.get("debug", False)),
        )
    except MRAError:
        raise
    except (TypeError, ValueError) as e:
        raise BatchFormatError(f"invalid batch header: {e}")
