"""Binary checkpoint files for parameter sets.

Layout (all integers little-endian):
    magic ``HYBL`` | u16 version | stage tag | config digest | JSON metadata |
    u32 tensor count | per tensor: name, u8 kind, u8 ndim, u32 dims, u8 dtype, raw values

Strings are u16-length-prefixed UTF-8, the metadata blob is u32-length-prefixed.
This module imports from state — NEVER from nnet/ or higher layers.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from src.state.errors import ContractError, InputError, UsageError

logger = logging.getLogger(__name__)

MAGIC = b"HYBL"
FORMAT_VERSION = 1

_DTYPES: dict[int, np.dtype[Any]] = {0: np.dtype("<f8"), 1: np.dtype("<f4"), 2: np.dtype("<i8")}
_DTYPE_CODES = {dt: code for code, dt in _DTYPES.items()}


class TensorKind(IntEnum):
    PARAM = 0
    BUFFER = 1
    OPTIMIZER = 2


@dataclass
class Checkpoint:
    """In-memory image of a checkpoint file."""

    stage: str
    digest: str
    params: dict[str, np.ndarray] = field(default_factory=dict)
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)


def _write_str(fh: BinaryIO, text: str) -> None:
    data = text.encode("utf-8")
    fh.write(struct.pack("<H", len(data)))
    fh.write(data)


def _read_exact(fh: BinaryIO, n: int, path: Path) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        msg = f"Truncated checkpoint: {path}"
        raise InputError(msg)
    return data


def _read_str(fh: BinaryIO, path: Path) -> str:
    (n,) = struct.unpack("<H", _read_exact(fh, 2, path))
    return _read_exact(fh, n, path).decode("utf-8")


def _to_le(array: np.ndarray) -> np.ndarray:
    if array.dtype.kind == "f":
        target = np.dtype("<f4") if array.dtype.itemsize == 4 else np.dtype("<f8")
    elif array.dtype.kind in "iu":
        target = np.dtype("<i8")
    else:
        msg = f"Unsupported checkpoint dtype {array.dtype}"
        raise ContractError(msg)
    return np.ascontiguousarray(array, dtype=target)


def save_checkpoint(path: Path, ckpt: Checkpoint, *, force: bool = True) -> None:
    """Write a checkpoint.

    Args:
        path: Destination file.
        ckpt: Tensors and provenance to store.
        force: When False, refuse to replace an existing file.

    Raises:
        UsageError: If the file exists and force is False.
    """
    if path.exists() and not force:
        msg = f"Refusing to overwrite {path} (pass --force)"
        raise UsageError(msg)
    path.parent.mkdir(parents=True, exist_ok=True)
    groups = (
        (TensorKind.PARAM, ckpt.params),
        (TensorKind.BUFFER, ckpt.buffers),
        (TensorKind.OPTIMIZER, ckpt.optimizer),
    )
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", FORMAT_VERSION))
        _write_str(fh, ckpt.stage)
        _write_str(fh, ckpt.digest)
        meta = json.dumps(ckpt.metadata, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", sum(len(g) for _, g in groups)))
        for kind, tensors in groups:
            for name in sorted(tensors):
                array = _to_le(tensors[name])
                _write_str(fh, name)
                fh.write(struct.pack("<BB", kind, array.ndim))
                fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
                fh.write(struct.pack("<B", _DTYPE_CODES[array.dtype]))
                fh.write(array.tobytes(order="C"))
    logger.info("checkpoint_saved | path=%s stage=%s tensors=%d", path, ckpt.stage, sum(len(g) for _, g in groups))


def load_checkpoint(path: Path, *, stage: str | None = None, digest: str | None = None) -> Checkpoint:
    """Read a checkpoint, optionally validating its stage tag and config digest.

    Raises:
        InputError: If the file is missing, truncated or not a checkpoint.
        ContractError: If the stage tag or digest does not match the expected value.
    """
    if not path.is_file():
        msg = f"Checkpoint not found: {path}"
        raise InputError(msg)
    with path.open("rb") as fh:
        if fh.read(4) != MAGIC:
            msg = f"Not a hybridlab checkpoint: {path}"
            raise InputError(msg)
        (version,) = struct.unpack("<H", _read_exact(fh, 2, path))
        if version != FORMAT_VERSION:
            msg = f"Unsupported checkpoint version {version} in {path}"
            raise InputError(msg)
        ckpt = Checkpoint(stage=_read_str(fh, path), digest=_read_str(fh, path))
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, path))
        ckpt.metadata = json.loads(_read_exact(fh, meta_len, path).decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, path))
        targets = {TensorKind.PARAM: ckpt.params, TensorKind.BUFFER: ckpt.buffers, TensorKind.OPTIMIZER: ckpt.optimizer}
        for _ in range(count):
            name = _read_str(fh, path)
            kind, ndim = struct.unpack("<BB", _read_exact(fh, 2, path))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, path))
            (code,) = struct.unpack("<B", _read_exact(fh, 1, path))
            dtype = _DTYPES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            array = np.frombuffer(_read_exact(fh, nbytes, path), dtype=dtype).reshape(shape)
            targets[TensorKind(kind)][name] = array.astype(dtype.newbyteorder("="))
    if stage is not None and ckpt.stage != stage:
        msg = f"Checkpoint {path} has stage tag '{ckpt.stage}', expected '{stage}'"
        raise ContractError(msg)
    if digest is not None and ckpt.digest != digest:
        msg = f"Stale checkpoint {path}: digest {ckpt.digest[:12]} does not match active config {digest[:12]}"
        raise ContractError(msg)
    return ckpt
