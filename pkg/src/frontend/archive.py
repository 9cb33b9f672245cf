"""Per-utterance feature archives.

Header: magic ``HLFE`` | u16 version | u32 T | u32 D | f32 frame shift ms | f32 frame length ms,
followed by T x D row-major little-endian float32 values.
"""

import logging
import struct
from pathlib import Path

import numpy as np

from src.frontend.features import FeatureSequence
from src.state.errors import InputError

logger = logging.getLogger(__name__)

MAGIC = b"HLFE"
VERSION = 1
_HEADER = struct.Struct("<4sHIIff")


def write_features(path: Path, feats: FeatureSequence) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(MAGIC, VERSION, feats.num_frames, feats.dim, feats.frame_shift_ms, feats.frame_length_ms)
    path.write_bytes(header + np.ascontiguousarray(feats.frames, dtype="<f4").tobytes())


def read_features(path: Path) -> FeatureSequence:
    """Load an archive written by write_features.

    Raises:
        InputError: If the file is missing, has a bad header or a truncated body.
    """
    if not path.is_file():
        msg = f"Feature archive not found: {path}"
        raise InputError(msg)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        msg = f"Truncated feature archive: {path}"
        raise InputError(msg)
    magic, version, t, d, shift, length = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        msg = f"Not a version-{VERSION} feature archive: {path}"
        raise InputError(msg)
    body = data[_HEADER.size :]
    if len(body) != 4 * t * d:
        msg = f"Feature archive {path} holds {len(body)} bytes, expected {4 * t * d}"
        raise InputError(msg)
    frames = np.frombuffer(body, dtype="<f4").reshape(t, d).astype(np.float64)
    return FeatureSequence(frames=frames, frame_shift_ms=float(shift), frame_length_ms=float(length))
