"""Waveform type and 16-bit PCM WAV persistence.

This module imports from state — NEVER from frontend/, corpus/ or higher layers.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf

from src.state.errors import ContractError, InputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Waveform:
    """Mono samples in [-1, 1] at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            msg = f"Sample rate must be positive, got {self.sample_rate}"
            raise ContractError(msg)
        if self.samples.ndim != 1:
            msg = f"Waveform must be 1-D, got shape {self.samples.shape}"
            raise ContractError(msg)
        if not np.all(np.isfinite(self.samples)):
            msg = "Waveform contains non-finite samples"
            raise ContractError(msg)

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.num_samples / self.sample_rate


def _to_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.clip(samples, -1.0, 1.0) * 32768.0), -32768, 32767).astype(np.int16)


def write_wav(path: Path, waveform: Waveform) -> None:
    """Write a waveform as 16-bit little-endian mono PCM (RIFF container)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), _to_pcm16(waveform.samples), waveform.sample_rate, subtype="PCM_16", format="WAV")


def read_wav(path: Path) -> Waveform:
    """Read a mono WAV file into float64 samples.

    Raises:
        InputError: If the file is missing or not mono.
    """
    if not path.is_file():
        msg = f"Audio file not found: {path}"
        raise InputError(msg)
    samples, rate = sf.read(str(path), dtype="float64", always_2d=False)
    if samples.ndim != 1:
        msg = f"Expected mono audio in {path}, got {samples.shape[1]} channels"
        raise InputError(msg)
    return Waveform(samples=samples, sample_rate=int(rate))


def quantize(waveform: Waveform) -> Waveform:
    """Round samples to the 16-bit grid, so in-memory audio matches what read_wav returns."""
    return Waveform(samples=_to_pcm16(waveform.samples) / 32768.0, sample_rate=waveform.sample_rate)
