"""Log-mel feature extraction, frame pairing and the two spectral warps (VTLP, pitch).

Frames are cut every ``shift`` samples with a symmetric Hamming window, zero-padded
to ``n_fft`` and reduced to a magnitude spectrum. Triangular filters are spaced
evenly on the mel scale mel(f) = 2595 log10(1 + f / 700).
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from src.state.audio import Waveform
from src.state.errors import ContractError, InputError
from src.state.settings import FrontendSettings

logger = logging.getLogger(__name__)

BASE_DIM = 80
WARP_GUARD = (0.8, 1.2)


@dataclass(frozen=True)
class FeatureSequence:
    """T x D matrix of log-mel frames with the geometry that produced it."""

    frames: np.ndarray
    frame_shift_ms: float = 10.0
    frame_length_ms: float = 25.0

    def __post_init__(self) -> None:
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            msg = f"Feature matrix must be T x D with T >= 1, got shape {self.frames.shape}"
            raise ContractError(msg)
        if not np.all(np.isfinite(self.frames)):
            msg = "Feature matrix contains non-finite values"
            raise ContractError(msg)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])


def hz_to_mel(hz: np.ndarray | float) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel: np.ndarray | float) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_edges(num_mel: int, fmin: float, fmax: float) -> np.ndarray:
    """The num_mel + 2 filter edge frequencies in Hz; entries 1..num_mel are the centers."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_mel + 2))


def vtlp_map(freqs: np.ndarray, alpha: float, knee_hz: float, nyquist: float) -> np.ndarray:
    """Piecewise-linear warp: slope alpha up to the knee, then a line to (nyquist, nyquist)."""
    if alpha == 1.0:
        return freqs
    knee = min(knee_hz, nyquist)
    upper = alpha * knee + (nyquist - alpha * knee) * (freqs - knee) / (nyquist - knee)
    return np.where(freqs <= knee, alpha * freqs, upper)


@lru_cache(maxsize=64)
def _filterbank(
    num_mel: int, n_fft: int, sample_rate: int, fmin: float, fmax: float, alpha: float, knee_hz: float
) -> np.ndarray:
    nyquist = sample_rate / 2
    edges = vtlp_map(mel_edges(num_mel, fmin, fmax), alpha, knee_hz, nyquist)
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lower) / (center - lower)
    falling = (upper - bins[None, :]) / (upper - center)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    bank.setflags(write=False)
    return bank


def filterbank(settings: FrontendSettings, alpha: float = 1.0) -> np.ndarray:
    """num_mel x (n_fft/2 + 1) triangular filter weights, optionally VTLP-warped."""
    return _filterbank(
        settings.num_mel,
        settings.n_fft,
        settings.sample_rate,
        settings.fmin,
        settings.upper_hz,
        alpha,
        settings.vtlp_knee_hz,
    )


def frame_count(num_samples: int, settings: FrontendSettings) -> int:
    """T = 1 + floor((N - window) / shift)."""
    return 1 + (num_samples - settings.window_samples) // settings.shift_samples


def magnitude_spectrum(w: Waveform, settings: FrontendSettings) -> np.ndarray:
    """T x (n_fft/2 + 1) magnitude spectra of Hamming-windowed frames.

    Raises:
        InputError: If the waveform is shorter than one window.
        ContractError: If the sample rate differs from the configured one.
    """
    if w.sample_rate != settings.sample_rate:
        msg = f"Waveform at {w.sample_rate} Hz, frontend configured for {settings.sample_rate} Hz"
        raise ContractError(msg)
    window = settings.window_samples
    if w.num_samples < window:
        msg = f"Waveform of {w.num_samples} samples is shorter than one window ({window})"
        raise InputError(msg)
    frames = sliding_window_view(w.samples, window)[:: settings.shift_samples]
    hamming = get_window("hamming", window, fftbins=False)
    return np.abs(np.fft.rfft(frames * hamming, n=settings.n_fft, axis=1))


def _log_mel(spectrum: np.ndarray, settings: FrontendSettings, alpha: float = 1.0) -> FeatureSequence:
    energies = spectrum @ filterbank(settings, alpha).T
    return FeatureSequence(
        frames=np.log(np.maximum(energies, settings.log_floor)),
        frame_shift_ms=settings.frame_shift_ms,
        frame_length_ms=settings.frame_length_ms,
    )


def _check_warp(name: str, factor: float) -> None:
    lo, hi = WARP_GUARD
    if not lo <= factor <= hi:
        msg = f"{name} {factor} outside the guard range [{lo}, {hi}]"
        raise ContractError(msg)


def extract_logmel(w: Waveform, settings: FrontendSettings) -> FeatureSequence:
    """Base log-mel features, T x num_mel."""
    return _log_mel(magnitude_spectrum(w, settings), settings)


def vtlp_warp(w: Waveform, settings: FrontendSettings, alpha: float) -> FeatureSequence:
    """Log-mel features with the filter edges moved through the VTLP warp.

    Raises:
        ContractError: If alpha lies outside [0.8, 1.2].
    """
    _check_warp("VTLP alpha", alpha)
    return _log_mel(magnitude_spectrum(w, settings), settings, alpha)


def warp_spectrum(spectrum: np.ndarray, beta: float, sample_rate: int) -> np.ndarray:
    """Rescale the linear frequency axis: S'(f) = S(f / beta), linearly interpolated."""
    if beta == 1.0:
        return spectrum
    bins = np.linspace(0.0, sample_rate / 2, spectrum.shape[1])
    source = bins / beta
    return np.stack([np.interp(source, bins, row, right=0.0) for row in spectrum])


def pitch_warp(w: Waveform, settings: FrontendSettings, beta: float) -> FeatureSequence:
    """Duration-preserving pitch perturbation applied to each frame's spectrum before mel binning.

    Raises:
        ContractError: If beta lies outside [0.8, 1.2].
    """
    _check_warp("Pitch beta", beta)
    return _log_mel(warp_spectrum(magnitude_spectrum(w, settings), beta, settings.sample_rate), settings)


def pair_frames(f: FeatureSequence, base_dim: int = BASE_DIM) -> FeatureSequence:
    """Append the next frame to every frame; the last frame is paired with itself.

    Raises:
        ContractError: If the input dimension is not base_dim.
    """
    if f.dim != base_dim:
        msg = f"pair_frames expects {base_dim}-dim input, got {f.dim}"
        raise ContractError(msg)
    nxt = np.concatenate([f.frames[1:], f.frames[-1:]], axis=0)
    return FeatureSequence(
        frames=np.concatenate([f.frames, nxt], axis=1),
        frame_shift_ms=f.frame_shift_ms,
        frame_length_ms=f.frame_length_ms,
    )


def mean_normalize(f: FeatureSequence) -> FeatureSequence:
    """Subtract the per-utterance mean of every dimension."""
    return FeatureSequence(
        frames=f.frames - f.frames.mean(axis=0, keepdims=True),
        frame_shift_ms=f.frame_shift_ms,
        frame_length_ms=f.frame_length_ms,
    )


def model_features(
    w: Waveform, settings: FrontendSettings, *, alpha: float = 1.0, beta: float = 1.0
) -> FeatureSequence:
    """Full input pipeline: (warped) log-mel, pairing and mean normalization per settings."""
    if beta != 1.0:
        feats = pitch_warp(w, settings, beta)
    elif alpha != 1.0:
        feats = vtlp_warp(w, settings, alpha)
    else:
        feats = extract_logmel(w, settings)
    if settings.pair:
        feats = pair_frames(feats, settings.num_mel)
    if settings.mean_normalize:
        feats = mean_normalize(feats)
    return feats
