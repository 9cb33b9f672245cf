"""Augmentation: waveform transforms, spec parsing and manifest expansion.

Speed, volume and noise act on the waveform; pitch and VTLP act inside feature
extraction (see features.py). Copy 0 of every transform is the identity, so a
"3x SP" spec keeps the original plus two perturbed copies.
"""

import logging
import re
import zlib
from collections.abc import Sequence
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from src.state.audio import Waveform
from src.state.errors import ConfigurationError, ContractError
from src.state.models import AugmentationSpec, AugmentationStep, AugmentedEntry, ManifestEntry, NoiseMode, Transform
from src.state.settings import FrontendSettings

logger = logging.getLogger(__name__)

MAX_FOREGROUND_SPAN = 0.5

_TRANSFORM_NAMES: dict[str, Transform] = {
    "sp": Transform.SPEED,
    "speed": Transform.SPEED,
    "vol": Transform.VOLUME,
    "volume": Transform.VOLUME,
    "pit": Transform.PITCH,
    "pitch": Transform.PITCH,
    "vtlp": Transform.VTLP,
    "noise": Transform.NOISE,
}
_TERM = re.compile(r"(\d+)\s*x\s*([A-Za-z]+)\.?", re.IGNORECASE)


# --- Waveform transforms ---


def speed_perturb(w: Waveform, factor: float) -> Waveform:
    """Band-limited resampling read back at the original rate; output has round(N / factor) samples.

    Raises:
        ContractError: If factor <= 0.
    """
    if factor <= 0:
        msg = f"Speed factor must be positive, got {factor}"
        raise ContractError(msg)
    if factor == 1.0:
        return Waveform(samples=w.samples.copy(), sample_rate=w.sample_rate)
    ratio = Fraction(factor).limit_denominator(1000)
    out = resample_poly(w.samples, ratio.denominator, ratio.numerator)
    target = round(w.num_samples / factor)
    out = out[:target] if out.shape[0] >= target else np.pad(out, (0, target - out.shape[0]))
    return Waveform(samples=np.clip(out, -1.0, 1.0), sample_rate=w.sample_rate)


def volume_perturb(w: Waveform, gain: float) -> Waveform:
    """Scale by gain, then hard-clip to [-1, 1].

    Raises:
        ContractError: If gain <= 0.
    """
    if gain <= 0:
        msg = f"Gain must be positive, got {gain}"
        raise ContractError(msg)
    return Waveform(samples=np.clip(w.samples * gain, -1.0, 1.0), sample_rate=w.sample_rate)


def noise_gain(p_signal: float, p_noise: float, snr_db: float) -> float:
    """g = sqrt(P_signal / (P_noise * 10^(snr/10)))."""
    return float(np.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0))))


def noise_region(num_samples: int, mode: NoiseMode, offset: float, span: float) -> tuple[int, int]:
    """Sample range covered by the noise: everything for background, at most half for foreground."""
    if mode == NoiseMode.BACKGROUND:
        return 0, num_samples
    length = max(1, min(round(min(span, MAX_FOREGROUND_SPAN) * num_samples), num_samples // 2 or 1))
    start = round(offset * (num_samples - length))
    return start, start + length


def mix_noise(
    w: Waveform, noise: Waveform, snr_db: float, mode: NoiseMode, *, offset: float = 0.0, span: float = 0.5
) -> Waveform:
    """Lay noise over the signal at the requested SNR, measured over the mixed region.

    Args:
        w: Clean signal.
        noise: Noise source; tiled or cropped to the region length.
        snr_db: Target signal-to-noise ratio in dB.
        mode: Background covers the whole signal; foreground covers ``span`` of it (<= 50%).
        offset: Foreground insertion point as a fraction of the free room.
        span: Foreground length as a fraction of the signal duration.

    Raises:
        ContractError: On a sample-rate mismatch or an all-zero noise source.
    """
    if noise.sample_rate != w.sample_rate:
        msg = f"Noise at {noise.sample_rate} Hz cannot be mixed into {w.sample_rate} Hz audio"
        raise ContractError(msg)
    if not np.any(noise.samples):
        msg = "Noise source is all zeros"
        raise ContractError(msg)
    start, end = noise_region(w.num_samples, mode, offset, span)
    segment = np.resize(noise.samples, end - start)
    p_signal = float(np.mean(w.samples[start:end] ** 2))
    p_noise = float(np.mean(segment**2))
    if p_noise == 0.0:
        msg = "Noise segment has zero power"
        raise ContractError(msg)
    out = w.samples.copy()
    out[start:end] += noise_gain(p_signal, p_noise, snr_db) * segment
    return Waveform(samples=np.clip(out, -1.0, 1.0), sample_rate=w.sample_rate)


def remap_alignment(alignment: np.ndarray, num_frames: int) -> np.ndarray:
    """Stretch a frame alignment to a new length by nearest-index lookup."""
    src = len(alignment)
    if num_frames == src:
        return alignment.copy()
    idx = np.clip(np.round((np.arange(num_frames) + 0.5) * src / num_frames - 0.5), 0, src - 1).astype(np.int64)
    return alignment[idx]


# --- Specs ---


def parse_augmentation_spec(text: str, settings: FrontendSettings) -> AugmentationSpec:
    """Parse strings like "2x Pit. 3x Vol. 2x VTLP 2x Noise 3x SP".

    Raises:
        ConfigurationError: On unknown transform names, zero multiplicities or stray text.
    """
    steps: list[AugmentationStep] = []
    consumed = _TERM.sub("", text).strip(" .,")
    if consumed:
        msg = f"Unparseable augmentation spec {text!r} (left over: {consumed!r})"
        raise ConfigurationError(msg)
    for count, name in _TERM.findall(text):
        transform = _TRANSFORM_NAMES.get(name.lower())
        if transform is None:
            msg = f"Unknown augmentation transform '{name}' in {text!r}"
            raise ConfigurationError(msg)
        if int(count) < 1:
            msg = f"Multiplicity must be >= 1 in {text!r}"
            raise ConfigurationError(msg)
        low, high = {
            Transform.SPEED: (min(settings.speed_factors), max(settings.speed_factors)),
            Transform.VOLUME: (settings.volume_low, settings.volume_high),
            Transform.PITCH: (settings.warp_low, settings.warp_high),
            Transform.VTLP: (settings.warp_low, settings.warp_high),
            Transform.NOISE: (settings.snr_low_db, settings.snr_high_db),
        }[transform]
        steps.append(AugmentationStep(transform=transform, multiplicity=int(count), low=low, high=high))
    return AugmentationSpec(steps=steps)


def as_augmented(entry: ManifestEntry | AugmentedEntry) -> AugmentedEntry:
    """Wrap a manifest entry as an unperturbed augmented entry."""
    if isinstance(entry, AugmentedEntry):
        return entry
    return AugmentedEntry(entry_id=entry.utterance_id, source=entry, transcript=list(entry.transcript))


def _copy_rng(seed: int, source_id: str, step_index: int, copy: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(source_id.encode()), step_index, copy])


def _speed_factor(step: AugmentationStep, copy: int, factors: Sequence[float], rng: np.random.Generator) -> float:
    # Fixed factors, nearest-to-identity first, when the multiplicity matches the factor list.
    ordered = sorted(factors, key=lambda f: (abs(f - 1.0), f))
    if step.multiplicity == len(ordered) and copy < len(ordered):
        return float(ordered[copy])
    if copy == 0:
        return 1.0
    return float(rng.uniform(step.low, step.high))


def _perturbed_copy(
    base: AugmentedEntry,
    step: AugmentationStep,
    step_index: int,
    copy: int,
    noise_ids: Sequence[str],
    seed: int,
    settings: FrontendSettings,
) -> AugmentedEntry:
    source_id = base.source.utterance_id
    update: dict[str, object] = {
        "entry_id": f"{source_id}#{step.transform}-{copy}",
        "transform": step.transform,
        "copy_index": copy,
        "param": 1.0,
        "noise_id": "",
    }
    rng = _copy_rng(seed, source_id, step_index, copy)
    if step.transform == Transform.SPEED:
        update["param"] = _speed_factor(step, copy, settings.speed_factors, rng)
    elif copy == 0:
        pass
    elif step.transform == Transform.VOLUME:
        update["param"] = float(np.exp(rng.uniform(np.log(step.low), np.log(step.high))))
    elif step.transform in (Transform.PITCH, Transform.VTLP):
        update["param"] = float(rng.uniform(step.low, step.high))
    elif step.transform == Transform.NOISE:
        update["param"] = float(rng.uniform(step.low, step.high))
        update["noise_id"] = noise_ids[int(rng.integers(len(noise_ids)))]
        update["noise_mode"] = NoiseMode.FOREGROUND if rng.random() < 0.5 else NoiseMode.BACKGROUND
        update["noise_offset"] = float(rng.uniform(0.0, 1.0))
        update["noise_span"] = float(rng.uniform(0.1, MAX_FOREGROUND_SPAN))
    return base.model_copy(update=update)


def apply_augmentation(
    entries: Sequence[ManifestEntry | AugmentedEntry],
    spec: AugmentationSpec,
    noise_pool: Sequence[ManifestEntry],
    seed: int,
    settings: FrontendSettings,
) -> list[AugmentedEntry]:
    """Expand entries by the spec; output size = len(entries) x sum of multiplicities.

    Perturbation parameters are a pure function of (seed, source utterance id, step, copy).
    Labels, confidences and iteration tags of the inputs propagate to every copy.

    Raises:
        ConfigurationError: If noise is requested with an empty pool.
    """
    needs_noise = any(s.transform == Transform.NOISE for s in spec.steps)
    if needs_noise and not noise_pool:
        msg = "Noise augmentation requested but the noise pool is empty"
        raise ConfigurationError(msg)
    noise_ids = [n.utterance_id for n in noise_pool]
    bases = [as_augmented(e) for e in entries]
    if not spec.steps:
        return bases
    out: list[AugmentedEntry] = []
    for base in bases:
        # Copy indices continue across repeated steps of one transform so entry ids stay unique.
        offsets: dict[Transform, int] = {}
        for step_index, step in enumerate(spec.steps):
            first = offsets.get(step.transform, 0)
            for copy in range(first, first + step.multiplicity):
                out.append(_perturbed_copy(base, step, step_index, copy, noise_ids, seed, settings))
            offsets[step.transform] = first + step.multiplicity
    logger.info("augmented | inputs=%d outputs=%d fold=%d", len(bases), len(out), spec.fold)
    return out
