"""Formant-sum synthesis of single utterances with frame-exact state alignments.

An utterance is laid out on the frame grid first (phone states and non-speech runs),
then rendered sample by sample. The waveform length is chosen so that the frontend
produces exactly one frame per aligned state: N = (T - 1) * shift + window.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from src.state.audio import Waveform, quantize
from src.state.corpus_settings import CorpusSettings, PhoneSpec
from src.state.errors import LexiconError
from src.state.inventory import StateInventory

logger = logging.getLogger(__name__)

# Spectral glide across the three states of a phone.
STATE_FREQ_FACTORS = (0.96, 1.0, 1.04)
NONSPEECH_TYPE_PROBS = (0.5, 0.25, 0.25)
MEAN_NONSPEECH_RUN = 25.0
FADE_SAMPLES = 48

Seed = int | Sequence[int]


@dataclass(frozen=True)
class SyntheticUtterance:
    """One generated utterance: audio, words and the per-frame state ids that produced it."""

    utterance_id: str
    waveform: Waveform
    transcript: tuple[str, ...]
    true_alignment: np.ndarray
    speaker_id: str

    @property
    def num_frames(self) -> int:
        return int(self.true_alignment.shape[0])


@dataclass(frozen=True)
class _Run:
    """A stretch of frames rendered by one source."""

    start: int
    frames: int
    kind: str
    phone: PhoneSpec | None = None
    state_frames: tuple[int, int, int] = (0, 0, 0)


def inventory_for(settings: CorpusSettings) -> StateInventory:
    """State inventory implied by the configured phone set."""
    return StateInventory(phones=tuple(p.phone_id for p in settings.phones))


def _rng(seed: Seed, stream: int) -> np.random.Generator:
    base = [seed] if isinstance(seed, int) else list(seed)
    return np.random.default_rng([*base, stream])


def word_phones(words: Sequence[str], settings: CorpusSettings) -> list[list[PhoneSpec]]:
    """Resolve every word to its phone specs.

    Raises:
        LexiconError: If a word is not in the vocabulary or names an unknown phone.
    """
    table = {p.phone_id: p for p in settings.phones}
    resolved: list[list[PhoneSpec]] = []
    for word in words:
        if word not in settings.vocabulary:
            msg = f"Word '{word}' is not in the vocabulary"
            raise LexiconError(msg)
        phones = settings.vocabulary[word]
        missing = [p for p in phones if p not in table]
        if missing:
            msg = f"Word '{word}' uses unknown phones {missing}"
            raise LexiconError(msg)
        resolved.append([table[p] for p in phones])
    return resolved


def draw_phone_durations(
    words: Sequence[str], settings: CorpusSettings, seed: Seed
) -> list[list[tuple[int, int, int]]]:
    """Per word, per phone: frames spent in each of the three states.

    Uses its own random stream so that the speech length of an utterance is known
    before its non-speech budget is decided.
    """
    rng = _rng(seed, 0)
    durations: list[list[tuple[int, int, int]]] = []
    for phones in word_phones(words, settings):
        per_word = []
        for spec in phones:
            total = max(3, round(spec.mean_duration + spec.duration_jitter * rng.standard_normal()))
            q, r = divmod(total, 3)
            per_word.append((q, q + r, q))
        durations.append(per_word)
    return durations


def speech_frame_count(words: Sequence[str], settings: CorpusSettings, seed: Seed) -> int:
    """Number of speech frames synth_utterance will produce for (words, seed)."""
    return sum(sum(d) for word in draw_phone_durations(words, settings, seed) for d in word)


def _nonspeech_runs(total: int, start: int, rng: np.random.Generator) -> list[_Run]:
    runs: list[_Run] = []
    kinds = ("silence", "hesitation", "babble")
    remaining = total
    while remaining > 0:
        frames = min(remaining, 1 + int(rng.geometric(1.0 / MEAN_NONSPEECH_RUN)))
        kind = kinds[int(rng.choice(3, p=NONSPEECH_TYPE_PROBS))]
        runs.append(_Run(start=start, frames=frames, kind=kind))
        start += frames
        remaining -= frames
    return runs


def _layout(
    words: Sequence[str], settings: CorpusSettings, seed: Seed, nonspeech_frames: int, rng: np.random.Generator
) -> list[_Run]:
    durations = draw_phone_durations(words, settings, seed)
    phones = word_phones(words, settings)
    slots = len(words) + 1
    # Leading and trailing slots get twice the weight of inter-word gaps.
    alpha = np.ones(slots)
    alpha[0] = alpha[-1] = 2.0
    gaps = rng.multinomial(nonspeech_frames, rng.dirichlet(alpha)) if slots > 1 else np.array([nonspeech_frames])
    runs: list[_Run] = []
    cursor = 0
    for i in range(slots):
        runs.extend(_nonspeech_runs(int(gaps[i]), cursor, rng))
        cursor += int(gaps[i])
        if i < len(words):
            for spec, state_frames in zip(phones[i], durations[i], strict=True):
                frames = sum(state_frames)
                runs.append(_Run(start=cursor, frames=frames, kind="speech", phone=spec, state_frames=state_frames))
                cursor += frames
    return runs


def _render_phone(
    run: _Run, n_samples: int, shift: int, scale: float, settings: CorpusSettings, rng: np.random.Generator
) -> np.ndarray:
    assert run.phone is not None
    sr = settings.sample_rate
    nyquist_guard = 0.98 * sr / 2
    factor = np.empty(n_samples)
    edge = 0
    for pos, frames in enumerate(run.state_frames):
        stop = n_samples if pos == 2 else min(n_samples, edge + frames * shift)
        factor[edge:stop] = STATE_FREQ_FACTORS[pos]
        edge = stop
    signal = np.zeros(n_samples)
    norm = sum(a for _, a in run.phone.formants) or 1.0
    for freq, amp in run.phone.formants:
        inst = np.minimum(freq * scale * factor, nyquist_guard)
        phase = 2 * np.pi * np.cumsum(inst) / sr + rng.uniform(0, 2 * np.pi)
        signal += amp * np.sin(phase)
    signal = signal / norm + run.phone.noise_floor * rng.standard_normal(n_samples)
    fade = min(FADE_SAMPLES, n_samples // 2)
    if fade:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(fade) / fade)
        signal[:fade] *= ramp
        signal[-fade:] *= ramp[::-1]
    return signal * settings.speech_level * rng.uniform(0.8, 1.2)


def _render_nonspeech(
    kind: str, n_samples: int, offset: int, scale: float, settings: CorpusSettings, rng: np.random.Generator
) -> np.ndarray:
    n = np.arange(offset, offset + n_samples) / settings.sample_rate
    noise = rng.standard_normal(n_samples)
    if kind == "silence":
        return settings.silence_level * noise
    if kind == "hesitation":
        f0 = settings.hesitation_hz * scale
        hum = (np.sin(2 * np.pi * f0 * n) + 0.5 * np.sin(4 * np.pi * f0 * n)) / 1.5
        return settings.hesitation_level * hum + settings.silence_level * noise
    return settings.babble_level * noise * (1.0 + 0.5 * np.sin(2 * np.pi * 4.0 * n))


def synth_utterance(
    words: Sequence[str],
    settings: CorpusSettings,
    seed: Seed,
    *,
    nonspeech_frames: int | None = None,
    speaker_scale: float = 1.0,
    utterance_id: str = "utt",
    speaker_id: str = "spk00",
) -> SyntheticUtterance:
    """Synthesize one utterance and its true frame alignment.

    Args:
        words: Word sequence; empty for a pure non-speech utterance.
        settings: Phone set, vocabulary, levels and frame geometry.
        seed: Integer or integer sequence; the output is a pure function of it.
        nonspeech_frames: Non-speech budget in frames. Defaults to ``target_ratio`` times the
            speech frames, or a uniform draw in the pure-non-speech range for empty input.
        speaker_scale: Formant scaling of the speaker.
        utterance_id: Id recorded on the result.
        speaker_id: Speaker recorded on the result.

    Returns:
        The utterance, with a waveform already quantized to 16-bit.

    Raises:
        LexiconError: If a word or phone is unknown.
    """
    inventory = inventory_for(settings)
    rng = _rng(seed, 1)
    if nonspeech_frames is None:
        if words:
            nonspeech_frames = round(settings.target_ratio * speech_frame_count(words, settings, seed))
        else:
            lo, hi = settings.pure_nonspeech_min_frames, settings.pure_nonspeech_max_frames
            nonspeech_frames = int(rng.integers(lo, hi + 1))
    if not words:
        nonspeech_frames = max(1, nonspeech_frames)

    runs = _layout(words, settings, seed, max(0, nonspeech_frames), rng)
    total_frames = sum(r.frames for r in runs)
    shift, window = settings.shift_samples, settings.window_samples
    n_samples = (total_frames - 1) * shift + window

    alignment = np.empty(total_frames, dtype=np.int64)
    samples = np.zeros(n_samples)
    for run in runs:
        if run.kind == "speech":
            assert run.phone is not None
            ids = inventory.phone_states(run.phone.phone_id)
            alignment[run.start : run.start + run.frames] = np.repeat(ids, run.state_frames)
        else:
            alignment[run.start : run.start + run.frames] = inventory.nonspeech_state(run.kind)
        lo = run.start * shift
        hi = n_samples if run.start + run.frames == total_frames else (run.start + run.frames) * shift
        if run.kind == "speech":
            samples[lo:hi] += _render_phone(run, hi - lo, shift, speaker_scale, settings, rng)
        else:
            samples[lo:hi] += _render_nonspeech(run.kind, hi - lo, lo, speaker_scale, settings, rng)

    waveform = quantize(Waveform(samples=np.clip(samples, -1.0, 1.0), sample_rate=settings.sample_rate))
    return SyntheticUtterance(
        utterance_id=utterance_id,
        waveform=waveform,
        transcript=tuple(words),
        true_alignment=alignment,
        speaker_id=speaker_id,
    )
