"""Corpus generation, duration statistics and the non-speech utterance split.

Generation runs in two passes. The first pass draws the structure of every
utterance (words, speaker, speech length). The second pass spreads the non-speech
budget so the corpus-wide non-speech:speech frame ratio lands on the target, then
renders and writes each utterance.
"""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.config import JOBS
from src.corpus.grammar import build_grammar
from src.corpus.synth import SyntheticUtterance, inventory_for, speech_frame_count, synth_utterance
from src.state.audio import write_wav
from src.state.corpus_settings import CorpusSettings
from src.state.errors import ConfigurationError
from src.state.manifest import MANIFEST_NAME, read_alignment, write_alignment, write_manifest
from src.state.models import ClassDurationStats, CorpusManifest, ManifestEntry, Split, StateDurationStats

logger = logging.getLogger(__name__)

WRITTEN_TEXT_NAME = "written.txt"
MIN_VOCABULARY = 20
MIN_PHONES = 8

SPLIT_CODES: dict[Split, tuple[int, str]] = {
    Split.TRANSCRIBED: (0, "tr"),
    Split.UNTRANSCRIBED: (1, "un"),
    Split.DEV: (2, "dv"),
    Split.EVAL: (3, "ev"),
}


@dataclass(frozen=True)
class _Plan:
    split: Split
    index: int
    utterance_id: str
    speaker: int
    words: tuple[str, ...]
    speech_frames: int

    @property
    def seed(self) -> tuple[int, ...]:
        return (SPLIT_CODES[self.split][0], self.index)


def check_corpus_settings(settings: CorpusSettings) -> None:
    """Validate generator preconditions that pydantic field constraints cannot express.

    Raises:
        ConfigurationError: On a too-small vocabulary or phone set, an unknown phone in the
            vocabulary, a formant at or above Nyquist, a negative target ratio or an empty split.
    """
    if settings.target_ratio < 0:
        msg = f"target_ratio must be >= 0, got {settings.target_ratio}"
        raise ConfigurationError(msg)
    if len(settings.phones) < MIN_PHONES:
        msg = f"Phone set needs at least {MIN_PHONES} phones, got {len(settings.phones)}"
        raise ConfigurationError(msg)
    if len(settings.vocabulary) < MIN_VOCABULARY:
        msg = f"Vocabulary needs at least {MIN_VOCABULARY} words, got {len(settings.vocabulary)}"
        raise ConfigurationError(msg)
    known = {p.phone_id for p in settings.phones}
    for word, phones in settings.vocabulary.items():
        unknown = [p for p in phones if p not in known]
        if unknown:
            msg = f"Vocabulary word '{word}' references unknown phones {unknown}"
            raise ConfigurationError(msg)
    nyquist = settings.sample_rate / 2
    for spec in settings.phones:
        if any(f >= nyquist for f, _ in spec.formants):
            msg = f"Phone '{spec.phone_id}' has a formant at or above Nyquist ({nyquist} Hz)"
            raise ConfigurationError(msg)
    counts = (settings.transcribed_count, settings.untranscribed_count, settings.dev_count, settings.eval_count)
    if min(counts) < 1:
        msg = f"Every split needs at least one utterance, got counts {counts}"
        raise ConfigurationError(msg)


def corpus_digest(settings: CorpusSettings, seed: int) -> str:
    """Digest of (generator settings, seed); changes whenever either changes."""
    payload = json.dumps({"settings": settings.model_dump(mode="json"), "seed": seed}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def _split_count(settings: CorpusSettings, split: Split) -> int:
    return {
        Split.TRANSCRIBED: settings.transcribed_count,
        Split.UNTRANSCRIBED: settings.untranscribed_count,
        Split.DEV: settings.dev_count,
        Split.EVAL: settings.eval_count,
    }[split]


def _plan(settings: CorpusSettings, seed: int) -> list[_Plan]:
    grammar = build_grammar(settings, seed)
    n_tr = settings.transcribed_count
    n_pure = round(settings.nonspeech_fraction * n_tr)
    pure = set(np.random.default_rng([seed, 100]).choice(n_tr, size=n_pure, replace=False).tolist())
    plans: list[_Plan] = []
    for split, (code, short) in SPLIT_CODES.items():
        for i in range(_split_count(settings, split)):
            rng = np.random.default_rng([seed, code, i, 2])
            speaker = int(rng.integers(settings.num_speakers))
            words = () if split == Split.TRANSCRIBED and i in pure else tuple(grammar.sample(rng))
            uid = f"spk{speaker:02d}-{short}{i:04d}"
            frames = speech_frame_count(words, settings, (seed, code, i)) if words else 0
            plans.append(
                _Plan(split=split, index=i, utterance_id=uid, speaker=speaker, words=words, speech_frames=frames)
            )
    return plans


def _pure_frames(settings: CorpusSettings, seed: int, plan: _Plan) -> int:
    rng = np.random.default_rng([seed, *plan.seed, 3])
    return int(rng.integers(settings.pure_nonspeech_min_frames, settings.pure_nonspeech_max_frames + 1))


def speaker_scale(settings: CorpusSettings, seed: int, speaker: int) -> float:
    """Formant scale of a speaker; fixed per (seed, speaker)."""
    rng = np.random.default_rng([seed, 999, speaker])
    return float(rng.uniform(settings.speaker_scale_low, settings.speaker_scale_high))


def generate_utterances(settings: CorpusSettings, seed: int) -> list[tuple[Split, SyntheticUtterance]]:
    """Generate every utterance in memory, with the non-speech budget calibrated to the target ratio.

    Raises:
        ConfigurationError: If the settings violate generator preconditions.
    """
    check_corpus_settings(settings)
    plans = _plan(settings, seed)
    pure_frames = {p.utterance_id: _pure_frames(settings, seed, p) for p in plans if not p.words}
    speech_total = sum(p.speech_frames for p in plans)
    pure_total = sum(pure_frames.values())
    ratio = (settings.target_ratio * speech_total - pure_total) / speech_total if speech_total else 0.0
    if ratio < 0:
        logger.warning("calibration_clipped | pure_nonspeech=%d exceeds target budget; ratio set to 0", pure_total)
        ratio = 0.0
    logger.info("calibration | speech_frames=%d pure_frames=%d per_speech_ratio=%.4f", speech_total, pure_total, ratio)

    def render(plan: _Plan) -> tuple[Split, SyntheticUtterance]:
        budget = round(ratio * plan.speech_frames) if plan.words else pure_frames[plan.utterance_id]
        utt = synth_utterance(
            plan.words,
            settings,
            (seed, *plan.seed),
            nonspeech_frames=budget,
            speaker_scale=speaker_scale(settings, seed, plan.speaker),
            utterance_id=plan.utterance_id,
            speaker_id=f"spk{plan.speaker:02d}",
        )
        return plan.split, utt

    with ThreadPoolExecutor(max_workers=max(1, JOBS)) as pool:
        return list(pool.map(render, plans))


def generate_corpus(settings: CorpusSettings, seed: int, out_dir: Path) -> CorpusManifest:
    """Generate the corpus on disk: audio, alignments, manifest and written text.

    Paths in the manifest are relative to ``out_dir`` so two output directories hold
    byte-identical manifests.

    Args:
        settings: Generator settings.
        seed: Corpus seed.
        out_dir: Output directory, created if missing.

    Returns:
        The manifest that was written to ``out_dir/manifest.tsv``.
    """
    utterances = generate_utterances(settings, seed)
    entries: list[ManifestEntry] = []
    for split, utt in utterances:
        audio_rel = f"audio/{split}/{utt.utterance_id}.wav"
        ali_rel = f"align/{split}/{utt.utterance_id}.ali"
        write_wav(out_dir / audio_rel, utt.waveform)
        write_alignment(out_dir / ali_rel, utt.true_alignment)
        transcript = [] if split == Split.UNTRANSCRIBED else list(utt.transcript)
        entries.append(
            ManifestEntry(
                utterance_id=utt.utterance_id,
                audio_path=audio_rel,
                transcript=transcript,
                alignment_path=ali_rel,
                split=split,
            )
        )
    manifest = CorpusManifest(entries=entries, seed=seed, digest=corpus_digest(settings, seed))
    write_manifest(out_dir / MANIFEST_NAME, manifest)
    write_written_text(out_dir / WRITTEN_TEXT_NAME, settings, seed)
    counts = {s: len(manifest.split(s)) for s in Split}
    logger.info("corpus_generated | dir=%s seed=%d counts=%s", out_dir, seed, counts)
    return manifest


def written_sentences(settings: CorpusSettings, seed: int) -> list[list[str]]:
    """Sentences of the written-text side corpus, drawn from the same grammar."""
    grammar = build_grammar(settings, seed)
    return [grammar.sample(np.random.default_rng([seed, 300, i])) for i in range(settings.written_count)]


def write_written_text(path: Path, settings: CorpusSettings, seed: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(" ".join(s) + "\n" for s in written_sentences(settings, seed)), encoding="utf-8")


def _class_stats(counts: np.ndarray) -> ClassDurationStats:
    if counts.size == 0:
        return ClassDurationStats(total=0, mean=0.0, std=0.0)
    return ClassDurationStats(total=int(counts.sum()), mean=float(counts.mean()), std=float(counts.std(ddof=0)))


def alignment_stats(alignments: list[np.ndarray], num_nonspeech: int) -> StateDurationStats:
    """Per-class totals, means and population stds of per-utterance frame counts."""
    ns = np.array([int(np.count_nonzero(a < num_nonspeech)) for a in alignments], dtype=np.int64)
    sp = np.array([int(np.count_nonzero(a >= num_nonspeech)) for a in alignments], dtype=np.int64)
    return StateDurationStats(nonspeech=_class_stats(ns), speech=_class_stats(sp), utterances=len(alignments))


def corpus_stats(manifest: CorpusManifest, root: Path, settings: CorpusSettings | None = None) -> StateDurationStats:
    """Duration statistics over the true alignments of every manifest entry.

    Raises:
        InputError: If an alignment file is missing.
    """
    num_nonspeech = inventory_for(settings or CorpusSettings()).num_nonspeech
    alignments = [read_alignment(root / e.alignment_path) for e in manifest.entries]
    return alignment_stats(alignments, num_nonspeech)


def split_nonspeech_utterances(manifest: CorpusManifest) -> tuple[CorpusManifest, list[ManifestEntry]]:
    """Remove empty-transcript transcribed-train entries and return them as a noise pool.

    Other splits are untouched; order is preserved in both outputs.
    """
    kept: list[ManifestEntry] = []
    pool: list[ManifestEntry] = []
    for entry in manifest.entries:
        if entry.split == Split.TRANSCRIBED and not entry.transcript:
            pool.append(entry)
        else:
            kept.append(entry)
    logger.info("nonspeech_split | removed=%d kept=%d", len(pool), len(kept))
    return manifest.model_copy(update={"entries": kept}), pool
