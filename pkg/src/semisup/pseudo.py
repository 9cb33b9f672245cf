"""Pseudo-labelling of untranscribed utterances and assembly of the SSL training set.

This module imports from acoustic, decoder, frontend and state — NEVER from stages/.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.acoustic.recognize import Recognizer, decode_entries
from src.config import JOBS
from src.decoder.viterbi import utterance_confidence
from src.frontend.augment import apply_augmentation, as_augmented, parse_augmentation_spec
from src.frontend.store import FeatureStore
from src.state.errors import AlignmentError, ContractError, PipelineError
from src.state.models import AugmentedEntry, ManifestEntry
from src.state.settings import FrontendSettings, SslIterationConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PseudoLabeledUtterance:
    """Decoder output accepted as a training label."""

    entry: ManifestEntry
    words: tuple[str, ...]
    alignment: np.ndarray
    confidence: float
    iteration: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            msg = f"Confidence {self.confidence} of {self.entry.utterance_id} outside [0, 1]"
            raise ContractError(msg)

    @property
    def num_frames(self) -> int:
        return int(self.alignment.shape[0])

    def as_entry(self) -> AugmentedEntry:
        """The unperturbed training entry carrying the pseudo transcript and its provenance."""
        return AugmentedEntry(
            entry_id=self.entry.utterance_id,
            source=self.entry,
            transcript=list(self.words),
            confidence=self.confidence,
            iteration=self.iteration,
        )


def pseudo_label(
    recognizer: Recognizer,
    entries: Sequence[ManifestEntry],
    store: FeatureStore,
    iteration: int,
    jobs: int = JOBS,
) -> list[PseudoLabeledUtterance]:
    """Decode the pool with the current best model.

    Raises:
        PipelineError: If no utterance decodes.
    """
    decoded = decode_entries(recognizer, [as_augmented(e) for e in entries], store, jobs)
    records = [
        PseudoLabeledUtterance(
            entry=d.entry.source,
            words=d.hypothesis.words,
            alignment=d.hypothesis.alignment,
            confidence=utterance_confidence(d.hypothesis.alignment, d.log_posteriors),
            iteration=iteration,
        )
        for d in decoded
        if d.hypothesis is not None and d.log_posteriors is not None
    ]
    if not records:
        msg = f"SSL iteration {iteration}: none of {len(entries)} untranscribed utterances could be decoded"
        raise PipelineError(msg)
    failed = len(entries) - len(records)
    logger.info("pseudo_labelled | iteration=%d decoded=%d failed=%d", iteration, len(records), failed)
    return records


def filter_by_threshold(records: Sequence[PseudoLabeledUtterance], threshold: float) -> list[PseudoLabeledUtterance]:
    """Records with confidence >= threshold, order preserved."""
    if not 0.0 <= threshold <= 1.0:
        msg = f"Confidence threshold {threshold} outside [0, 1]"
        raise ContractError(msg)
    return [r for r in records if r.confidence >= threshold]


def assemble_training_set(
    transcribed: Sequence[ManifestEntry],
    accepted: Sequence[PseudoLabeledUtterance],
    iteration: SslIterationConfig,
    store: FeatureStore,
    recognizer: Recognizer,
    noise_pool: Sequence[ManifestEntry],
    seed: int,
    settings: FrontendSettings,
) -> list[AugmentedEntry]:
    """Augmented transcribed data followed by augmented pseudo-labelled data.

    Pseudo alignments are registered in ``store.pseudo_alignments``. Copies whose frame
    count differs from the decoded alignment (speed perturbation) are re-aligned against
    their pseudo transcript; copies that cannot be aligned are dropped with a warning.

    Raises:
        ConfigurationError: On invalid augmentation specs.
    """
    supervised = apply_augmentation(
        transcribed, parse_augmentation_spec(iteration.transcribed_augmentation, settings), noise_pool, seed, settings
    )
    by_id = {r.entry.utterance_id: r for r in accepted}
    copies = apply_augmentation(
        [r.as_entry() for r in accepted],
        parse_augmentation_spec(iteration.untranscribed_augmentation, settings),
        noise_pool,
        seed,
        settings,
    )
    pseudo: list[AugmentedEntry] = []
    for copy in copies:
        record = by_id[copy.source.utterance_id]
        features = store.features(copy).frames
        if features.shape[0] == record.num_frames:
            store.pseudo_alignments[copy.entry_id] = record.alignment
        else:
            try:
                store.pseudo_alignments[copy.entry_id] = recognizer.align(record.words, features)
            except AlignmentError as exc:
                logger.warning("pseudo_copy_dropped | entry=%s reason=%s", copy.entry_id, exc)
                store.drop([copy.entry_id])
                continue
        pseudo.append(copy)
    logger.info("training_set | transcribed=%d pseudo=%d", len(supervised), len(pseudo))
    return [*supervised, *pseudo]


def write_accepted(path: Path, records: Sequence[PseudoLabeledUtterance]) -> None:
    """Audit file: utterance id, confidence and pseudo transcript, tab-separated."""
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{r.entry.utterance_id}\t{r.confidence:.6f}\t{' '.join(r.words)}\n" for r in records]
    path.write_text("".join(lines), encoding="utf-8")
