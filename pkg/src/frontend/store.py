"""Lazy realization of (augmented) entries into model features and frame labels.

Augmented copies are never written to disk; the store renders them on first use
and keeps the result in memory for later epochs. Unperturbed entries are read
from the prepared feature archives when an archive directory is given.
Features are always rounded through float32, so archived, cached and freshly
computed frames are identical.
"""

import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from src.frontend.archive import read_features, write_features
from src.frontend.augment import mix_noise, remap_alignment, speed_perturb, volume_perturb
from src.frontend.features import FeatureSequence, model_features
from src.state.audio import Waveform, read_wav
from src.state.errors import ContractError
from src.state.manifest import read_alignment
from src.state.models import AugmentedEntry, ManifestEntry, Transform
from src.state.settings import FrontendSettings

logger = logging.getLogger(__name__)

ARCHIVE_SUFFIX = ".fea"


class FeatureStore:
    """Feature and label provider for one corpus directory."""

    def __init__(
        self,
        corpus_root: Path,
        settings: FrontendSettings,
        noise_pool: Sequence[ManifestEntry] = (),
        *,
        cache: bool = True,
        archive_dir: Path | None = None,
    ) -> None:
        self.root = corpus_root
        self.settings = settings
        self.archive_dir = archive_dir
        self._noise_entries = {n.utterance_id: n for n in noise_pool}
        self._noise: dict[str, Waveform] = {}
        self._features: dict[str, np.ndarray] = {}
        self._cache = cache
        self.pseudo_alignments: dict[str, np.ndarray] = {}

    def waveform(self, entry: AugmentedEntry) -> Waveform:
        """Source audio with the entry's waveform-level transform applied."""
        w = read_wav(self.root / entry.source.audio_path)
        if entry.transform == Transform.SPEED:
            return speed_perturb(w, entry.param)
        if entry.transform == Transform.VOLUME:
            return volume_perturb(w, entry.param)
        if entry.transform == Transform.NOISE and entry.noise_id:
            return mix_noise(
                w,
                self._noise_source(entry.noise_id),
                entry.param,
                entry.noise_mode,
                offset=entry.noise_offset,
                span=entry.noise_span,
            )
        return w

    def _noise_source(self, noise_id: str) -> Waveform:
        if noise_id not in self._noise:
            if noise_id not in self._noise_entries:
                msg = f"Noise source '{noise_id}' is not in the noise pool"
                raise ContractError(msg)
            self._noise[noise_id] = read_wav(self.root / self._noise_entries[noise_id].audio_path)
        return self._noise[noise_id]

    def archive_path(self, utterance_id: str) -> Path | None:
        return None if self.archive_dir is None else self.archive_dir / f"{utterance_id}{ARCHIVE_SUFFIX}"

    def _sequence(self, frames: np.ndarray) -> FeatureSequence:
        return FeatureSequence(
            frames=frames.astype(np.float64),
            frame_shift_ms=self.settings.frame_shift_ms,
            frame_length_ms=self.settings.frame_length_ms,
        )

    def _render(self, entry: AugmentedEntry) -> np.ndarray:
        archive = self.archive_path(entry.source.utterance_id)
        if entry.transform == Transform.NONE and archive is not None and archive.is_file():
            return read_features(archive).frames.astype(np.float32)
        w = self.waveform(entry)
        alpha = entry.param if entry.transform == Transform.VTLP else 1.0
        beta = entry.param if entry.transform == Transform.PITCH else 1.0
        return model_features(w, self.settings, alpha=alpha, beta=beta).frames.astype(np.float32)

    def features(self, entry: AugmentedEntry) -> FeatureSequence:
        """Model-input features of an entry (paired, normalized)."""
        frames = self._features.get(entry.entry_id)
        if frames is None:
            frames = self._render(entry)
            if self._cache:
                self._features[entry.entry_id] = frames
        return self._sequence(frames)

    def archive(self, entry: ManifestEntry) -> Path:
        """Write the unperturbed features of an entry to its archive.

        Raises:
            ContractError: If the store has no archive directory.
        """
        path = self.archive_path(entry.utterance_id)
        if path is None:
            msg = "Feature store has no archive directory"
            raise ContractError(msg)
        w = read_wav(self.root / entry.audio_path)
        write_features(path, model_features(w, self.settings))
        return path

    def labels(self, entry: AugmentedEntry, num_frames: int | None = None) -> np.ndarray:
        """Frame state ids for an entry.

        Pseudo-labelled entries must have their alignment registered in ``pseudo_alignments``;
        human-transcribed entries use the true alignment, stretched for speed copies.

        Raises:
            ContractError: If a pseudo entry has no registered alignment.
        """
        if entry.entry_id in self.pseudo_alignments:
            return self.pseudo_alignments[entry.entry_id]
        if entry.is_pseudo:
            msg = f"No pseudo alignment registered for {entry.entry_id}"
            raise ContractError(msg)
        alignment = read_alignment(self.root / entry.source.alignment_path)
        if num_frames is None:
            num_frames = self.features(entry).num_frames
        return remap_alignment(alignment, num_frames)

    def drop(self, entry_ids: Sequence[str]) -> None:
        for eid in entry_ids:
            self._features.pop(eid, None)
