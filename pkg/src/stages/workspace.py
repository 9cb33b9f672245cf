"""On-disk workspace of a pipeline run: paths, loaded data and artifact digests.

Every artifact records the digest of the config sections that determine it
(``digest_sections`` in its metadata). Loading recomputes that digest from the
active config and fails on a mismatch.
This module imports from every lower layer — it is in stages/, the top of the stack.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from src.acoustic.model import AcousticModel
from src.corpus.generate import WRITTEN_TEXT_NAME, corpus_digest
from src.decoder.bigram import BigramLM, train_bigram
from src.decoder.lexicon import Lexicon, build_lexicon
from src.frontend.store import FeatureStore
from src.nnet.params import ParameterSet
from src.state.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from src.state.errors import ContractError, InputError, UsageError
from src.state.manifest import MANIFEST_NAME, read_manifest
from src.state.models import CorpusManifest, LossType, ManifestEntry, Split
from src.state.settings import PipelineConfig, stage_digest

logger = logging.getLogger(__name__)

PREPARED_NAME = "prepared.tsv"
NOISE_POOL_NAME = "noise_pool.tsv"
FEATURES_DIR = "feats"
METRICS_NAME = "metrics.csv"
CURVE_NAME = "train_curve.csv"
GRID_NAME = "grid.csv"
LOSS_LOG_NAME = "loss_log.csv"
BIAPC_NAME = "biapc.ckpt"
RNNLM_NAME = "rnnlm.ckpt"

DATA_SECTIONS = ("corpus", "frontend", "seeds")
ACOUSTIC_SECTIONS = (*DATA_SECTIONS, "model", "nsdl", "train")
BIAPC_SECTIONS = (*DATA_SECTIONS, "model", "biapc")
SSL_SECTIONS = (*ACOUSTIC_SECTIONS, "ssl", "decode")
RNNLM_SECTIONS = ("corpus", "rnnlm", "seeds")


def acoustic_name(loss: LossType, init: str) -> str:
    return f"{loss}-{init}.ckpt"


@dataclass
class Workspace:
    """Paths and lazily loaded inputs for one config."""

    config: PipelineConfig
    jobs: int = 1
    force: bool = False

    @property
    def corpus_dir(self) -> Path:
        return self.config.paths.corpus_dir

    @property
    def models_dir(self) -> Path:
        return self.config.paths.models_dir

    @property
    def reports_dir(self) -> Path:
        return self.config.paths.reports_dir

    @property
    def loss_log(self) -> Path:
        return self.reports_dir / LOSS_LOG_NAME

    def digest(self, sections: Sequence[str]) -> str:
        return stage_digest(self.config, *sections)

    def require(self, *paths: Path) -> None:
        """Fail before any compute when an input is missing.

        Raises:
            InputError: Naming the first missing path.
        """
        for path in paths:
            if not path.exists():
                msg = f"Required input not found: {path}"
                raise InputError(msg)

    def check_writable(self, path: Path) -> None:
        """Raises UsageError if ``path`` exists and --force was not given."""
        if path.exists() and not self.force:
            msg = f"Refusing to overwrite {path} (pass --force)"
            raise UsageError(msg)

    # --- Corpus ---

    def _read_checked(self, name: str) -> CorpusManifest:
        path = self.corpus_dir / name
        self.require(path)
        manifest = read_manifest(path)
        expected = corpus_digest(self.config.corpus, self.config.seeds.corpus)
        if manifest.digest != expected:
            msg = f"Stale corpus {path}: digest {manifest.digest[:12]} does not match active config {expected[:12]}"
            raise ContractError(msg)
        return manifest

    @cached_property
    def raw_manifest(self) -> CorpusManifest:
        return self._read_checked(MANIFEST_NAME)

    @cached_property
    def manifest(self) -> CorpusManifest:
        """The prepared manifest (pure non-speech training utterances removed)."""
        return self._read_checked(PREPARED_NAME)

    @cached_property
    def noise_pool(self) -> list[ManifestEntry]:
        return self._read_checked(NOISE_POOL_NAME).entries

    def split(self, split: Split) -> list[ManifestEntry]:
        return self.manifest.split(split)

    def supervised_entries(self) -> list[ManifestEntry]:
        """Transcribed training data, plus dev in the open-track setting."""
        entries = self.split(Split.TRANSCRIBED)
        if self.config.train.include_dev:
            logger.warning("open_track | dev data is part of training; dev WER is optimistic")
            entries = [*entries, *self.split(Split.DEV)]
        return entries

    @cached_property
    def store(self) -> FeatureStore:
        return FeatureStore(
            self.corpus_dir, self.config.frontend, self.noise_pool, archive_dir=self.corpus_dir / FEATURES_DIR
        )

    # --- Decoding resources ---

    @cached_property
    def lexicon(self) -> Lexicon:
        return build_lexicon(self.config.corpus)

    def lm_sentences(self) -> list[list[str]]:
        """Transcribed-train transcripts followed by the written text."""
        written = self.corpus_dir / WRITTEN_TEXT_NAME
        self.require(written)
        text = [line.split() for line in written.read_text(encoding="utf-8").splitlines()]
        return [e.transcript for e in self.split(Split.TRANSCRIBED)] + text

    @cached_property
    def bigram(self) -> BigramLM:
        return train_bigram(self.lm_sentences(), self.lexicon.words, self.config.decode.bigram_discount)

    def acoustic_model(self, loss: LossType) -> AcousticModel:
        return AcousticModel(config=self.config.model, loss=loss, inventory=self.lexicon.inventory)

    # --- Checkpoints ---

    def save(self, path: Path, params: ParameterSet, stage: str, sections: Sequence[str], **metadata: object) -> None:
        ckpt = params.to_checkpoint(
            stage, self.digest(sections), metadata={"digest_sections": list(sections), **metadata}
        )
        save_checkpoint(path, ckpt, force=True)

    def load(self, path: Path, stage: str | None = None) -> tuple[ParameterSet, Checkpoint]:
        """Load a checkpoint and verify it against the active config.

        Raises:
            InputError: If the file is missing.
            ContractError: On a wrong stage tag or a stale digest.
        """
        self.require(path)
        ckpt = load_checkpoint(path, stage=stage)
        sections = ckpt.metadata.get("digest_sections", [])
        expected = self.digest(sections)
        if ckpt.digest != expected:
            msg = f"Stale checkpoint {path}: digest {ckpt.digest[:12]} does not match active config {expected[:12]}"
            raise ContractError(msg)
        return ParameterSet.from_checkpoint(ckpt), ckpt

    def loss_of(self, ckpt: Checkpoint) -> LossType:
        """The training objective of an acoustic checkpoint.

        Raises:
            ContractError: If the checkpoint is not an acoustic model (Bi-APC or LM).
        """
        if "loss" not in ckpt.metadata:
            msg = f"Checkpoint with stage tag '{ckpt.stage}' is not an acoustic model"
            raise ContractError(msg)
        return LossType(ckpt.metadata["loss"])
