"""Pydantic data models for hybridlab records.

Shared types persisted to disk or passed between stages. Numeric payloads
(waveforms, feature matrices, alignments) are numpy-backed dataclasses in the
packages that own them; this module only holds the metadata around them.
This module imports NOTHING from src/ except other state modules.
"""

from enum import StrEnum

from pydantic import BaseModel, Field, field_validator, model_validator

# --- Enums ---


class Split(StrEnum):
    """Corpus splits."""

    TRANSCRIBED = "transcribed-train"
    UNTRANSCRIBED = "untranscribed-train"
    DEV = "dev"
    EVAL = "eval"


class LossType(StrEnum):
    """Acoustic-model training objective."""

    CE = "ce"
    NSDL = "nsdl"


class Transform(StrEnum):
    """Augmentation transforms.

    speed/volume/noise act on the waveform; pitch/vtlp act inside feature extraction.
    NONE marks an unaugmented entry.
    """

    NONE = "none"
    SPEED = "speed"
    VOLUME = "volume"
    PITCH = "pitch"
    VTLP = "vtlp"
    NOISE = "noise"


class NoiseMode(StrEnum):
    """How a noise source is laid over the signal."""

    FOREGROUND = "foreground"
    BACKGROUND = "background"


class RescoreMode(StrEnum):
    """How the recurrent-LM score is combined with first-pass scores."""

    REPLACE = "replace"
    INTERPOLATE = "interpolate"


# --- Corpus records ---


class ManifestEntry(BaseModel):
    """One utterance line of a corpus manifest.

    Paths are relative to the manifest's directory so that two corpora generated
    into different directories are byte-identical.
    """

    utterance_id: str
    audio_path: str
    transcript: list[str] = Field(default_factory=list)
    alignment_path: str
    split: Split

    @field_validator("utterance_id")
    @classmethod
    def _no_separators(cls, value: str) -> str:
        if not value or any(ch in value for ch in "\t\n #"):
            msg = f"Invalid utterance id {value!r}: must be non-empty without tabs, spaces, newlines or '#'"
            raise ValueError(msg)
        return value

    @property
    def speaker_id(self) -> str:
        """Speaker id, encoded as the first dash-separated field of the utterance id."""
        return self.utterance_id.split("-", 1)[0]


class CorpusManifest(BaseModel):
    """All utterances of a generated corpus plus the provenance of the generator run."""

    entries: list[ManifestEntry] = Field(default_factory=list)
    seed: int
    digest: str = Field(description="Digest of the generator settings that produced the corpus")

    @model_validator(mode="after")
    def _unique_ids(self) -> "CorpusManifest":
        seen: set[str] = set()
        for entry in self.entries:
            if entry.utterance_id in seen:
                msg = f"Duplicate utterance id in manifest: {entry.utterance_id}"
                raise ValueError(msg)
            seen.add(entry.utterance_id)
        return self

    def split(self, split: Split) -> list[ManifestEntry]:
        """Entries of one split, in manifest order."""
        return [e for e in self.entries if e.split == split]


class ClassDurationStats(BaseModel):
    """Frame statistics of one state class (non-speech or speech)."""

    total: int = Field(ge=0)
    mean: float = Field(ge=0.0)
    std: float = Field(ge=0.0)


class StateDurationStats(BaseModel):
    """Per-class frame statistics over a set of alignments (population std)."""

    nonspeech: ClassDurationStats
    speech: ClassDurationStats
    utterances: int = Field(ge=0)

    @property
    def ratio(self) -> float:
        """Total non-speech frames per total speech frame."""
        return self.nonspeech.total / self.speech.total if self.speech.total else float("inf")


# --- Augmentation ---


class AugmentationStep(BaseModel):
    """One "<k>x <transform>" term of an augmentation spec.

    Continuous parameters are drawn uniformly from [low, high] (log-uniform for volume);
    speed copies use the fixed factors of the 3-way scheme.
    """

    transform: Transform
    multiplicity: int = Field(ge=1)
    low: float
    high: float

    @model_validator(mode="after")
    def _ordered_range(self) -> "AugmentationStep":
        if self.transform == Transform.NONE:
            msg = "An augmentation step cannot use transform 'none'"
            raise ValueError(msg)
        if self.low > self.high:
            msg = f"Parameter range for {self.transform} is reversed: [{self.low}, {self.high}]"
            raise ValueError(msg)
        return self


class AugmentationSpec(BaseModel):
    """Ordered augmentation steps applied to one split."""

    steps: list[AugmentationStep] = Field(default_factory=list)

    @property
    def fold(self) -> int:
        """Number of entries produced per source utterance (1 for an empty spec)."""
        return sum(s.multiplicity for s in self.steps) or 1


class AugmentedEntry(BaseModel):
    """A (possibly) perturbed copy of a manifest entry.

    The entry id carries a provenance suffix ``<id>#<transform>-<copy>``. ``param`` is
    the speed factor, gain, warp factor or SNR (dB) depending on the transform.
    """

    entry_id: str
    source: ManifestEntry
    transform: Transform = Transform.NONE
    copy_index: int = 0
    param: float = 1.0
    noise_id: str = ""
    noise_mode: NoiseMode = NoiseMode.BACKGROUND
    noise_offset: float = Field(default=0.0, ge=0.0, le=1.0, description="Foreground insertion point, fraction")
    noise_span: float = Field(default=0.0, ge=0.0, le=0.5, description="Foreground length, fraction of duration")
    transcript: list[str] = Field(default_factory=list)
    confidence: float | None = None
    iteration: int | None = None

    @property
    def is_pseudo(self) -> bool:
        """True when the labels come from a decoder rather than a human transcript."""
        return self.iteration is not None


# --- Reports ---


class MetricsRow(BaseModel):
    """One WER measurement of a pipeline stage on a split."""

    stage: str
    split: Split
    wer: float = Field(ge=0.0)
    substitutions: int = Field(ge=0)
    deletions: int = Field(ge=0)
    insertions: int = Field(ge=0)
    ref_words: int = Field(ge=0)
    utterances: int = Field(ge=0)
    timestamp: str = ""

    @model_validator(mode="after")
    def _consistent(self) -> "MetricsRow":
        if self.ref_words:
            expected = 100.0 * (self.substitutions + self.deletions + self.insertions) / self.ref_words
            if abs(expected - self.wer) > 1e-2:
                msg = f"WER {self.wer:.4f} inconsistent with S/D/I over {self.ref_words} words ({expected:.4f})"
                raise ValueError(msg)
        return self


class SslReportRow(BaseModel):
    """Outcome of one incremental SSL iteration."""

    iteration: int = Field(ge=1)
    threshold: float = Field(ge=0.0, le=1.0)
    decoded: int = Field(ge=0)
    accepted: int = Field(ge=0)
    acceptance_rate: float = Field(ge=0.0, le=1.0)
    dev_wer: float = Field(ge=0.0)
    elapsed_seconds: float = Field(ge=0.0)
    improved: bool = False


class GridRow(BaseModel):
    """One line of the rescoring weight grid search."""

    weight: float = Field(ge=0.0)
    dev_wer: float = Field(ge=0.0)


class LossLogRow(BaseModel):
    """One minibatch (or epoch summary) line of the training CSV log."""

    stage: str
    epoch: int = Field(ge=0)
    utterance_id: str
    frames: int = Field(ge=0)
    l1: float = 0.0
    l2: float = 0.0
    total: float = 0.0


class ScoringRow(BaseModel):
    """Per-utterance line of a scoring report; the summary line uses utterance id ``*total*``."""

    utterance_id: str
    reference: str
    hypothesis: str
    substitutions: int = Field(ge=0)
    deletions: int = Field(ge=0)
    insertions: int = Field(ge=0)
    ref_words: int = Field(ge=0)
    wer: float = Field(ge=0.0)
