"""Pipeline configuration: pydantic section models plus the INI loader.

One section model per INI section. Values arrive as strings from configparser
and are coerced by pydantic; comma-separated values become lists. The digest of
a config is the SHA-256 of its canonical key-sorted JSON dump.
This module imports from config and state/errors — NEVER from higher layers.
"""

import configparser
import hashlib
import json
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any, get_origin

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.config import WORK_DIR
from src.state.corpus_settings import CorpusSettings
from src.state.errors import ConfigurationError, InputError
from src.state.models import LossType, RescoreMode

logger = logging.getLogger(__name__)

SEED_NAMES: tuple[str, ...] = ("corpus", "init", "dropout", "augmentation", "lm", "ssl")


class FrontendSettings(BaseModel):
    """[frontend] log-mel extraction and augmentation parameter ranges."""

    sample_rate: int = Field(default=16000, gt=0)
    frame_length_ms: float = Field(default=25.0, gt=0)
    frame_shift_ms: float = Field(default=10.0, gt=0)
    num_mel: int = Field(default=80, gt=0)
    fmin: float = Field(default=20.0, ge=0)
    fmax: float | None = Field(default=None, description="Upper filterbank edge; Nyquist when unset")
    n_fft: int = Field(default=512, gt=0)
    log_floor: float = Field(default=1e-10, gt=0)
    vtlp_knee_hz: float = Field(default=4800.0, gt=0)
    pair: bool = True
    mean_normalize: bool = True
    speed_factors: list[float] = Field(default_factory=lambda: [0.9, 1.0, 1.1])
    volume_low: float = Field(default=0.5, gt=0)
    volume_high: float = Field(default=2.0, gt=0)
    warp_low: float = Field(default=0.9, ge=0.8, le=1.2)
    warp_high: float = Field(default=1.1, ge=0.8, le=1.2)
    snr_low_db: float = 5.0
    snr_high_db: float = 20.0

    @model_validator(mode="after")
    def _geometry(self) -> "FrontendSettings":
        if self.n_fft < self.window_samples:
            msg = f"n_fft ({self.n_fft}) shorter than the analysis window ({self.window_samples} samples)"
            raise ValueError(msg)
        if self.upper_hz <= self.fmin:
            msg = f"Filterbank edges reversed: fmin {self.fmin} >= fmax {self.upper_hz}"
            raise ValueError(msg)
        if any(f <= 0 for f in self.speed_factors):
            msg = f"Speed factors must be positive: {self.speed_factors}"
            raise ValueError(msg)
        return self

    @property
    def window_samples(self) -> int:
        return round(self.sample_rate * self.frame_length_ms / 1000)

    @property
    def shift_samples(self) -> int:
        return round(self.sample_rate * self.frame_shift_ms / 1000)

    @property
    def upper_hz(self) -> float:
        nyquist = self.sample_rate / 2
        return nyquist if self.fmax is None else min(self.fmax, nyquist)

    @property
    def feature_dim(self) -> int:
        return 2 * self.num_mel if self.pair else self.num_mel


class ModelSettings(BaseModel):
    """[model] BLSTM trunk shape (BlstmStackConfig)."""

    num_blocks: int = Field(default=4, ge=1)
    hidden_per_direction: int = Field(default=48, gt=0)
    input_dim: int = Field(default=160, gt=0)
    dropout_rate: float = Field(default=0.3, ge=0.0, lt=1.0)
    batch_norm: bool = True
    bn_momentum: float = Field(default=0.1, gt=0.0, le=1.0)
    bn_eps: float = Field(default=1e-5, gt=0.0)


BlstmStackConfig = ModelSettings


class NsdlLossConfig(BaseModel):
    """[nsdl] task ratio and class weights of the non-speech state discriminative loss."""

    model_config = ConfigDict(populate_by_name=True)

    task_ratio: float = Field(default=1.0, ge=0.0, alias="lambda")
    class_weight_nonspeech: float = Field(default=0.9, gt=0.0)
    class_weight_speech: float = Field(default=1.0, gt=0.0)
    eps: float = Field(default=1e-12, gt=0.0, description="Floor inside every log")


class TrainSettings(BaseModel):
    """[train] supervised acoustic-model training."""

    loss: LossType = LossType.NSDL
    epochs: int = Field(default=8, ge=1)
    learning_rate: float = Field(default=0.05, gt=0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    clip_norm: float = Field(default=5.0, gt=0)
    batch_size: int = Field(default=8, ge=1, description="Chunks (or utterances) per minibatch")
    chunked: bool = True
    chunk_core: int = Field(default=300, ge=1)
    chunk_context: int = Field(default=10, ge=0)
    include_dev: bool = False
    augmentation: str = "3x SP"


class BiApcConfig(BaseModel):
    """[biapc] bidirectional autoregressive predictive coding pretraining."""

    n: int = Field(default=2, ge=1)
    epochs: int = Field(default=20, ge=1)
    learning_rate: float = Field(default=0.05, gt=0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    clip_norm: float = Field(default=5.0, gt=0)
    batch_size: int = Field(default=8, ge=1)
    augmentation: str = "3x SP"


class SslIterationConfig(BaseModel):
    """Threshold and augmentation specs of one SSL iteration."""

    threshold: float = Field(ge=0.0, le=1.0)
    transcribed_augmentation: str
    untranscribed_augmentation: str


class SslSchedule(BaseModel):
    """[ssl] iteration schedule.

    Augmentation lists hold either one spec (used by every iteration) or one spec per threshold.
    """

    thresholds: list[float] = Field(default_factory=lambda: [0.35, 0.3, 0.28], min_length=1)
    transcribed_augmentation: list[str] = Field(default_factory=lambda: ["2x Pit. 3x Vol. 2x VTLP 3x SP"])
    untranscribed_augmentation: list[str] = Field(default_factory=lambda: ["3x SP"])
    epochs: int = Field(default=4, ge=1)
    warm_start: bool = True

    @model_validator(mode="after")
    def _lengths(self) -> "SslSchedule":
        for t in self.thresholds:
            if not 0.0 <= t <= 1.0:
                msg = f"SSL threshold {t} outside [0, 1]"
                raise ValueError(msg)
        for name in ("transcribed_augmentation", "untranscribed_augmentation"):
            specs = getattr(self, name)
            if len(specs) not in (1, len(self.thresholds)):
                msg = f"{name} needs 1 or {len(self.thresholds)} entries, got {len(specs)}"
                raise ValueError(msg)
        return self

    def iterations(self) -> list[SslIterationConfig]:
        """Expand the schedule into one config per iteration."""

        def pick(specs: list[str], i: int) -> str:
            return specs[0] if len(specs) == 1 else specs[i]

        return [
            SslIterationConfig(
                threshold=t,
                transcribed_augmentation=pick(self.transcribed_augmentation, i),
                untranscribed_augmentation=pick(self.untranscribed_augmentation, i),
            )
            for i, t in enumerate(self.thresholds)
        ]


class RnnLmConfig(BaseModel):
    """[rnnlm] recurrent LM shape, training and rescoring grid."""

    layers: int = Field(default=2, ge=1)
    hidden: int = Field(default=128, gt=0)
    embedding: int = Field(default=256, gt=0)
    epochs: int = Field(default=10, ge=1)
    learning_rate: float = Field(default=1.0, gt=0)
    momentum: float = Field(default=0.0, ge=0.0, lt=1.0)
    clip_norm: float = Field(default=5.0, gt=0)
    batch_size: int = Field(default=16, ge=1)
    min_count: int = Field(default=1, ge=1)
    grid: list[float] = Field(default_factory=lambda: [0.25, 0.3, 0.35])
    mode: RescoreMode = RescoreMode.REPLACE

    @field_validator("grid")
    @classmethod
    def _non_negative(cls, value: list[float]) -> list[float]:
        if any(w < 0 for w in value):
            msg = f"Rescoring weights must be >= 0: {value}"
            raise ValueError(msg)
        return value


class DecodeSettings(BaseModel):
    """[decode] graph construction and hybrid scoring."""

    prior_scale: float = Field(default=1.0, ge=0.0, description="gamma in log P(s|x) - gamma log Prior(s)")
    lm_scale: float = Field(default=1.0, ge=0.0)
    self_loop_prob: float = Field(default=0.5, gt=0.0, lt=1.0)
    nonspeech_loop_prob: float = Field(default=0.8, gt=0.0, lt=1.0)
    optional_nonspeech: bool = True
    word_insertion_penalty: float = 0.0
    nbest: int = Field(default=10, ge=1)
    bigram_discount: float = Field(default=0.5, gt=0.0, lt=1.0)


class PathsSettings(BaseModel):
    """[paths] workspace layout; every artifact lives under work_dir."""

    work_dir: str = WORK_DIR

    @property
    def root(self) -> Path:
        return Path(self.work_dir)

    @property
    def corpus_dir(self) -> Path:
        return self.root / "corpus"

    @property
    def models_dir(self) -> Path:
        return self.root / "models"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def ssl_dir(self) -> Path:
        return self.root / "ssl"


class SeedsSettings(BaseModel):
    """[seeds] every source of randomness is named here."""

    corpus: int = 7
    init: int = 11
    dropout: int = 13
    augmentation: int = 17
    lm: int = 19
    ssl: int = 23


class PipelineConfig(BaseModel):
    """Full validated pipeline configuration."""

    corpus: CorpusSettings = Field(default_factory=CorpusSettings)
    frontend: FrontendSettings = Field(default_factory=FrontendSettings)
    model: ModelSettings = Field(default_factory=ModelSettings)
    nsdl: NsdlLossConfig = Field(default_factory=NsdlLossConfig)
    train: TrainSettings = Field(default_factory=TrainSettings)
    biapc: BiApcConfig = Field(default_factory=BiApcConfig)
    ssl: SslSchedule = Field(default_factory=SslSchedule)
    rnnlm: RnnLmConfig = Field(default_factory=RnnLmConfig)
    decode: DecodeSettings = Field(default_factory=DecodeSettings)
    paths: PathsSettings = Field(default_factory=PathsSettings)
    seeds: SeedsSettings = Field(default_factory=SeedsSettings)

    @model_validator(mode="after")
    def _cross_section(self) -> "PipelineConfig":
        c, f = self.corpus, self.frontend
        if (c.sample_rate, c.window_samples, c.shift_samples) != (f.sample_rate, f.window_samples, f.shift_samples):
            msg = "[corpus] and [frontend] disagree on sample rate or frame geometry"
            raise ValueError(msg)
        if self.model.input_dim != f.feature_dim:
            msg = f"[model] input_dim {self.model.input_dim} != frontend feature dim {f.feature_dim}"
            raise ValueError(msg)
        return self


SECTIONS: dict[str, type[BaseModel]] = {
    "corpus": CorpusSettings,
    "frontend": FrontendSettings,
    "model": ModelSettings,
    "nsdl": NsdlLossConfig,
    "train": TrainSettings,
    "biapc": BiApcConfig,
    "ssl": SslSchedule,
    "rnnlm": RnnLmConfig,
    "decode": DecodeSettings,
    "paths": PathsSettings,
    "seeds": SeedsSettings,
}


# --- Loading ---


def _section_values(name: str, model: type[BaseModel], items: dict[str, str]) -> dict[str, Any]:
    """Map raw INI strings of one section to field values; reject unknown keys."""
    by_key: dict[str, str] = {}
    for field_name, info in model.model_fields.items():
        by_key[field_name] = field_name
        if info.alias:
            by_key[info.alias] = field_name
    values: dict[str, Any] = {}
    for key, raw in items.items():
        if key not in by_key:
            msg = f"Unknown key '{key}' in section [{name}]"
            raise ConfigurationError(msg)
        field_name = by_key[key]
        if get_origin(model.model_fields[field_name].annotation) is list and field_name != "phones":
            values[field_name] = [v.strip() for v in raw.split(",") if v.strip()]
        else:
            values[field_name] = raw.strip()
    return values


def parse_pipeline_config(text: str, seed_overrides: Sequence[str] = ()) -> PipelineConfig:
    """Parse INI text into a validated PipelineConfig.

    Args:
        text: INI content. Missing sections and keys take their defaults.
        seed_overrides: ``name=value`` strings replacing named seeds.

    Returns:
        The validated configuration.

    Raises:
        ConfigurationError: On unknown sections or keys, invalid values or bad overrides.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        msg = f"Malformed config: {e}"
        raise ConfigurationError(msg) from e

    raw: dict[str, Any] = {}
    for name in parser.sections():
        if name not in SECTIONS:
            msg = f"Unknown config section [{name}]; expected one of {sorted(SECTIONS)}"
            raise ConfigurationError(msg)
        raw[name] = _section_values(name, SECTIONS[name], dict(parser.items(name)))

    seeds = raw.setdefault("seeds", {})
    for override in seed_overrides:
        key, sep, value = override.partition("=")
        key = key.strip()
        if not sep or key not in SEED_NAMES:
            msg = f"Bad --seed-override {override!r}; expected NAME=INT with NAME in {SEED_NAMES}"
            raise ConfigurationError(msg)
        seeds[key] = value.strip()

    try:
        return PipelineConfig.model_validate(raw)
    except ValidationError as e:
        msg = f"Invalid pipeline config: {e}"
        raise ConfigurationError(msg) from e


def load_pipeline_config(path: Path | None, seed_overrides: Sequence[str] = ()) -> PipelineConfig:
    """Load the pipeline config from an INI file, or defaults when path is None.

    Raises:
        InputError: If the file does not exist.
        ConfigurationError: On invalid content.
    """
    if path is None:
        return parse_pipeline_config("", seed_overrides)
    if not path.is_file():
        msg = f"Config file not found: {path}"
        raise InputError(msg)
    config = parse_pipeline_config(path.read_text(encoding="utf-8"), seed_overrides)
    logger.info("config_loaded | path=%s digest=%s", path, config_digest(config)[:12])
    return config


def _canonical(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_digest(config: PipelineConfig) -> str:
    """SHA-256 over the canonical JSON dump; key order in the source file never matters."""
    return hashlib.sha256(_canonical(config.model_dump(mode="json")).encode()).hexdigest()


def stage_digest(config: PipelineConfig, *sections: str) -> str:
    """Digest of a subset of sections, recorded by artifacts that depend only on them.

    Raises:
        ConfigurationError: If a section name is unknown.
    """
    unknown = [s for s in sections if s not in SECTIONS]
    if unknown:
        msg = f"Unknown sections for digest: {unknown}"
        raise ConfigurationError(msg)
    dump = config.model_dump(mode="json")
    return hashlib.sha256(_canonical({s: dump[s] for s in sorted(sections)}).encode()).hexdigest()


def section_digest(section: BaseModel) -> str:
    """Digest of a single section model (used by generators called outside a PipelineConfig)."""
    return hashlib.sha256(_canonical(section.model_dump(mode="json")).encode()).hexdigest()
