"""[corpus] section: phone recipes, the toy vocabulary and generator settings.

This module imports NOTHING from src/ except other state modules.
"""

from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class PhoneSpec(BaseModel):
    """Acoustic recipe of one synthetic phone: a sum of formant sinusoids over a noise floor."""

    model_config = ConfigDict(frozen=True)

    phone_id: str
    formants: list[tuple[float, float]] = Field(min_length=1, description="(frequency Hz, amplitude in [0,1])")
    noise_floor: float = Field(default=0.0, ge=0.0, le=1.0)
    mean_duration: float = Field(ge=3.0, description="Frames; at least one per HMM state")
    duration_jitter: float = Field(default=0.0, ge=0.0)

    @field_validator("formants")
    @classmethod
    def _amplitudes_in_range(cls, value: list[tuple[float, float]]) -> list[tuple[float, float]]:
        for freq, amp in value:
            if freq <= 0 or not 0.0 <= amp <= 1.0:
                msg = f"Formant ({freq}, {amp}) needs a positive frequency and an amplitude in [0, 1]"
                raise ValueError(msg)
        return value


def _phone(pid: str, formants: list[tuple[float, float]], noise: float, dur: float, jitter: float) -> PhoneSpec:
    return PhoneSpec(phone_id=pid, formants=formants, noise_floor=noise, mean_duration=dur, duration_jitter=jitter)


DEFAULT_PHONES: tuple[PhoneSpec, ...] = (
    _phone("a", [(800, 1.0), (1200, 0.6), (2500, 0.3)], 0.01, 9, 2),
    _phone("e", [(450, 1.0), (2000, 0.6), (2700, 0.3)], 0.01, 8, 2),
    _phone("i", [(300, 1.0), (2300, 0.6), (3000, 0.3)], 0.01, 8, 2),
    _phone("o", [(500, 1.0), (900, 0.6), (2400, 0.2)], 0.01, 9, 2),
    _phone("u", [(330, 1.0), (800, 0.5), (2200, 0.2)], 0.01, 8, 2),
    _phone("m", [(250, 0.8), (1100, 0.2), (2300, 0.1)], 0.01, 6, 1),
    _phone("n", [(280, 0.8), (1600, 0.25), (2600, 0.1)], 0.01, 6, 1),
    _phone("l", [(360, 0.7), (1300, 0.4), (2800, 0.2)], 0.01, 6, 1),
    _phone("r", [(450, 0.6), (1200, 0.5), (1600, 0.4)], 0.02, 6, 1),
    _phone("s", [(4500, 0.3), (6200, 0.4), (7200, 0.2)], 0.25, 7, 2),
    _phone("f", [(1500, 0.1), (3500, 0.2), (5500, 0.2)], 0.2, 7, 2),
    _phone("t", [(3000, 0.3), (4200, 0.3), (5200, 0.2)], 0.3, 4, 1),
    _phone("k", [(1800, 0.4), (2600, 0.3), (3600, 0.2)], 0.3, 4, 1),
)

DEFAULT_VOCABULARY: dict[str, list[str]] = {
    word: list(word)
    for word in (
        "mal nas tor kim lus fen rok sim nul mer kas tin "
        "fol rum les mo ka ti su ne lor fis ram tes"
    ).split()
}


class CorpusSettings(BaseModel):
    """[corpus] generator settings for the synthetic toy-language corpus."""

    sample_rate: int = Field(default=16000, gt=0)
    frame_length_ms: float = Field(default=25.0, gt=0)
    frame_shift_ms: float = Field(default=10.0, gt=0)
    phones: list[PhoneSpec] = Field(default_factory=lambda: list(DEFAULT_PHONES))
    vocabulary: dict[str, list[str]] = Field(default_factory=lambda: dict(DEFAULT_VOCABULARY))
    transcribed_count: int = Field(default=120, ge=0)
    untranscribed_count: int = Field(default=200, ge=0)
    dev_count: int = Field(default=40, ge=0)
    eval_count: int = Field(default=40, ge=0)
    written_count: int = Field(default=400, ge=0, description="Sentences of written text for the LM")
    nonspeech_fraction: float = Field(default=211 / 1445, ge=0.0, lt=1.0)
    target_ratio: float = Field(default=2.2, description="Non-speech to speech total-frame ratio")
    min_words: int = Field(default=1, ge=1)
    max_words: int = Field(default=4, ge=1)
    num_speakers: int = Field(default=8, ge=1)
    speaker_scale_low: float = Field(default=0.92, gt=0)
    speaker_scale_high: float = Field(default=1.08, gt=0)
    pure_nonspeech_min_frames: int = Field(default=80, ge=1)
    pure_nonspeech_max_frames: int = Field(default=240, ge=1)
    speech_level: float = Field(default=0.3, gt=0.0, le=1.0)
    silence_level: float = Field(default=0.01, ge=0.0, le=1.0)
    hesitation_level: float = Field(default=0.08, ge=0.0, le=1.0)
    babble_level: float = Field(default=0.05, ge=0.0, le=1.0)
    hesitation_hz: float = Field(default=150.0, gt=0)
    successor_mass: float = Field(default=0.8, ge=0.0, le=1.0, description="Grammar mass on preferred successors")

    @field_validator("phones", mode="before")
    @classmethod
    def _phones_by_name(cls, value: Any) -> Any:
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        if isinstance(value, list) and value and all(isinstance(v, str) for v in value):
            table = {p.phone_id: p for p in DEFAULT_PHONES}
            unknown = [v for v in value if v not in table]
            if unknown:
                msg = f"Unknown phone names {unknown}; known: {sorted(table)}"
                raise ValueError(msg)
            return [table[v] for v in value]
        return value

    @field_validator("vocabulary", mode="before")
    @classmethod
    def _vocabulary_from_text(cls, value: Any) -> Any:
        # "word:p1 p2 p3, word2:p1 p2"
        if isinstance(value, str | list) and not isinstance(value, dict):
            items = value.split(",") if isinstance(value, str) else value
            parsed: dict[str, list[str]] = {}
            for item in items:
                word, sep, phones = str(item).partition(":")
                if not sep or not word.strip() or not phones.split():
                    msg = f"Vocabulary item {item!r} must look like 'word:p1 p2 ...'"
                    raise ValueError(msg)
                parsed[word.strip()] = phones.split()
            return parsed
        return value

    @model_validator(mode="after")
    def _ranges(self) -> "CorpusSettings":
        if self.max_words < self.min_words:
            msg = f"max_words ({self.max_words}) < min_words ({self.min_words})"
            raise ValueError(msg)
        if self.pure_nonspeech_max_frames < self.pure_nonspeech_min_frames:
            msg = "pure_nonspeech_max_frames < pure_nonspeech_min_frames"
            raise ValueError(msg)
        return self

    @property
    def window_samples(self) -> int:
        return round(self.sample_rate * self.frame_length_ms / 1000)

    @property
    def shift_samples(self) -> int:
        return round(self.sample_rate * self.frame_shift_ms / 1000)

