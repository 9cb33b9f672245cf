"""Shared pytest fixtures for hybridlab tests.

Centralises the tiny configurations and toy objects that several test modules
need: a small pipeline config, a three-phone state inventory and a toy lexicon
with its bigram LM.
"""

from pathlib import Path
from typing import Any

import numpy as np
import pytest
from src.decoder.bigram import BigramLM, train_bigram
from src.decoder.lexicon import Lexicon
from src.state.inventory import StateInventory
from src.state.models import ManifestEntry, Split
from src.state.settings import DecodeSettings, PipelineConfig

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

TOY_PHONES = ("a", "b", "c")
TOY_WORDS = {"ab": ("a", "b"), "c": ("c",), "ca": ("c", "a")}
TOY_SENTENCES = [["ab", "c"], ["c", "ca"], ["ab"], ["ca", "ab", "c"]]


# ---------------------------------------------------------------------------
# Factory helpers (exposed as fixtures for convenience)
# ---------------------------------------------------------------------------


def tiny_config_data(work_dir: Path) -> dict[str, Any]:
    """Section dicts for a pipeline small enough to run end to end in seconds."""
    return {
        "corpus": {
            "transcribed_count": 8,
            "untranscribed_count": 6,
            "dev_count": 3,
            "eval_count": 3,
            "written_count": 30,
            "max_words": 2,
            "num_speakers": 2,
            "pure_nonspeech_min_frames": 20,
            "pure_nonspeech_max_frames": 40,
        },
        "frontend": {"num_mel": 8, "n_fft": 512},
        "model": {"num_blocks": 2, "hidden_per_direction": 4, "input_dim": 16, "dropout_rate": 0.0},
        "train": {"epochs": 1, "batch_size": 4, "chunk_core": 40, "chunk_context": 5, "augmentation": ""},
        "biapc": {"epochs": 1, "batch_size": 4, "augmentation": ""},
        "ssl": {
            "thresholds": [0.0],
            "transcribed_augmentation": [""],
            "untranscribed_augmentation": [""],
            "epochs": 1,
        },
        "rnnlm": {"layers": 1, "hidden": 8, "embedding": 8, "epochs": 1, "grid": [0.0, 0.5]},
        "decode": {"nbest": 3},
        "paths": {"work_dir": str(work_dir)},
    }


def make_tiny_config(work_dir: Path, **sections: dict[str, Any]) -> PipelineConfig:
    data = tiny_config_data(work_dir)
    for name, values in sections.items():
        data[name] = {**data.get(name, {}), **values}
    return PipelineConfig.model_validate(data)


def make_entry(uid: str, split: Split = Split.TRANSCRIBED, transcript: list[str] | None = None) -> ManifestEntry:
    return ManifestEntry(
        utterance_id=uid,
        audio_path=f"audio/{split}/{uid}.wav",
        transcript=transcript or [],
        alignment_path=f"align/{split}/{uid}.ali",
        split=split,
    )


def make_toy_lexicon() -> Lexicon:
    return Lexicon(pronunciations=dict(TOY_WORDS), inventory=StateInventory(phones=TOY_PHONES))


def make_toy_bigram(lexicon: Lexicon) -> BigramLM:
    return train_bigram(TOY_SENTENCES, lexicon.words, 0.5)


@pytest.fixture()
def tiny_config(tmp_path: Path) -> PipelineConfig:
    return make_tiny_config(tmp_path / "work")


@pytest.fixture()
def toy_inventory() -> StateInventory:
    return StateInventory(phones=TOY_PHONES)


@pytest.fixture()
def toy_lexicon() -> Lexicon:
    return make_toy_lexicon()


@pytest.fixture()
def toy_bigram(toy_lexicon: Lexicon) -> BigramLM:
    return make_toy_bigram(toy_lexicon)


@pytest.fixture()
def decode_settings() -> DecodeSettings:
    return DecodeSettings(nbest=5)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
