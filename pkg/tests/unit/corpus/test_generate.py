"""Tests for src/corpus/generate.py."""

from pathlib import Path

import numpy as np
import pytest
from src.corpus.generate import (
    WRITTEN_TEXT_NAME,
    alignment_stats,
    check_corpus_settings,
    corpus_digest,
    corpus_stats,
    generate_corpus,
    generate_utterances,
    split_nonspeech_utterances,
    written_sentences,
)
from src.state.corpus_settings import CorpusSettings
from src.state.errors import ConfigurationError
from src.state.manifest import MANIFEST_NAME, read_manifest
from src.state.models import CorpusManifest, Split

from tests.conftest import make_entry


def _small(**overrides: object) -> CorpusSettings:
    values: dict[str, object] = {
        "transcribed_count": 8,
        "untranscribed_count": 4,
        "dev_count": 2,
        "eval_count": 2,
        "written_count": 10,
        "max_words": 2,
        "num_speakers": 2,
        "pure_nonspeech_min_frames": 20,
        "pure_nonspeech_max_frames": 40,
    }
    values.update(overrides)
    return CorpusSettings.model_validate(values)


@pytest.mark.unit
class TestCheckCorpusSettings:
    def test_defaults_pass(self) -> None:
        check_corpus_settings(CorpusSettings())

    def test_small_vocabulary(self) -> None:
        with pytest.raises(ConfigurationError, match="Vocabulary needs at least"):
            check_corpus_settings(_small(vocabulary={"ma": ["m", "a"]}))

    def test_small_phone_set(self) -> None:
        with pytest.raises(ConfigurationError, match="Phone set needs at least"):
            check_corpus_settings(_small(phones="a, e, i"))

    def test_unknown_phone_in_vocabulary(self) -> None:
        vocabulary = {f"w{i}": ["a"] for i in range(20)} | {"zed": ["z"]}
        with pytest.raises(ConfigurationError, match="unknown phones"):
            check_corpus_settings(_small(vocabulary=vocabulary))

    def test_empty_split(self) -> None:
        with pytest.raises(ConfigurationError, match="at least one utterance"):
            check_corpus_settings(_small(dev_count=0))

    def test_negative_ratio(self) -> None:
        with pytest.raises(ConfigurationError, match="target_ratio"):
            check_corpus_settings(_small(target_ratio=-1.0))


@pytest.mark.unit
class TestGenerateUtterances:
    def test_split_counts_and_pure_nonspeech(self) -> None:
        settings = _small(nonspeech_fraction=0.25)
        utterances = generate_utterances(settings, 7)
        by_split = {s: [u for split, u in utterances if split == s] for s in Split}
        assert [len(by_split[s]) for s in Split] == [8, 4, 2, 2]
        assert sum(1 for u in by_split[Split.TRANSCRIBED] if not u.transcript) == 2
        assert all(u.transcript for s in (Split.DEV, Split.EVAL) for u in by_split[s])

    def test_ratio_close_to_target(self) -> None:
        settings = _small(transcribed_count=70, untranscribed_count=26, nonspeech_fraction=0.0, target_ratio=1.5)
        utterances = generate_utterances(settings, 3)
        assert len(utterances) == 100
        stats = alignment_stats([u.true_alignment for _, u in utterances], 3)
        assert stats.ratio == pytest.approx(1.5, rel=0.05)

    def test_deterministic(self) -> None:
        a = generate_utterances(_small(), 11)
        b = generate_utterances(_small(), 11)
        for (_, ua), (_, ub) in zip(a, b, strict=True):
            assert ua.utterance_id == ub.utterance_id
            np.testing.assert_array_equal(ua.waveform.samples, ub.waveform.samples)


@pytest.mark.unit
class TestGenerateCorpus:
    def test_files_written(self, tmp_path: Path) -> None:
        manifest = generate_corpus(_small(), 5, tmp_path)
        assert read_manifest(tmp_path / MANIFEST_NAME) == manifest
        assert len((tmp_path / WRITTEN_TEXT_NAME).read_text(encoding="utf-8").splitlines()) == 10
        for entry in manifest.entries:
            assert (tmp_path / entry.audio_path).is_file()
            assert (tmp_path / entry.alignment_path).is_file()
        assert all(not e.transcript for e in manifest.split(Split.UNTRANSCRIBED))

    def test_two_directories_identical(self, tmp_path: Path) -> None:
        generate_corpus(_small(), 5, tmp_path / "a")
        generate_corpus(_small(), 5, tmp_path / "b")
        a_manifest = (tmp_path / "a" / MANIFEST_NAME).read_bytes()
        assert a_manifest == (tmp_path / "b" / MANIFEST_NAME).read_bytes()
        for entry in read_manifest(tmp_path / "a" / MANIFEST_NAME).entries:
            assert (tmp_path / "a" / entry.audio_path).read_bytes() == (tmp_path / "b" / entry.audio_path).read_bytes()

    def test_corpus_stats_from_disk(self, tmp_path: Path) -> None:
        settings = _small()
        manifest = generate_corpus(settings, 5, tmp_path)
        stats = corpus_stats(manifest, tmp_path, settings)
        assert stats.utterances == len(manifest.entries)
        assert stats.speech.total > 0

    def test_digest_tracks_seed_and_settings(self) -> None:
        assert corpus_digest(_small(), 1) == corpus_digest(_small(), 1)
        assert corpus_digest(_small(), 1) != corpus_digest(_small(), 2)
        assert corpus_digest(_small(), 1) != corpus_digest(_small(dev_count=3), 1)

    def test_written_sentences_deterministic(self) -> None:
        assert written_sentences(_small(), 4) == written_sentences(_small(), 4)


@pytest.mark.unit
class TestAlignmentStats:
    def test_population_std(self) -> None:
        alignments = [np.array([0, 0, 3, 4]), np.array([1, 5, 5, 5, 5, 2])]
        stats = alignment_stats(alignments, 3)
        assert stats.nonspeech.total == 4
        assert stats.nonspeech.mean == 2.0
        assert stats.nonspeech.std == 0.0
        assert stats.speech.total == 6
        assert stats.speech.std == pytest.approx(1.0)

    def test_empty(self) -> None:
        stats = alignment_stats([], 3)
        assert stats.utterances == 0
        assert stats.speech.total == 0


@pytest.mark.unit
class TestSplitNonspeech:
    def test_moves_only_empty_transcribed(self) -> None:
        manifest = CorpusManifest(
            entries=[
                make_entry("u1", Split.TRANSCRIBED, ["mal"]),
                make_entry("u2", Split.TRANSCRIBED),
                make_entry("u3", Split.UNTRANSCRIBED),
                make_entry("u4", Split.TRANSCRIBED),
            ],
            seed=0,
            digest="",
        )
        kept, pool = split_nonspeech_utterances(manifest)
        assert [e.utterance_id for e in pool] == ["u2", "u4"]
        assert [e.utterance_id for e in kept.entries] == ["u1", "u3"]
        assert kept.seed == manifest.seed
