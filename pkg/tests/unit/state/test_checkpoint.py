"""Tests for src/state/checkpoint.py."""

from pathlib import Path

import numpy as np
import pytest
from src.state.checkpoint import MAGIC, Checkpoint, load_checkpoint, save_checkpoint
from src.state.errors import ContractError, InputError, UsageError


def _checkpoint() -> Checkpoint:
    return Checkpoint(
        stage="nsdl-random",
        digest="d" * 64,
        params={"block0.fwd.w_ih": np.arange(12.0).reshape(3, 4), "head.b": np.ones(5, dtype=np.float32)},
        buffers={"bn0.mean": np.zeros(4), "steps": np.array([3], dtype=np.int64)},
        optimizer={"v.head.b": np.full(5, 0.5)},
        metadata={"loss": "nsdl", "digest_sections": ["corpus", "model"]},
    )


@pytest.mark.unit
class TestCheckpointFiles:
    def test_save_then_load(self, tmp_path: Path) -> None:
        path = tmp_path / "models" / "a.ckpt"
        save_checkpoint(path, _checkpoint())
        loaded = load_checkpoint(path)
        original = _checkpoint()
        assert loaded.stage == original.stage
        assert loaded.digest == original.digest
        assert loaded.metadata == original.metadata
        for group in ("params", "buffers", "optimizer"):
            ours, theirs = getattr(loaded, group), getattr(original, group)
            assert sorted(ours) == sorted(theirs)
            for name, value in theirs.items():
                np.testing.assert_array_equal(ours[name], value)
                assert ours[name].dtype == value.dtype

    def test_file_starts_with_magic(self, tmp_path: Path) -> None:
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, _checkpoint())
        assert path.read_bytes()[:4] == MAGIC

    def test_refuses_overwrite_without_force(self, tmp_path: Path) -> None:
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, _checkpoint())
        with pytest.raises(UsageError, match="Refusing to overwrite"):
            save_checkpoint(path, _checkpoint(), force=False)

    def test_stage_mismatch(self, tmp_path: Path) -> None:
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, _checkpoint())
        with pytest.raises(ContractError, match="expected 'biapc'"):
            load_checkpoint(path, stage="biapc")

    def test_stale_digest(self, tmp_path: Path) -> None:
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, _checkpoint())
        with pytest.raises(ContractError, match="Stale checkpoint"):
            load_checkpoint(path, digest="e" * 64)

    def test_missing(self, tmp_path: Path) -> None:
        with pytest.raises(InputError, match="Checkpoint not found"):
            load_checkpoint(tmp_path / "none.ckpt")

    def test_not_a_checkpoint(self, tmp_path: Path) -> None:
        path = tmp_path / "a.ckpt"
        path.write_bytes(b"RIFF0000")
        with pytest.raises(InputError, match="Not a hybridlab checkpoint"):
            load_checkpoint(path)

    def test_truncated(self, tmp_path: Path) -> None:
        path = tmp_path / "a.ckpt"
        save_checkpoint(path, _checkpoint())
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(InputError, match="Truncated"):
            load_checkpoint(path)

    def test_unsupported_dtype(self, tmp_path: Path) -> None:
        ckpt = Checkpoint(stage="x", digest="", params={"flags": np.array([True, False])})
        with pytest.raises(ContractError, match="Unsupported checkpoint dtype"):
            save_checkpoint(tmp_path / "a.ckpt", ckpt)
