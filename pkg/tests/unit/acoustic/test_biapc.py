"""Tests for src/acoustic/biapc.py."""

import csv
from collections.abc import Callable, Mapping
from pathlib import Path
from unittest.mock import MagicMock

import numpy as np
import pytest
from src.acoustic.biapc import (
    HEAD_PREFIX,
    batch_targets,
    biapc_forward,
    biapc_loss,
    biapc_targets,
    init_biapc,
    predict,
    pretrain,
    transfer,
)
from src.acoustic.model import AcousticModel, init_acoustic
from src.frontend.features import FeatureSequence
from src.nnet.autodiff import Tensor
from src.nnet.gradcheck import grad_check
from src.nnet.layers import pad_batch
from src.nnet.params import ParameterSet
from src.state.errors import ConfigurationError, ContractError, InputError
from src.state.inventory import StateInventory
from src.state.models import LossType
from src.state.settings import BiApcConfig, FrontendSettings, ModelSettings

from tests.conftest import make_entry

CONFIG = ModelSettings(num_blocks=2, hidden_per_direction=3, input_dim=4, dropout_rate=0.0)


@pytest.mark.unit
class TestTargets:
    def test_slices(self) -> None:
        x = np.arange(12.0).reshape(6, 2)
        batch = biapc_targets(x, 2)
        np.testing.assert_array_equal(batch.forward_targets, x[2:])
        np.testing.assert_array_equal(batch.backward_targets, x[:4])

    def test_forward_first_target_is_third_frame(self) -> None:
        x = np.arange(5.0)[:, None]
        assert biapc_targets(x, 2).forward_targets[0, 0] == 2.0

    @pytest.mark.parametrize("frames", [1, 2])
    def test_too_short(self, frames: int) -> None:
        with pytest.raises(InputError, match="too short"):
            biapc_targets(np.zeros((frames, 3)), 2)


def _train_predictions(params: ParameterSet, features: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([features.shape[0]])
    fwd, bwd, _ = predict(params.leaves(), params.buffers, features[:, None, :], lengths, CONFIG, n, train=True)
    return fwd.value, bwd.value


PREDICTORS: dict[str, Callable[[ParameterSet, np.ndarray, int], tuple[np.ndarray, np.ndarray]]] = {
    "eval": lambda params, features, n: biapc_forward(params, features, CONFIG, n),
    "train": _train_predictions,
}


@pytest.mark.unit
class TestBiapcForward:
    def test_output_shapes(self, rng: np.random.Generator) -> None:
        fwd, bwd = biapc_forward(init_biapc(CONFIG, 0), rng.normal(size=(9, 4)), CONFIG, 2)
        assert fwd.shape == (7, 4)
        assert bwd.shape == (7, 4)

    @pytest.mark.parametrize("mode", list(PREDICTORS))
    def test_paths_see_one_side_only(self, mode: str) -> None:
        paths = PREDICTORS[mode]
        rng = np.random.default_rng(12)
        params = init_biapc(CONFIG, 0).with_buffers({"block1.bn.running_var": np.full(6, 2.0)})
        for _ in range(50):
            n = int(rng.integers(1, 4))
            T = int(rng.integers(n + 1, 31))
            p = int(rng.integers(0, T))
            x = rng.normal(size=(T, 4))
            changed = x.copy()
            changed[p] += 3.0 * rng.normal(size=4)
            fwd_a, bwd_a = paths(params, x, n)
            fwd_b, bwd_b = paths(params, changed, n)
            # Forward row k predicts from position k and sees frames 0..k.
            assert np.array_equal(fwd_a[:p], fwd_b[:p])
            # Backward row k predicts from position k + n and sees frames k + n onwards.
            first = max(p - n + 1, 0)
            assert np.array_equal(bwd_a[first:], bwd_b[first:])
            if p < T - n:
                assert not np.array_equal(fwd_a[p], fwd_b[p])
            if p >= n:
                assert not np.array_equal(bwd_a[p - n], bwd_b[p - n])

    def test_train_mode_updates_running_statistics(self, rng: np.random.Generator) -> None:
        params = init_biapc(CONFIG, 0)
        x, lengths = pad_batch([rng.normal(size=(8, 4)), rng.normal(size=(6, 4))])
        _, _, updates = predict(params.leaves(), params.buffers, x, lengths, CONFIG, 2, train=True)
        assert set(updates) == {f"block{b}.bn.running_{s}" for b in (0, 1) for s in ("mean", "var")}
        assert not np.array_equal(updates["block0.bn.running_mean"], params.buffers["block0.bn.running_mean"])

    def test_needs_regression_heads(self, toy_inventory: StateInventory, rng: np.random.Generator) -> None:
        params = init_acoustic(AcousticModel(CONFIG, LossType.NSDL, toy_inventory), 0)
        with pytest.raises(ContractError, match="regression heads"):
            biapc_forward(params, rng.normal(size=(9, 4)), CONFIG, 2)


@pytest.mark.unit
class TestBiapcLoss:
    def test_sum_of_two_maes(self) -> None:
        fwd = Tensor(np.array([[1.0, 2.0]]))
        bwd = Tensor(np.array([[0.0, 0.0], [1.0, 1.0]]))
        loss = biapc_loss(fwd, bwd, np.array([[0.0, 0.0]]), np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert float(loss.value) == pytest.approx(1.5 + 0.5)

    def test_worked_example(self) -> None:
        target = np.array([[2.0, 4.0]])
        loss = biapc_loss(Tensor(np.array([[1.0, 2.0]])), Tensor(target.copy()), target, target)
        assert float(loss.value) == pytest.approx(1.5)

    def test_shape_mismatch(self) -> None:
        with pytest.raises(ContractError, match="Prediction shapes"):
            biapc_loss(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 2))), np.zeros((3, 2)), np.zeros((2, 2)))

    def test_gradients_through_split_trunk(self) -> None:
        rng = np.random.default_rng(4)
        params = init_biapc(CONFIG, 2)
        x, lengths = pad_batch([rng.normal(size=(7, 4)), rng.normal(size=(5, 4))])
        fwd_targets, bwd_targets = batch_targets(x, lengths, 2)
        # Offset targets keep every residual away from the kink of |r|.
        fwd_targets, bwd_targets = fwd_targets + 10.0, bwd_targets - 10.0

        def loss(leaves: Mapping[str, Tensor]) -> Tensor:
            fwd, bwd, _ = predict(leaves, params.buffers, x, lengths, CONFIG, 2, train=True)
            return biapc_loss(fwd, bwd, fwd_targets, bwd_targets)

        report = grad_check(loss, params.params, probes=200, step=1e-3, tolerance=1e-4)
        assert report.passed, report.failures


def _store(frames: dict[str, np.ndarray]) -> MagicMock:
    store = MagicMock()
    store.features.side_effect = lambda entry: FeatureSequence(frames[entry.source.utterance_id])
    return store


@pytest.mark.unit
class TestPretrain:
    def test_loss_decreases(self, tmp_path: Path) -> None:
        rng = np.random.default_rng(5)
        base = np.sin(np.linspace(0, 6, 30))[:, None] * np.ones((1, 4))
        frames = {f"u{i}": base + 0.01 * rng.normal(size=base.shape) for i in range(4)}
        entries = [make_entry(uid) for uid in frames]
        settings = BiApcConfig(epochs=6, batch_size=2, augmentation="", learning_rate=0.05)
        log = tmp_path / "loss.csv"
        result = pretrain(entries, _store(frames), CONFIG, settings, FrontendSettings(), 1, loss_log=log)
        assert len(result.losses) == 6
        assert min(result.losses[1:]) < result.losses[0]
        with log.open(newline="", encoding="utf-8") as fh:
            assert [int(row["epoch"]) for row in csv.DictReader(fh)] == list(range(6))

    def test_short_sequences_skipped(self) -> None:
        frames = {"long": np.ones((8, 4)), "short": np.ones((2, 4))}
        entries = [make_entry(uid) for uid in frames]
        settings = BiApcConfig(epochs=1, augmentation="")
        result = pretrain(entries, _store(frames), CONFIG, settings, FrontendSettings(), 1)
        assert len(result.losses) == 1

    def test_all_short(self) -> None:
        frames = {"short": np.ones((2, 4))}
        with pytest.raises(ConfigurationError, match="too short"):
            pretrain([make_entry("short")], _store(frames), CONFIG, BiApcConfig(augmentation=""), FrontendSettings(), 1)

    def test_empty_manifest(self) -> None:
        with pytest.raises(ConfigurationError, match="at least one"):
            pretrain([], _store({}), CONFIG, BiApcConfig(), FrontendSettings(), 1)


@pytest.mark.unit
class TestTransfer:
    def test_copies_trunk_and_drops_heads(self, toy_inventory: StateInventory) -> None:
        pretrained = init_biapc(CONFIG, 3)
        pretrained = pretrained.with_buffers({"block0.bn.running_mean": np.full(6, 0.25)})
        model = AcousticModel(CONFIG, LossType.NSDL, toy_inventory)
        out = transfer(pretrained, model, 9)
        for name, value in pretrained.params.items():
            if name.startswith("block"):
                np.testing.assert_array_equal(out.params[name], value)
        np.testing.assert_array_equal(out.buffers["block0.bn.running_mean"], np.full(6, 0.25))
        assert not any(k.startswith(HEAD_PREFIX) for k in out.params)
        fresh = init_acoustic(model, 9)
        np.testing.assert_array_equal(out.params["head1.w"], fresh.params["head1.w"])
        assert out.tag == "nsdl+biapc"

    def test_shape_mismatch_named(self, toy_inventory: StateInventory) -> None:
        pretrained = init_biapc(CONFIG, 3)
        wider = ModelSettings(num_blocks=2, hidden_per_direction=5, input_dim=4)
        with pytest.raises(ConfigurationError, match="block0"):
            transfer(pretrained, AcousticModel(wider, LossType.CE, toy_inventory), 9)
