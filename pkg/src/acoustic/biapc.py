"""Bidirectional autoregressive predictive coding (Bi-APC) pretraining.

The trunk runs in split mode so the forward path only ever sees past frames and
the backward path only future frames. A linear head per direction regresses
the paired feature frame n steps ahead (forward) or n steps back (backward);
the objective is the sum of the two mean absolute errors.
This module imports from nnet, frontend and state — NEVER from stages/ or semisup/.
"""

import logging
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.acoustic.model import TRUNK_PREFIX, AcousticModel, init_acoustic
from src.config import DTYPE
from src.frontend.augment import apply_augmentation, parse_augmentation_spec
from src.frontend.store import FeatureStore
from src.nnet.autodiff import Tensor, absolute, getitem, linear, mean
from src.nnet.layers import blstm_forward, init_blstm, pad_batch
from src.nnet.optim import OptimizerState, sgd_step
from src.nnet.params import ParameterSet, copy_matching, init_linear
from src.state.errors import ConfigurationError, ContractError, InputError, NumericError
from src.state.models import LossLogRow, ManifestEntry
from src.state.reports import append_loss_log
from src.state.settings import BiApcConfig, BlstmStackConfig, FrontendSettings

logger = logging.getLogger(__name__)

STAGE = "biapc"
HEAD_PREFIX = "apc."


@dataclass(frozen=True)
class BiApcBatch:
    """Input frames and the exact slices each direction must predict."""

    features: np.ndarray
    forward_targets: np.ndarray
    backward_targets: np.ndarray
    n: int


@dataclass
class PretrainResult:
    params: ParameterSet
    losses: list[float] = field(default_factory=list)


def biapc_targets(features: np.ndarray, n: int) -> BiApcBatch:
    """Forward position t predicts x[t+n]; backward position t predicts x[t-n] (0-based).

    Raises:
        InputError: If the sequence has no more than n frames.
    """
    T = features.shape[0]
    if T <= n:
        msg = f"Sequence of {T} frames is too short for prediction offset n={n}"
        raise InputError(msg)
    return BiApcBatch(features=features, forward_targets=features[n:], backward_targets=features[: T - n], n=n)


def init_biapc(config: BlstmStackConfig, seed: int) -> ParameterSet:
    """Split-mode trunk plus one regression head per direction."""
    trunk = init_blstm(config, np.random.default_rng([seed, 0]))
    rng = np.random.default_rng([seed, 2])
    heads = {
        **init_linear(rng, f"{HEAD_PREFIX}fwd", config.hidden_per_direction, config.input_dim),
        **init_linear(rng, f"{HEAD_PREFIX}bwd", config.hidden_per_direction, config.input_dim),
    }
    return ParameterSet(params={**trunk.params, **heads}, buffers=dict(trunk.buffers), tag=STAGE)


def _prediction_masks(lengths: np.ndarray, num_frames: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    t = np.arange(num_frames)[:, None]
    return t < (lengths[None, :] - n), (t >= n) & (t < lengths[None, :])


def predict(
    leaves: Mapping[str, Tensor],
    buffers: Mapping[str, np.ndarray],
    x: np.ndarray,
    lengths: np.ndarray,
    config: BlstmStackConfig,
    n: int,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor, dict[str, np.ndarray]]:
    """Batched predictions: forward (N_f, D) and backward (N_b, D), in time-major order."""
    H = config.hidden_per_direction
    trunk = blstm_forward(leaves, buffers, Tensor(x), lengths, config, train=train, rng=rng, split=True)
    fwd_mask, bwd_mask = _prediction_masks(lengths, x.shape[0], n)
    fi, bi = np.nonzero(fwd_mask), np.nonzero(bwd_mask)
    fwd_hidden = getitem(trunk.activations, (fi[0], fi[1], slice(0, H)))
    bwd_hidden = getitem(trunk.activations, (bi[0], bi[1], slice(H, 2 * H)))
    fwd = linear(fwd_hidden, leaves[f"{HEAD_PREFIX}fwd.w"], leaves[f"{HEAD_PREFIX}fwd.b"])
    bwd = linear(bwd_hidden, leaves[f"{HEAD_PREFIX}bwd.w"], leaves[f"{HEAD_PREFIX}bwd.b"])
    return fwd, bwd, trunk.buffer_updates


def batch_targets(x: np.ndarray, lengths: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    fwd_mask, bwd_mask = _prediction_masks(lengths, x.shape[0], n)
    fi, bi = np.nonzero(fwd_mask), np.nonzero(bwd_mask)
    return x[fi[0] + n, fi[1]], x[bi[0] - n, bi[1]]


def biapc_forward(
    params: ParameterSet, features: np.ndarray, config: BlstmStackConfig, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode (T-n, D) forward-path and backward-path predictions for one sequence.

    Raises:
        ContractError: On a feature dimension mismatch or missing regression heads.
        InputError: If the sequence is not longer than n.
    """
    if f"{HEAD_PREFIX}fwd.w" not in params.params:
        msg = "Parameter set has no Bi-APC regression heads"
        raise ContractError(msg)
    biapc_targets(features, n)
    leaves = {k: Tensor(v) for k, v in params.params.items()}
    fwd, bwd, _ = predict(leaves, params.buffers, features[:, None, :], np.array([features.shape[0]]), config, n)
    return fwd.value, bwd.value


def biapc_loss(forward: Tensor, backward: Tensor, forward_targets: np.ndarray, backward_targets: np.ndarray) -> Tensor:
    """MAE(forward) + MAE(backward), each averaged over elements."""
    if forward.shape != forward_targets.shape or backward.shape != backward_targets.shape:
        msg = (
            f"Prediction shapes {forward.shape}/{backward.shape} do not match targets "
            f"{forward_targets.shape}/{backward_targets.shape}"
        )
        raise ContractError(msg)
    return mean(absolute(forward - Tensor(forward_targets))) + mean(absolute(backward - Tensor(backward_targets)))


def pretrain(
    entries: Sequence[ManifestEntry],
    store: FeatureStore,
    model_config: BlstmStackConfig,
    config: BiApcConfig,
    frontend: FrontendSettings,
    seed: int,
    *,
    augmentation_seed: int = 0,
    loss_log: Path | None = None,
) -> PretrainResult:
    """Pretrain the split trunk on (augmented) untranscribed utterances.

    Raises:
        ConfigurationError: If the manifest is empty.
    """
    if not entries:
        msg = "Bi-APC pretraining needs at least one untranscribed utterance"
        raise ConfigurationError(msg)
    spec = parse_augmentation_spec(config.augmentation, frontend)
    augmented = apply_augmentation(entries, spec, (), augmentation_seed, frontend)
    dtype = np.dtype(DTYPE)
    sequences = []
    for entry in augmented:
        frames = store.features(entry).frames.astype(dtype)
        if frames.shape[0] > config.n:
            sequences.append(frames)
        else:
            logger.warning("biapc_skip | entry=%s frames=%d n=%d", entry.entry_id, frames.shape[0], config.n)
    if not sequences:
        msg = "Every untranscribed utterance is too short for Bi-APC"
        raise ConfigurationError(msg)
    params = init_biapc(model_config, seed).astype(dtype)
    optimizer = OptimizerState(learning_rate=config.learning_rate, momentum=config.momentum, clip_norm=config.clip_norm)
    result = PretrainResult(params=params)
    for epoch in range(config.epochs):
        started = time.monotonic()
        order = np.random.default_rng([seed, 1, epoch]).permutation(len(sequences))
        losses: list[float] = []
        for start in range(0, len(order), config.batch_size):
            x, lengths = pad_batch([sequences[i] for i in order[start : start + config.batch_size]])
            leaves = params.leaves()
            rng = np.random.default_rng([seed, 3, epoch, start])
            fwd, bwd, updates = predict(
                leaves, params.buffers, x, lengths, model_config, config.n, train=True, rng=rng
            )
            loss = biapc_loss(fwd, bwd, *batch_targets(x, lengths, config.n))
            try:
                if not np.isfinite(loss.value):
                    msg = f"Non-finite Bi-APC loss at epoch {epoch}"
                    raise NumericError(msg)
                loss.backward()
                grads = {k: t.grad if t.grad is not None else np.zeros_like(t.value) for k, t in leaves.items()}
                new, optimizer = sgd_step(params.params, grads, optimizer)
            except NumericError as exc:
                logger.warning("step_skipped | stage=%s epoch=%d reason=%s", STAGE, epoch, exc)
                continue
            params = params.with_params(new).with_buffers(updates)
            losses.append(float(loss.value))
        epoch_loss = float(np.mean(losses)) if losses else float("nan")
        result.losses.append(epoch_loss)
        if loss_log is not None:
            row = LossLogRow(stage=STAGE, epoch=epoch, utterance_id="*epoch*", frames=0, total=epoch_loss)
            append_loss_log(loss_log, [row])
        logger.info(
            "epoch_complete | stage=%s epoch=%d mean_loss=%.4f seconds=%.1f",
            STAGE,
            epoch,
            epoch_loss,
            time.monotonic() - started,
        )
    result.params = params
    return result


def transfer(pretrained: ParameterSet, model: AcousticModel, seed: int) -> ParameterSet:
    """Copy every trunk tensor (weights and batch-norm statistics) into a fresh supervised model.

    Regression heads are dropped; output heads and priors come from a fresh initialization.

    Raises:
        ConfigurationError: Naming the first tensor whose shape does not match.
    """
    target = init_acoustic(model, seed)
    initialized = copy_matching(pretrained.without([HEAD_PREFIX]), target, [TRUNK_PREFIX])
    logger.info("biapc_transfer | tensors=%d", len(pretrained.subset([TRUNK_PREFIX]).params))
    return initialized.with_tag(f"{model.loss}+biapc")
