"""Supervised frame-level training of the acoustic model.

Training instances are either whole utterances or chunks (core plus context
frames); only core frames contribute to the loss. Each minibatch loss is the
summed NSDL (or CE) loss divided by the number of loss-eligible frames.
This module imports from nnet, frontend and state — NEVER from stages/ or semisup/.
"""

import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.acoustic.model import PRIOR_NAME, AcousticModel, estimate_priors, head_loss, select_frames
from src.config import DTYPE
from src.frontend.chunking import ChunkSpec, chunk_ranges, whole_sequence
from src.frontend.store import FeatureStore
from src.nnet.autodiff import Tensor
from src.nnet.layers import blstm_forward, pad_batch
from src.nnet.optim import OptimizerState, sgd_step
from src.nnet.params import ParameterSet
from src.state.errors import ConfigurationError, NumericError
from src.state.models import AugmentedEntry, LossLogRow
from src.state.reports import append_loss_log
from src.state.settings import NsdlLossConfig, TrainSettings

logger = logging.getLogger(__name__)

EpochHook = Callable[[int, ParameterSet], float | None]


@dataclass(frozen=True)
class Instance:
    """One training sequence: a chunk (or whole utterance) of features with frame labels."""

    entry_id: str
    features: np.ndarray
    labels: np.ndarray
    loss_mask: np.ndarray

    @property
    def eligible_frames(self) -> int:
        return int(self.loss_mask.sum())


@dataclass
class TrainResult:
    params: ParameterSet
    optimizer: OptimizerState
    epoch_losses: list[float] = field(default_factory=list)
    dev_wers: list[float | None] = field(default_factory=list)
    skipped_steps: int = 0


def build_instances(
    entries: Sequence[AugmentedEntry], store: FeatureStore, settings: TrainSettings
) -> list[Instance]:
    """Realize features and labels and cut them into chunks (or keep them whole)."""
    spec = ChunkSpec(core_length=settings.chunk_core, context_length=settings.chunk_context)
    dtype = np.dtype(DTYPE)
    instances: list[Instance] = []
    for entry in entries:
        frames = store.features(entry).frames.astype(dtype)
        labels = store.labels(entry, frames.shape[0])
        pieces = (
            chunk_ranges(frames.shape[0], spec, entry.entry_id)
            if settings.chunked
            else [whole_sequence(frames.shape[0], entry.entry_id)]
        )
        for chunk in pieces:
            instances.append(
                Instance(
                    entry_id=entry.entry_id,
                    features=frames[chunk.start : chunk.end],
                    labels=labels[chunk.start : chunk.end],
                    loss_mask=chunk.loss_mask(),
                )
            )
    return instances


def _batch_labels(batch: Sequence[Instance], num_frames: int) -> tuple[np.ndarray, np.ndarray]:
    labels = np.zeros((num_frames, len(batch)), dtype=np.int64)
    mask = np.zeros((num_frames, len(batch)), dtype=bool)
    for b, inst in enumerate(batch):
        labels[: inst.labels.shape[0], b] = inst.labels
        mask[: inst.loss_mask.shape[0], b] = inst.loss_mask
    return labels, mask


def _log_rows(
    stage: str,
    epoch: int,
    batch: Sequence[Instance],
    columns: np.ndarray,
    frame_l1: np.ndarray,
    frame_l2: np.ndarray,
    task_ratio: float,
) -> list[LossLogRow]:
    n = len(batch)
    frames = np.bincount(columns, minlength=n)
    l1 = np.bincount(columns, weights=frame_l1, minlength=n)
    l2 = np.bincount(columns, weights=frame_l2, minlength=n)
    return [
        LossLogRow(
            stage=stage,
            epoch=epoch,
            utterance_id=inst.entry_id,
            frames=int(frames[b]),
            l1=float(l1[b]),
            l2=float(l2[b]),
            total=float(l1[b] + task_ratio * l2[b]),
        )
        for b, inst in enumerate(batch)
    ]


def train_step(
    model: AcousticModel,
    params: ParameterSet,
    optimizer: OptimizerState,
    batch: Sequence[Instance],
    nsdl: NsdlLossConfig,
    rng: np.random.Generator,
) -> tuple[ParameterSet, OptimizerState, float, np.ndarray, np.ndarray, np.ndarray]:
    """One forward/backward/update on a minibatch.

    Returns:
        Updated parameters and optimizer state, the per-frame mean loss, and the
        batch column plus L1/L2 terms of every loss-eligible frame.

    Raises:
        NumericError: On a non-finite activation, loss or gradient (nothing is updated).
    """
    x, lengths = pad_batch([inst.features for inst in batch])
    labels, mask = _batch_labels(batch, x.shape[0])
    leaves = params.leaves()
    trunk = blstm_forward(leaves, params.buffers, Tensor(x), lengths, model.config, train=True, rng=rng)
    index = np.nonzero(mask)
    breakdown = head_loss(model, select_frames(trunk.activations, mask), leaves, labels[index], nsdl)
    eligible = int(index[0].shape[0])
    loss = breakdown.total * (1.0 / eligible)
    if not np.isfinite(loss.value):
        msg = f"Non-finite loss {float(loss.value)} on batch starting with {batch[0].entry_id}"
        raise NumericError(msg)
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()}
    new_params, new_opt = sgd_step(params.params, grads, optimizer)
    updated = params.with_params(new_params).with_buffers(trunk.buffer_updates)
    return updated, new_opt, float(loss.value), index[1], breakdown.frame_l1, breakdown.frame_l2


def train_acoustic(
    model: AcousticModel,
    params: ParameterSet,
    instances: Sequence[Instance],
    settings: TrainSettings,
    nsdl: NsdlLossConfig,
    seed: int,
    *,
    stage: str = "train",
    epochs: int | None = None,
    loss_log: Path | None = None,
    on_epoch: EpochHook | None = None,
) -> TrainResult:
    """Train for a number of epochs over pre-built instances.

    Args:
        model: Geometry and loss type.
        params: Starting point (random, Bi-APC transferred or a previous iteration).
        instances: Output of build_instances.
        settings: Optimizer, batch size and epoch count.
        nsdl: Loss hyper-parameters.
        seed: Dropout and shuffling seed.
        stage: Tag used in the loss log.
        epochs: Overrides ``settings.epochs`` (SSL iterations use their own count).
        loss_log: CSV file receiving per-instance and per-epoch rows.
        on_epoch: Called after every epoch; may return a dev WER for the log.

    Raises:
        ConfigurationError: If there is nothing to train on.
    """
    if not instances:
        msg = "No training instances (empty training set)"
        raise ConfigurationError(msg)
    dtype = np.dtype(DTYPE)
    params = params.astype(dtype)
    optimizer = OptimizerState(
        learning_rate=settings.learning_rate, momentum=settings.momentum, clip_norm=settings.clip_norm
    )
    result = TrainResult(params=params, optimizer=optimizer)
    for epoch in range(epochs if epochs is not None else settings.epochs):
        started = time.monotonic()
        order = np.random.default_rng([seed, epoch]).permutation(len(instances))
        frames_total, loss_sum, l1_sum, l2_sum = 0, 0.0, 0.0, 0.0
        rows: list[LossLogRow] = []
        for start in range(0, len(order), settings.batch_size):
            batch = [instances[i] for i in order[start : start + settings.batch_size]]
            rng = np.random.default_rng([seed, epoch, start])
            try:
                params, optimizer, mean_loss, cols, f1, f2 = train_step(model, params, optimizer, batch, nsdl, rng)
            except NumericError as exc:
                result.skipped_steps += 1
                logger.warning(
                    "step_skipped | stage=%s epoch=%d first=%s reason=%s", stage, epoch, batch[0].entry_id, exc
                )
                continue
            frames_total += cols.shape[0]
            loss_sum += mean_loss * cols.shape[0]
            l1_sum += float(f1.sum())
            l2_sum += float(f2.sum())
            if loss_log is not None:
                rows.extend(_log_rows(stage, epoch, batch, cols, f1, f2, nsdl.task_ratio))
        epoch_loss = loss_sum / max(frames_total, 1)
        result.epoch_losses.append(epoch_loss)
        dev_wer = on_epoch(epoch, params) if on_epoch is not None else None
        result.dev_wers.append(dev_wer)
        if loss_log is not None:
            rows.append(
                LossLogRow(
                    stage=stage,
                    epoch=epoch,
                    utterance_id="*epoch*",
                    frames=frames_total,
                    l1=l1_sum / max(frames_total, 1),
                    l2=l2_sum / max(frames_total, 1),
                    total=epoch_loss,
                )
            )
            append_loss_log(loss_log, rows)
        logger.info(
            "epoch_complete | stage=%s loss=%s epoch=%d mean_loss=%.4f dev_wer=%s seconds=%.1f",
            stage,
            model.loss,
            epoch,
            epoch_loss,
            "n/a" if dev_wer is None else f"{dev_wer:.2f}",
            time.monotonic() - started,
        )
    prior = estimate_priors([inst.labels[inst.loss_mask] for inst in instances], model.inventory)
    result.params = params.with_buffers({PRIOR_NAME: prior})
    result.optimizer = optimizer
    return result
