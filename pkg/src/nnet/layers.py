"""Stacked bidirectional LSTM trunk with batch normalization and dropout.

Each block runs a forward and a backward LSTM, concatenates their outputs
(forward first), normalizes every feature over the valid frames of the batch and
applies inverted dropout in train mode.

In ``split`` mode (used for Bi-APC pretraining) block b > 0 feeds the forward
LSTM only the forward half of the previous block and the backward LSTM only the
backward half; the other half is zeroed. Batch normalization in split mode
always uses the running statistics, because batch statistics pool over every
frame of the sequence. Shapes are identical in both modes, so split-trained
weights transfer by plain copy.
This module imports from nnet and state — NEVER from acoustic/ or higher layers.
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from src.nnet.autodiff import Tensor, add, concat, mul, power, total
from src.nnet.lstm import LstmState, length_mask, lstm_scan, reversed_scan
from src.nnet.params import ParameterSet, uniform_init
from src.state.errors import ContractError, NumericError
from src.state.settings import BlstmStackConfig

logger = logging.getLogger(__name__)

DIRECTIONS = ("fwd", "bwd")


@dataclass
class BlstmOutput:
    """Trunk activations (T, B, 2H) plus per-block final states and running-stat updates."""

    activations: Tensor
    final_states: dict[str, LstmState] = field(default_factory=dict)
    buffer_updates: dict[str, np.ndarray] = field(default_factory=dict)


def init_blstm(config: BlstmStackConfig, rng: np.random.Generator) -> ParameterSet:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases with forget bias +1, identity batch norm."""
    hidden = config.hidden_per_direction
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    for b in range(config.num_blocks):
        in_dim = config.input_dim if b == 0 else 2 * hidden
        for d in DIRECTIONS:
            prefix = f"block{b}.{d}"
            params[f"{prefix}.w_ih"] = uniform_init(rng, in_dim, (in_dim, 4 * hidden))
            params[f"{prefix}.w_hh"] = uniform_init(rng, hidden, (hidden, 4 * hidden))
            bias = np.zeros(4 * hidden)
            bias[hidden : 2 * hidden] = 1.0
            params[f"{prefix}.b"] = bias
        if config.batch_norm:
            params[f"block{b}.bn.gamma"] = np.ones(2 * hidden)
            params[f"block{b}.bn.beta"] = np.zeros(2 * hidden)
            buffers[f"block{b}.bn.running_mean"] = np.zeros(2 * hidden)
            buffers[f"block{b}.bn.running_var"] = np.ones(2 * hidden)
    return ParameterSet(params=params, buffers=buffers, tag="blstm")


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, scale survivors by 1/(1-rate)."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.value.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))


def batch_norm(
    y: Tensor,
    mask: np.ndarray,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    *,
    train: bool,
    momentum: float,
    eps: float,
    frozen: bool = False,
) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Per-feature normalization over valid (t, b) frames.

    With ``frozen`` set, train mode still normalizes with the incoming running
    statistics (so frame t never depends on other frames) and only folds the
    batch statistics into the returned running estimates.

    Returns:
        Normalized activations (zero on padding) and the updated running mean and variance.
    """
    m = mask[..., None].astype(y.value.dtype)
    count = float(m.sum())
    if train and not frozen:
        mu = mul(total(mul(y, Tensor(m)), (0, 1)), Tensor(1.0 / count))
        centered = add(y, -mu)
        var = mul(total(mul(mul(centered, centered), Tensor(m)), (0, 1)), Tensor(1.0 / count))
        normed = mul(centered, power(add(var, Tensor(eps)), -0.5))
        new_mean = (1.0 - momentum) * running_mean + momentum * mu.value
        new_var = (1.0 - momentum) * running_var + momentum * var.value
    else:
        scale = 1.0 / np.sqrt(running_var + eps)
        normed = mul(add(y, Tensor(-running_mean)), Tensor(scale))
        new_mean, new_var = running_mean, running_var
        if train:
            batch_mean = (y.value * m).sum(axis=(0, 1)) / count
            batch_var = (((y.value - batch_mean) ** 2) * m).sum(axis=(0, 1)) / count
            new_mean = (1.0 - momentum) * running_mean + momentum * batch_mean
            new_var = (1.0 - momentum) * running_var + momentum * batch_var
    return mul(add(mul(normed, gamma), beta), Tensor(m)), new_mean, new_var


def _check_finite(x: Tensor, block: int, lengths: np.ndarray) -> None:
    bad = ~np.isfinite(x.value)
    if bad.any():
        t, b, _ = np.argwhere(bad)[0]
        msg = f"Non-finite activation in block {block} at frame {t} (batch column {b}, length {lengths[b]})"
        raise NumericError(msg)


def _masked_half(x: Tensor, hidden: int, keep: str) -> Tensor:
    """Zero the half of a (T, B, 2H) activation that belongs to the other direction."""
    gate = np.zeros(2 * hidden, dtype=x.value.dtype)
    if keep == "fwd":
        gate[:hidden] = 1.0
    else:
        gate[hidden:] = 1.0
    return mul(x, Tensor(gate))


def blstm_forward(
    leaves: Mapping[str, Tensor],
    buffers: Mapping[str, np.ndarray],
    x: Tensor,
    lengths: np.ndarray,
    config: BlstmStackConfig,
    *,
    train: bool,
    rng: np.random.Generator | None = None,
    initial: Mapping[str, LstmState] | None = None,
    split: bool = False,
) -> BlstmOutput:
    """Run the trunk over a padded batch.

    Args:
        leaves: Parameter tensors from ``ParameterSet.leaves()`` (or constants).
        buffers: Batch-norm running statistics.
        x: Input features, (T, B, D).
        lengths: Valid frame count per batch column.
        config: Stack geometry.
        train: Batch statistics and dropout when True; running statistics otherwise.
        rng: Dropout generator; required in train mode when dropout_rate > 0.
        initial: Optional starting state per "block{b}.{dir}".
        split: Keep forward and backward paths separate across blocks and normalize with
            running statistics even in train mode.

    Raises:
        ContractError: On a shape mismatch or a missing dropout generator.
        NumericError: On a non-finite activation, naming block and frame.
    """
    if x.ndim != 3 or x.shape[2] != config.input_dim:
        msg = f"Trunk expects (T, B, {config.input_dim}) input, got {x.shape}"
        raise ContractError(msg)
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.shape != (x.shape[1],) or lengths.min() < 1 or lengths.max() > x.shape[0]:
        msg = f"Lengths {lengths.tolist()} do not fit a batch of shape {x.shape}"
        raise ContractError(msg)
    if train and config.dropout_rate > 0 and rng is None:
        msg = "Train-mode forward with dropout needs a random generator"
        raise ContractError(msg)
    hidden = config.hidden_per_direction
    mask = length_mask(lengths, x.shape[0])
    initial = initial or {}
    out = BlstmOutput(activations=x)
    h = x
    for b in range(config.num_blocks):
        halves = []
        for d in DIRECTIONS:
            name = f"block{b}.{d}"
            inputs = _masked_half(h, hidden, d) if split and b > 0 else h
            args = (inputs, leaves[f"{name}.w_ih"], leaves[f"{name}.w_hh"], leaves[f"{name}.b"])
            if d == "fwd":
                y, final = lstm_scan(*args, mask, initial.get(name))
            else:
                y, final = reversed_scan(*args, lengths, initial.get(name))
            out.final_states[name] = final
            halves.append(y)
        h = concat(halves, axis=-1)
        if config.batch_norm:
            prefix = f"block{b}.bn"
            h, mean, var = batch_norm(
                h,
                mask,
                leaves[f"{prefix}.gamma"],
                leaves[f"{prefix}.beta"],
                buffers[f"{prefix}.running_mean"],
                buffers[f"{prefix}.running_var"],
                train=train,
                momentum=config.bn_momentum,
                eps=config.bn_eps,
                frozen=split,
            )
            if train:
                out.buffer_updates[f"{prefix}.running_mean"] = mean
                out.buffer_updates[f"{prefix}.running_var"] = var
        if train and rng is not None:
            h = dropout(h, config.dropout_rate, rng)
        _check_finite(h, b, lengths)
    out.activations = h
    return out


def run_trunk(
    params: ParameterSet, features: np.ndarray, config: BlstmStackConfig, *, split: bool = False
) -> np.ndarray:
    """Eval-mode trunk over one (T, D) sequence; returns (T, 2H) activations."""
    leaves = {k: Tensor(v) for k, v in params.params.items()}
    x = Tensor(features[:, None, :])
    result = blstm_forward(leaves, params.buffers, x, np.array([features.shape[0]]), config, train=False, split=split)
    return result.activations.value[:, 0, :]


def pad_batch(sequences: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Stack (T_i, D) arrays into a zero-padded (T_max, B, D) batch plus lengths."""
    if not sequences:
        msg = "Cannot batch an empty list of sequences"
        raise ContractError(msg)
    lengths = np.array([s.shape[0] for s in sequences], dtype=np.int64)
    batch = np.zeros((int(lengths.max()), len(sequences), sequences[0].shape[1]), dtype=sequences[0].dtype)
    for i, s in enumerate(sequences):
        batch[: s.shape[0], i] = s
    return batch, lengths
