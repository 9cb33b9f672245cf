"""Non-speech state discriminative loss (NSDL) and the cross-entropy baseline.

Head 1 predicts a distribution over the non-speech states plus a single "speech"
class; head 2 predicts a distribution over the speech states. The full state
posterior is P(s) = p1(s) for non-speech states and p1(speech) * p2(s) for speech
states. The loss is L1 (speech / non-speech binary cross entropy) plus lambda
times L2 (class-weighted cross entropy over the full posterior).

All losses are raw sums over frames; callers divide by the number of
loss-eligible frames.
This module imports from nnet and state — NEVER from stages/ or semisup/.
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from src.nnet.autodiff import (
    Tensor,
    as_tensor,
    concat,
    floor_log,
    getitem,
    linear,
    log_softmax,
    mul,
    neg,
    pick,
    softmax,
    total,
)
from src.nnet.params import init_linear
from src.state.errors import ContractError
from src.state.inventory import StateInventory
from src.state.settings import NsdlLossConfig

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-12


@dataclass
class NsdlOutputs:
    """p1: (N, |S1|+1) over non-speech states plus speech; p2: (N, |S2|) over speech states."""

    p1: Tensor
    p2: Tensor

    @property
    def num_frames(self) -> int:
        return self.p1.shape[0]


@dataclass
class LossBreakdown:
    """Summed losses (differentiable) plus per-frame term values for logging."""

    total: Tensor
    l1: Tensor
    l2: Tensor
    frame_l1: np.ndarray
    frame_l2: np.ndarray


def init_nsdl_heads(rng: np.random.Generator, hidden_dim: int, inventory: StateInventory) -> dict[str, np.ndarray]:
    return {
        **init_linear(rng, "head1", hidden_dim, inventory.num_nonspeech + 1),
        **init_linear(rng, "head2", hidden_dim, inventory.num_speech),
    }


def init_ce_head(rng: np.random.Generator, hidden_dim: int, inventory: StateInventory) -> dict[str, np.ndarray]:
    return init_linear(rng, "head", hidden_dim, inventory.size)


def nsdl_forward(hidden: Tensor, heads: Mapping[str, Tensor], inventory: StateInventory) -> NsdlOutputs:
    """Two softmax heads over shared (N, H) trunk activations.

    Raises:
        ContractError: If H does not match the head input dimension or the head sizes
            disagree with the inventory.
    """
    w1, w2 = heads["head1.w"], heads["head2.w"]
    if hidden.shape[-1] != w1.shape[0] or hidden.shape[-1] != w2.shape[0]:
        msg = f"Hidden dimension {hidden.shape[-1]} does not match head inputs {w1.shape[0]}/{w2.shape[0]}"
        raise ContractError(msg)
    if w1.shape[1] != inventory.num_nonspeech + 1 or w2.shape[1] != inventory.num_speech:
        msg = (
            f"Head sizes ({w1.shape[1]}, {w2.shape[1]}) do not match inventory "
            f"({inventory.num_nonspeech + 1}, {inventory.num_speech})"
        )
        raise ContractError(msg)
    return NsdlOutputs(
        p1=softmax(linear(hidden, w1, heads["head1.b"])),
        p2=softmax(linear(hidden, w2, heads["head2.b"])),
    )


def speech_prob(outputs: NsdlOutputs) -> Tensor:
    return getitem(outputs.p1, (slice(None), outputs.p1.shape[1] - 1))


def nonspeech_prob(outputs: NsdlOutputs) -> Tensor:
    """P(non-speech) = sum of p1 over the non-speech states, per frame."""
    return total(getitem(outputs.p1, (slice(None), slice(0, outputs.p1.shape[1] - 1))), axis=1)


def build_speech_mask(alignment: np.ndarray, inventory: StateInventory) -> np.ndarray:
    """b_t = 1 iff y_t is a speech state.

    Raises:
        ContractError: On a state id outside the inventory.
    """
    return inventory.is_speech(np.asarray(alignment)).astype(np.int64)


def _report_floor(name: str, probs: np.ndarray, eps: float) -> None:
    hits = int(np.count_nonzero(probs <= eps))
    if hits:
        logger.warning("log_floor | term=%s frames=%d eps=%.0e", name, hits, eps)


def l1_terms(outputs: NsdlOutputs, mask: np.ndarray, eps: float = DEFAULT_EPS) -> Tensor:
    """Per-frame -[b log p1(speech) + (1-b) log P(non-speech)]."""
    mask = np.asarray(mask)
    if mask.shape != (outputs.num_frames,):
        msg = f"Speech mask has {mask.shape} entries for {outputs.num_frames} frames"
        raise ContractError(msg)
    p_speech = speech_prob(outputs)
    p_nonspeech = nonspeech_prob(outputs)
    b = mask.astype(p_speech.value.dtype)
    _report_floor("p1_speech", p_speech.value[mask == 1], eps)
    _report_floor("p_nonspeech", p_nonspeech.value[mask == 0], eps)
    picked = mul(floor_log(p_speech, eps), Tensor(b)) + mul(floor_log(p_nonspeech, eps), Tensor(1.0 - b))
    return neg(picked)


def loss_l1(outputs: NsdlOutputs, mask: np.ndarray, eps: float = DEFAULT_EPS) -> Tensor:
    return total(l1_terms(outputs, mask, eps))


def combine_distribution(outputs: NsdlOutputs, inventory: StateInventory) -> Tensor:
    """(N, |S1|+|S2|) posterior: p1 on non-speech states, p1(speech) * p2 on speech states."""
    n_ns = inventory.num_nonspeech
    if outputs.p1.shape[1] != n_ns + 1 or outputs.p2.shape[1] != inventory.num_speech:
        msg = f"Outputs {outputs.p1.shape}/{outputs.p2.shape} do not match inventory of size {inventory.size}"
        raise ContractError(msg)
    nonspeech = getitem(outputs.p1, (slice(None), slice(0, n_ns)))
    speech = mul(getitem(outputs.p1, (slice(None), slice(n_ns, n_ns + 1))), outputs.p2)
    return concat([nonspeech, speech], axis=1)


def class_weights(alignment: np.ndarray, inventory: StateInventory, config: NsdlLossConfig) -> np.ndarray:
    speech = inventory.is_speech(np.asarray(alignment))
    return np.where(speech, config.class_weight_speech, config.class_weight_nonspeech)


def l2_terms(outputs: NsdlOutputs, alignment: np.ndarray, config: NsdlLossConfig, inventory: StateInventory) -> Tensor:
    """Per-frame -w(y_t) log P(y_t)."""
    alignment = np.asarray(alignment, dtype=np.int64)
    if alignment.shape != (outputs.num_frames,):
        msg = f"Alignment has {alignment.shape} entries for {outputs.num_frames} frames"
        raise ContractError(msg)
    weights = class_weights(alignment, inventory, config)
    p_true = pick(combine_distribution(outputs, inventory), alignment)
    _report_floor("p_state", p_true.value, config.eps)
    return neg(mul(floor_log(p_true, config.eps), Tensor(weights)))


def loss_l2(outputs: NsdlOutputs, alignment: np.ndarray, config: NsdlLossConfig, inventory: StateInventory) -> Tensor:
    return total(l2_terms(outputs, alignment, config, inventory))


def loss_nsdl(
    outputs: NsdlOutputs,
    alignment: np.ndarray,
    mask: np.ndarray,
    config: NsdlLossConfig,
    inventory: StateInventory,
) -> LossBreakdown:
    """total = L1 + lambda * L2, with the per-frame terms kept for the training log."""
    t1 = l1_terms(outputs, mask, config.eps)
    t2 = l2_terms(outputs, alignment, config, inventory)
    l1, l2 = total(t1), total(t2)
    return LossBreakdown(
        total=l1 + mul(l2, Tensor(config.task_ratio)),
        l1=l1,
        l2=l2,
        frame_l1=t1.value,
        frame_l2=t2.value,
    )


def ce_terms(logits: Tensor, alignment: np.ndarray, inventory: StateInventory) -> Tensor:
    logits = as_tensor(logits)
    if logits.shape[-1] != inventory.size:
        msg = f"Single-head logits have {logits.shape[-1]} outputs, inventory has {inventory.size} states"
        raise ContractError(msg)
    alignment = np.asarray(alignment, dtype=np.int64)
    inventory.check(alignment)
    return neg(pick(log_softmax(logits), alignment))


def ce_baseline_loss(logits: Tensor, alignment: np.ndarray, inventory: StateInventory) -> Tensor:
    """Summed frame cross entropy of a single softmax over all states."""
    return total(ce_terms(logits, alignment, inventory))


def ce_breakdown(logits: Tensor, alignment: np.ndarray, inventory: StateInventory) -> LossBreakdown:
    terms = ce_terms(logits, alignment, inventory)
    loss = total(terms)
    zeros = np.zeros_like(terms.value)
    return LossBreakdown(total=loss, l1=Tensor(0.0), l2=loss, frame_l1=zeros, frame_l2=terms.value)


def log_posteriors_nsdl(hidden: np.ndarray, heads: Mapping[str, np.ndarray], inventory: StateInventory) -> np.ndarray:
    """log P(s|x) from the two heads, computed in the log domain (no gradient)."""
    n_ns = inventory.num_nonspeech
    logp1 = log_softmax(Tensor(hidden @ heads["head1.w"] + heads["head1.b"])).value
    logp2 = log_softmax(Tensor(hidden @ heads["head2.w"] + heads["head2.b"])).value
    return np.concatenate([logp1[:, :n_ns], logp1[:, n_ns : n_ns + 1] + logp2], axis=1)


def log_posteriors_ce(hidden: np.ndarray, heads: Mapping[str, np.ndarray]) -> np.ndarray:
    return log_softmax(Tensor(hidden @ heads["head.w"] + heads["head.b"])).value
