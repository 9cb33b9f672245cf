"""Acoustic model: BLSTM trunk plus NSDL or CE output heads, state priors and checkpoints.

This module imports from nnet, frontend and state — NEVER from stages/ or semisup/.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.acoustic.nsdl import (
    LossBreakdown,
    ce_breakdown,
    init_ce_head,
    init_nsdl_heads,
    log_posteriors_ce,
    log_posteriors_nsdl,
    loss_nsdl,
    nsdl_forward,
)
from src.nnet.autodiff import Tensor, getitem, linear
from src.nnet.layers import init_blstm, run_trunk
from src.nnet.params import ParameterSet
from src.state.checkpoint import save_checkpoint
from src.state.errors import ContractError
from src.state.inventory import StateInventory
from src.state.models import LossType
from src.state.settings import BlstmStackConfig, NsdlLossConfig

logger = logging.getLogger(__name__)

PRIOR_NAME = "state_prior"
HEAD_PREFIXES = ("head1.", "head2.", "head.")
TRUNK_PREFIX = "block"
PRIOR_FLOOR = 1e-5


@dataclass(frozen=True)
class AcousticModel:
    """Geometry of a trained or initialized acoustic model."""

    config: BlstmStackConfig
    loss: LossType
    inventory: StateInventory

    @property
    def trunk_dim(self) -> int:
        return 2 * self.config.hidden_per_direction


def init_heads(model: AcousticModel, rng: np.random.Generator) -> dict[str, np.ndarray]:
    if model.loss == LossType.NSDL:
        return init_nsdl_heads(rng, model.trunk_dim, model.inventory)
    return init_ce_head(rng, model.trunk_dim, model.inventory)


def init_acoustic(model: AcousticModel, seed: int) -> ParameterSet:
    """Random trunk and heads; uniform state prior until trained."""
    rng = np.random.default_rng([seed, 0])
    trunk = init_blstm(model.config, rng)
    heads = init_heads(model, np.random.default_rng([seed, 1]))
    prior = np.full(model.inventory.size, 1.0 / model.inventory.size)
    return ParameterSet(
        params={**trunk.params, **heads},
        buffers={**trunk.buffers, PRIOR_NAME: prior},
        tag=str(model.loss),
    )


def head_params(params: ParameterSet) -> dict[str, np.ndarray]:
    return {k: v for k, v in params.params.items() if k.startswith(HEAD_PREFIXES)}


def head_loss(
    model: AcousticModel,
    hidden: Tensor,
    leaves: Mapping[str, Tensor],
    labels: np.ndarray,
    nsdl: NsdlLossConfig,
) -> LossBreakdown:
    """Summed loss over (N, 2H) trunk frames with aligned state labels."""
    if model.loss == LossType.NSDL:
        outputs = nsdl_forward(hidden, leaves, model.inventory)
        mask = model.inventory.is_speech(labels).astype(np.int64)
        return loss_nsdl(outputs, labels, mask, nsdl, model.inventory)
    return ce_breakdown(linear(hidden, leaves["head.w"], leaves["head.b"]), labels, model.inventory)


def select_frames(activations: Tensor, frame_mask: np.ndarray) -> Tensor:
    """Gather the (T, B) masked frames of a (T, B, H) tensor into (N, H), time-major order."""
    return getitem(activations, np.nonzero(frame_mask))


def log_posteriors(model: AcousticModel, params: ParameterSet, features: np.ndarray) -> np.ndarray:
    """Eval-mode (T, |S|) log state posteriors for one utterance."""
    if features.ndim != 2 or features.shape[1] != model.config.input_dim:
        msg = f"Expected (T, {model.config.input_dim}) features, got {features.shape}"
        raise ContractError(msg)
    hidden = run_trunk(params, features, model.config)
    heads = head_params(params)
    if model.loss == LossType.NSDL:
        return log_posteriors_nsdl(hidden, heads, model.inventory)
    return log_posteriors_ce(hidden, heads)


def estimate_priors(alignments: Sequence[np.ndarray], inventory: StateInventory) -> np.ndarray:
    """Relative state frequencies over training alignments, floored and renormalized."""
    counts = np.zeros(inventory.size)
    for ali in alignments:
        inventory.check(ali)
        counts += np.bincount(ali, minlength=inventory.size)
    if counts.sum() == 0:
        return np.full(inventory.size, 1.0 / inventory.size)
    prior = np.maximum(counts / counts.sum(), PRIOR_FLOOR)
    return prior / prior.sum()


def acoustic_metadata(model: AcousticModel) -> dict[str, object]:
    return {"loss": str(model.loss), "phones": list(model.inventory.phones)}


def save_acoustic(
    path: Path,
    params: ParameterSet,
    model: AcousticModel,
    stage: str,
    digest: str,
    *,
    force: bool = True,
    metadata: Mapping[str, object] | None = None,
) -> None:
    """Write an acoustic checkpoint; ``metadata`` is merged over the loss and phone list."""
    ckpt = params.to_checkpoint(stage, digest, metadata={**acoustic_metadata(model), **(metadata or {})})
    save_checkpoint(path, ckpt, force=force)
