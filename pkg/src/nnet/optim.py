"""Momentum SGD with global gradient-norm clipping.

This module imports from nnet and state — NEVER from acoustic/ or higher layers.
"""

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from src.state.errors import ContractError, NumericError

logger = logging.getLogger(__name__)

VELOCITY_PREFIX = "velocity."


@dataclass(frozen=True)
class OptimizerState:
    """Per-parameter momentum buffers plus the update hyper-parameters."""

    learning_rate: float
    momentum: float = 0.9
    clip_norm: float = 5.0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0

    def to_arrays(self) -> dict[str, np.ndarray]:
        """Flatten for checkpointing (optimizer-kind tensors)."""
        return {f"{VELOCITY_PREFIX}{k}": v for k, v in self.velocity.items()}

    @classmethod
    def from_arrays(
        cls, arrays: Mapping[str, np.ndarray], learning_rate: float, momentum: float, clip_norm: float
    ) -> "OptimizerState":
        velocity = {k.removeprefix(VELOCITY_PREFIX): v for k, v in arrays.items() if k.startswith(VELOCITY_PREFIX)}
        return cls(learning_rate=learning_rate, momentum=momentum, clip_norm=clip_norm, velocity=velocity)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def sgd_step(
    params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: OptimizerState
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """Clip to ``clip_norm`` by global norm, then v <- mu*v + g and p <- p - lr*v.

    Parameters without a gradient are left untouched. Inputs are not modified.

    Raises:
        ContractError: If a gradient names an unknown parameter or has the wrong shape.
        NumericError: If any gradient is non-finite; the caller should skip the step.
    """
    for name, g in grads.items():
        if name not in params:
            msg = f"Gradient for unknown parameter '{name}'"
            raise ContractError(msg)
        if g.shape != params[name].shape:
            msg = f"Gradient shape {g.shape} does not match parameter '{name}' {params[name].shape}"
            raise ContractError(msg)
        if not np.all(np.isfinite(g)):
            msg = f"Non-finite gradient for '{name}'"
            raise NumericError(msg)
    norm = global_norm(grads)
    scale = state.clip_norm / norm if norm > state.clip_norm else 1.0
    updated = dict(params)
    velocity = dict(state.velocity)
    for name, g in grads.items():
        v = state.momentum * velocity.get(name, np.zeros_like(g)) + scale * g
        velocity[name] = v
        updated[name] = params[name] - state.learning_rate * v
    new_state = OptimizerState(
        learning_rate=state.learning_rate,
        momentum=state.momentum,
        clip_norm=state.clip_norm,
        velocity=velocity,
        steps=state.steps + 1,
    )
    return updated, new_state
