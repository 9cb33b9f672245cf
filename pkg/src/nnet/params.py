"""Named parameter and buffer collections, initialization, and checkpoint mapping.

This module imports from nnet and state — NEVER from acoustic/ or higher layers.
"""

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from src.nnet.autodiff import Tensor, parameter
from src.state.checkpoint import Checkpoint
from src.state.errors import ConfigurationError, ContractError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParameterSet:
    """Trainable tensors plus non-trainable buffers, keyed by dotted names.

    Instances are treated as immutable; every update returns a new set.
    """

    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)
    tag: str = ""

    def __post_init__(self) -> None:
        clash = set(self.params) & set(self.buffers)
        if clash:
            msg = f"Names used for both parameters and buffers: {sorted(clash)}"
            raise ContractError(msg)

    def leaves(self) -> dict[str, Tensor]:
        """Fresh gradient-collecting leaves for one forward/backward pass."""
        return {name: parameter(value, name) for name, value in self.params.items()}

    def with_params(self, params: Mapping[str, np.ndarray]) -> "ParameterSet":
        return ParameterSet(params={**self.params, **params}, buffers=dict(self.buffers), tag=self.tag)

    def with_buffers(self, buffers: Mapping[str, np.ndarray]) -> "ParameterSet":
        return ParameterSet(params=dict(self.params), buffers={**self.buffers, **buffers}, tag=self.tag)

    def with_tag(self, tag: str) -> "ParameterSet":
        return ParameterSet(params=dict(self.params), buffers=dict(self.buffers), tag=tag)

    def subset(self, prefixes: Iterable[str]) -> "ParameterSet":
        """Only the tensors whose names start with one of the prefixes."""
        keep = tuple(prefixes)
        return ParameterSet(
            params={k: v for k, v in self.params.items() if k.startswith(keep)},
            buffers={k: v for k, v in self.buffers.items() if k.startswith(keep)},
            tag=self.tag,
        )

    def without(self, prefixes: Iterable[str]) -> "ParameterSet":
        drop = tuple(prefixes)
        return ParameterSet(
            params={k: v for k, v in self.params.items() if not k.startswith(drop)},
            buffers={k: v for k, v in self.buffers.items() if not k.startswith(drop)},
            tag=self.tag,
        )

    def astype(self, dtype: np.dtype | type | str) -> "ParameterSet":
        return ParameterSet(
            params={k: v.astype(dtype) for k, v in self.params.items()},
            buffers={k: v.astype(dtype) for k, v in self.buffers.items()},
            tag=self.tag,
        )

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def to_checkpoint(
        self,
        stage: str,
        digest: str,
        optimizer: Mapping[str, np.ndarray] | None = None,
        metadata: Mapping[str, object] | None = None,
    ) -> Checkpoint:
        return Checkpoint(
            stage=stage,
            digest=digest,
            params=dict(self.params),
            buffers=dict(self.buffers),
            optimizer=dict(optimizer or {}),
            metadata={"tag": self.tag, **(metadata or {})},
        )

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "ParameterSet":
        return cls(params=dict(ckpt.params), buffers=dict(ckpt.buffers), tag=str(ckpt.metadata.get("tag", "")))


def uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    """U(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_linear(rng: np.random.Generator, prefix: str, in_dim: int, out_dim: int) -> dict[str, np.ndarray]:
    return {f"{prefix}.w": uniform_init(rng, in_dim, (in_dim, out_dim)), f"{prefix}.b": np.zeros(out_dim)}


def copy_matching(source: ParameterSet, target: ParameterSet, prefixes: Iterable[str]) -> ParameterSet:
    """Copy every source tensor under ``prefixes`` into ``target``.

    Raises:
        ConfigurationError: If a tensor is missing from the target or its shape differs.
    """
    picked = source.subset(prefixes)
    for name, value in {**picked.params, **picked.buffers}.items():
        existing = target.params.get(name, target.buffers.get(name))
        if existing is None:
            msg = f"Tensor '{name}' has no counterpart in the target model"
            raise ConfigurationError(msg)
        if existing.shape != value.shape:
            msg = f"Tensor '{name}' has shape {value.shape} but the target expects {existing.shape}"
            raise ConfigurationError(msg)
    logger.debug("copy_matching | params=%d buffers=%d", len(picked.params), len(picked.buffers))
    return ParameterSet(
        params={**target.params, **{k: v.copy() for k, v in picked.params.items()}},
        buffers={**target.buffers, **{k: v.copy() for k, v in picked.buffers.items()}},
        tag=target.tag,
    )
