"""Finite-difference check of reverse-mode gradients.

This module imports from nnet and state — NEVER from acoustic/ or higher layers.
"""

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np

from src.nnet.autodiff import Tensor, no_grad, parameter
from src.state.errors import ContractError

logger = logging.getLogger(__name__)

LossFn = Callable[[Mapping[str, Tensor]], Tensor]


@dataclass(frozen=True)
class ProbeResult:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    relative_error: float


@dataclass
class GradCheckReport:
    """Worst relative error over the probed coordinates and the probes above tolerance."""

    max_relative_error: float
    probes: list[ProbeResult] = field(default_factory=list)
    failures: list[ProbeResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _evaluate(loss_fn: LossFn, params: Mapping[str, np.ndarray]) -> float:
    with no_grad():
        return float(loss_fn({k: Tensor(v) for k, v in params.items()}).value)


def _pick_probes(params: Mapping[str, np.ndarray], probes: int, rng: np.random.Generator) -> list[tuple[str, int]]:
    names = list(params)
    sizes = np.array([params[n].size for n in names])
    picks = rng.choice(int(sizes.sum()), size=min(probes, int(sizes.sum())), replace=False)
    offsets = np.cumsum(sizes)
    out = []
    for flat in np.sort(picks):
        k = int(np.searchsorted(offsets, flat, side="right"))
        start = int(offsets[k - 1]) if k else 0
        out.append((names[k], int(flat) - start))
    return out


def grad_check(
    loss_fn: LossFn,
    params: Mapping[str, np.ndarray],
    probes: int = 20,
    step: float = 1e-3,
    tolerance: float = 1e-4,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients with central differences refined by one Richardson step.

    Args:
        loss_fn: Maps named tensors to a scalar tensor. Must be deterministic.
        params: Point at which to check (float64 recommended).
        probes: Number of random coordinates to probe across all tensors.
        step: Central-difference step h; the estimate combines h and h/2.
        tolerance: Maximum accepted relative error.
        seed: Probe selection seed.

    Raises:
        ContractError: If two evaluations at the same point differ.
    """
    leaves = {k: parameter(np.array(v, dtype=np.float64), k) for k, v in params.items()}
    loss = loss_fn(leaves)
    loss.backward()
    base = _evaluate(loss_fn, params)
    if base != _evaluate(loss_fn, params) or not np.isclose(base, float(loss.value), rtol=0.0, atol=1e-12):
        msg = "Loss is not deterministic at the probe point (disable dropout or freeze its seed)"
        raise ContractError(msg)

    work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}

    def central(name: str, flat: int, h: float) -> float:
        view = work[name].reshape(-1)
        original = view[flat]
        view[flat] = original + h
        up = _evaluate(loss_fn, work)
        view[flat] = original - h
        down = _evaluate(loss_fn, work)
        view[flat] = original
        return (up - down) / (2.0 * h)

    report = GradCheckReport(max_relative_error=0.0)
    for name, flat in _pick_probes(params, probes, np.random.default_rng(seed)):
        grad = leaves[name].grad
        analytic = 0.0 if grad is None else float(grad.reshape(-1)[flat])
        numeric = (4.0 * central(name, flat, step / 2.0) - central(name, flat, step)) / 3.0
        err = relative_error(analytic, numeric)
        result = ProbeResult(name, tuple(np.unravel_index(flat, params[name].shape)), analytic, numeric, err)
        report.probes.append(result)
        report.max_relative_error = max(report.max_relative_error, err)
        if err > tolerance:
            report.failures.append(result)
    if report.failures:
        worst = max(report.failures, key=lambda r: r.relative_error)
        logger.warning(
            "grad_check_failed | failures=%d worst=%s%s rel_err=%.3e",
            len(report.failures),
            worst.name,
            list(worst.index),
            worst.relative_error,
        )
    return report
