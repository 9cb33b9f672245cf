"""Fused single-direction LSTM over padded (T, B, D) batches.

The whole scan is one recorded op with a hand-written BPTT backward, so the
autodiff graph holds O(1) nodes per layer rather than O(T). Gate order is
input, forget, cell, output. Frames past a sequence's length carry the state
through unchanged and emit zeros.
This module imports from nnet and state — NEVER from acoustic/ or higher layers.
"""

from dataclasses import dataclass

import numpy as np

from src.nnet.autodiff import Tensor, getitem, record
from src.state.errors import ContractError


@dataclass
class LstmState:
    """Hidden and cell state, each (B, H)."""

    h: np.ndarray
    c: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def length_mask(lengths: np.ndarray, num_frames: int) -> np.ndarray:
    """(T, B) boolean mask of valid frames."""
    return np.arange(num_frames)[:, None] < np.asarray(lengths)[None, :]


def reverse_index(lengths: np.ndarray, num_frames: int) -> tuple[np.ndarray, np.ndarray]:
    """Gather index reversing each column within its own length; padding stays put."""
    t = np.arange(num_frames)[:, None]
    lengths = np.asarray(lengths)[None, :]
    rows = np.where(t < lengths, lengths - 1 - t, t)
    cols = np.broadcast_to(np.arange(lengths.shape[1])[None, :], rows.shape)
    return rows, cols


def lstm_scan(
    x: Tensor,
    w_ih: Tensor,
    w_hh: Tensor,
    bias: Tensor,
    mask: np.ndarray,
    initial: LstmState | None = None,
) -> tuple[Tensor, LstmState]:
    """Run one LSTM direction left to right.

    Args:
        x: Inputs, shape (T, B, D).
        w_ih: Input weights, shape (D, 4H).
        w_hh: Recurrent weights, shape (H, 4H).
        bias: Gate biases, shape (4H,).
        mask: (T, B) valid-frame mask.
        initial: Starting state; zeros when None.

    Returns:
        Outputs (T, B, H) and the state after each column's last valid frame.

    Raises:
        ContractError: On inconsistent shapes.
    """
    T, B, D = x.shape
    hidden = w_hh.shape[0]
    if w_ih.shape != (D, 4 * hidden) or w_hh.shape != (hidden, 4 * hidden) or bias.shape != (4 * hidden,):
        msg = (
            f"LSTM shapes disagree: x {x.shape}, w_ih {w_ih.shape}, w_hh {w_hh.shape}, b {bias.shape} "
            f"(hidden {hidden})"
        )
        raise ContractError(msg)
    if mask.shape != (T, B):
        msg = f"Mask shape {mask.shape} does not match (T, B) = {(T, B)}"
        raise ContractError(msg)

    dtype = x.value.dtype
    h = np.zeros((B, hidden), dtype=dtype) if initial is None else initial.h.astype(dtype, copy=True)
    c = np.zeros((B, hidden), dtype=dtype) if initial is None else initial.c.astype(dtype, copy=True)
    xw = x.value @ w_ih.value + bias.value
    gates = np.empty((T, B, 4 * hidden), dtype=dtype)
    h_prev = np.empty((T, B, hidden), dtype=dtype)
    c_prev = np.empty((T, B, hidden), dtype=dtype)
    tanh_c = np.empty((T, B, hidden), dtype=dtype)
    out = np.zeros((T, B, hidden), dtype=dtype)
    for t in range(T):
        h_prev[t] = h
        c_prev[t] = c
        z = xw[t] + h @ w_hh.value
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = _sigmoid(z[:, 3 * hidden :])
        gates[t] = np.concatenate([i, f, g, o], axis=1)
        c_new = f * c + i * g
        tanh_c[t] = np.tanh(c_new)
        h_new = o * tanh_c[t]
        m = mask[t][:, None]
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
        out[t] = np.where(m, h_new, 0.0)

    def backward(dout: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        dxw = np.zeros_like(xw)
        dw_hh = np.zeros_like(w_hh.value)
        dh_next = np.zeros((B, hidden), dtype=dtype)
        dc_next = np.zeros((B, hidden), dtype=dtype)
        for t in reversed(range(T)):
            m = mask[t][:, None]
            i, f, g, o = np.split(gates[t], 4, axis=1)
            dh = np.where(m, dout[t], 0.0) + dh_next
            dc = dh * o * (1.0 - tanh_c[t] ** 2) + dc_next
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev[t] * f * (1.0 - f),
                    dc * i * (1.0 - g * g),
                    dh * tanh_c[t] * o * (1.0 - o),
                ],
                axis=1,
            )
            dz = np.where(m, dz, 0.0)
            dxw[t] = dz
            dw_hh += h_prev[t].T @ dz
            dh_next = np.where(m, dz @ w_hh.value.T, dh)
            dc_next = np.where(m, dc * f, dc_next)
        flat = dxw.reshape(-1, 4 * hidden)
        return dxw @ w_ih.value.T, x.value.reshape(-1, D).T @ flat, dw_hh, flat.sum(axis=0)

    return record(out, (x, w_ih, w_hh, bias), backward), LstmState(h=h, c=c)


def reversed_scan(
    x: Tensor,
    w_ih: Tensor,
    w_hh: Tensor,
    bias: Tensor,
    lengths: np.ndarray,
    initial: LstmState | None = None,
) -> tuple[Tensor, LstmState]:
    """Right-to-left LSTM: reverse each sequence, scan, reverse the outputs back."""
    T = x.shape[0]
    index = reverse_index(lengths, T)
    out, final = lstm_scan(getitem(x, index), w_ih, w_hh, bias, length_mask(lengths, T), initial)
    return getitem(out, index), final
