"""Householder reflectors H = I - tau * v v^T with v[0] = 1.

``make_reflector`` builds H from x so that H x = (beta, 0, ..., 0) with
beta = -sign(x[0]) * ||x||. Application uses a left-to-right dot product
over the (short) reflector length so results never depend on BLAS blocking,
on how rows are chunked, or on which worker ran the task.

The batched forms build and apply one reflector per leading index of a
stack of blocks. Every operation is elementwise across the stack, so a
task computes the same bits whether it runs alone or in a round.
"""

from dataclasses import dataclass

import numpy as np

from band_chase.errors import LengthMismatch


@dataclass(frozen=True)
class Reflector:
    v: np.ndarray
    tau: float
    beta: float

    @property
    def length(self) -> int:
        return int(self.v.shape[0])

    @property
    def is_identity(self) -> bool:
        return self.tau == 0

    def as_batch(self, dtype: np.dtype) -> "ReflectorBatch":
        dtype = np.dtype(dtype)
        return ReflectorBatch(
            v=self.v.astype(dtype)[None, :],
            tau=np.array([self.tau], dtype=dtype),
            beta=np.array([self.beta], dtype=dtype),
        )


@dataclass(frozen=True)
class ReflectorBatch:
    """Row b of ``v`` with ``tau[b]`` and ``beta[b]`` is one reflector."""

    v: np.ndarray
    tau: np.ndarray
    beta: np.ndarray

    @property
    def size(self) -> int:
        return int(self.v.shape[0])

    @property
    def length(self) -> int:
        return int(self.v.shape[1])

    def head(self) -> np.ndarray:
        """(beta, 0, ..., 0) per reflector: the annihilated input vectors."""
        out = np.zeros_like(self.v)
        out[:, 0] = self.beta
        return out

    def __getitem__(self, b: int) -> Reflector:
        return Reflector(v=self.v[b].copy(), tau=float(self.tau[b]), beta=float(self.beta[b]))


def make_reflectors(x: np.ndarray) -> ReflectorBatch:
    """One reflector per row of x; near-zero tails count as already annihilated."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] < 1:
        raise LengthMismatch(f"reflector inputs must be a stack of nonempty vectors, got shape {x.shape}")
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    eps = x.dtype.type(np.finfo(x.dtype).eps)

    alpha = x[:, 0]
    # hypot reduces left to right along each row: overflow-safe and order-fixed.
    if x.shape[1] == 1:
        tail = np.zeros_like(alpha)
    else:
        tail = np.abs(np.hypot.reduce(x[:, 1:], axis=1))
    keep = tail <= eps * np.abs(alpha)

    with np.errstate(divide="ignore", invalid="ignore"):
        norm = np.copysign(np.hypot(alpha, tail), alpha)  # -beta
        scale = alpha + norm
        tau = scale / norm
        v = x / scale[:, None]
    v[:, 0] = 1
    beta = -norm
    if keep.any():
        tau[keep] = 0
        beta[keep] = alpha[keep]
        v[keep, 1:] = 0
    return ReflectorBatch(v=v, tau=tau, beta=beta)


def make_reflector(x: np.ndarray) -> Reflector:
    """Reflector annihilating x[1:]; near-zero tails count as already annihilated."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] < 1:
        raise LengthMismatch(f"reflector input must be a nonempty vector, got shape {x.shape}")
    return make_reflectors(x[None, :])[0]


def apply_right_batch(
    h: ReflectorBatch, blocks: np.ndarray, *, chunk_width: int = 0
) -> np.ndarray:
    """blocks[b] <- blocks[b] @ H_b in place, ``chunk_width`` rows per step."""
    if blocks.ndim != 3 or blocks.shape[0] != h.size or blocks.shape[2] != h.length:
        raise LengthMismatch(
            f"{h.size} reflectors of length {h.length} cannot act on blocks of shape {blocks.shape}"
        )
    rows = blocks.shape[1]
    if rows == 0 or h.size == 0:
        return blocks
    v = h.v.astype(blocks.dtype, copy=False)[:, None, :]
    tau = h.tau.astype(blocks.dtype, copy=False)[:, None]
    step = chunk_width if chunk_width > 0 else rows
    for start in range(0, rows, step):
        chunk = blocks[:, start : start + step, :]
        acc = chunk[:, :, 0] * v[:, :, 0]
        for t in range(1, h.length):
            acc = acc + chunk[:, :, t] * v[:, :, t]
        chunk -= (tau * acc)[:, :, None] * v
    return blocks


def apply_left_batch(
    h: ReflectorBatch, blocks: np.ndarray, *, chunk_width: int = 0
) -> np.ndarray:
    """blocks[b] <- H_b @ blocks[b] in place, ``chunk_width`` columns per step."""
    if blocks.ndim != 3 or blocks.shape[0] != h.size or blocks.shape[1] != h.length:
        raise LengthMismatch(
            f"{h.size} reflectors of length {h.length} cannot act on blocks of shape {blocks.shape}"
        )
    cols = blocks.shape[2]
    if cols == 0 or h.size == 0:
        return blocks
    v = h.v.astype(blocks.dtype, copy=False)[:, :, None]
    tau = h.tau.astype(blocks.dtype, copy=False)[:, None]
    step = chunk_width if chunk_width > 0 else cols
    for start in range(0, cols, step):
        chunk = blocks[:, :, start : start + step]
        acc = chunk[:, 0, :] * v[:, 0]
        for t in range(1, h.length):
            acc = acc + chunk[:, t, :] * v[:, t]
        chunk -= v * (tau * acc)[:, None, :]
    return blocks


def apply_reflector(h: Reflector, y: np.ndarray) -> np.ndarray:
    """In place y <- y - tau * v * (v^T y); returns y."""
    if y.shape[0] != h.length:
        raise LengthMismatch(f"reflector length {h.length} != vector length {y.shape[0]}")
    if h.tau == 0:
        return y
    apply_right_batch(h.as_batch(y.dtype), y[None, None, :])
    return y


def apply_right(h: Reflector, block: np.ndarray, *, chunk_width: int = 0) -> np.ndarray:
    """block <- block @ H, one row at a time, ``chunk_width`` rows per step."""
    if block.shape[1] != h.length:
        raise LengthMismatch(f"reflector length {h.length} != block width {block.shape[1]}")
    if h.tau == 0 or block.shape[0] == 0:
        return block
    apply_right_batch(h.as_batch(block.dtype), block[None], chunk_width=chunk_width)
    return block


def apply_left(h: Reflector, block: np.ndarray, *, chunk_width: int = 0) -> np.ndarray:
    """block <- H @ block, one column at a time, ``chunk_width`` columns per step."""
    if block.shape[0] != h.length:
        raise LengthMismatch(f"reflector length {h.length} != block height {block.shape[0]}")
    if h.tau == 0 or block.shape[1] == 0:
        return block
    apply_left_batch(h.as_batch(block.dtype), block[None], chunk_width=chunk_width)
    return block


__all__ = [
    "Reflector",
    "ReflectorBatch",
    "make_reflector",
    "make_reflectors",
    "apply_reflector",
    "apply_right",
    "apply_left",
    "apply_right_batch",
    "apply_left_batch",
]
