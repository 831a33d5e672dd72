"""Batch tilings over day sequences and the overlap carry-over machinery.

Three tilings are used:
  * stride-1 sliding windows (training batches for the windowed recurrent head),
  * non-overlapping consecutive tiles (inference, and overlap-free pretraining),
  * overlapping batches with stride n - m, whose first m positions re-inject
    the stored recurrent outputs of the previous batch.

Padding never contributes to losses or metrics: sliding windows shorter than
the timestep are left-padded with repeats of the first frame, every
right-padded tiling repeats the final frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SequencingError, ShapeError


@dataclass(frozen=True)
class Window:
    """One training window; pad_count leading positions repeat frame 0."""

    sequence_id: str
    start: int
    length: int
    pad_count: int = 0

    def __post_init__(self):
        if self.start < 0 or self.length < 1:
            raise ConfigError("window start must be >= 0 and length >= 1")
        if not 0 <= self.pad_count < self.length:
            raise ConfigError("pad_count must satisfy 0 <= pad_count < length")


def sliding_starts(length: int, timestep: int, sequence_id: str = "") -> list[Window]:
    """Stride-1 windows covering a sequence of `length` frames.

    For length >= timestep there are length - timestep + 1 unpadded windows;
    shorter sequences yield a single left-padded window.
    """
    if length < 1 or timestep < 1:
        raise ConfigError("length and timestep must be positive")
    if length >= timestep:
        return [
            Window(sequence_id, start, timestep)
            for start in range(length - timestep + 1)
        ]
    return [Window(sequence_id, 0, timestep, pad_count=timestep - length)]


def window_rows(
    features: np.ndarray, labels: np.ndarray, window: Window
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Materialize a window as (rows, labels, valid mask); padding is masked out."""
    positions = np.arange(window.length)
    src = np.maximum(positions - window.pad_count, 0) + window.start
    if src[-1] >= len(features):
        raise ConfigError("window extends past the end of the sequence")
    return features[src], labels[src], positions >= window.pad_count


def tile_starts(length: int, size: int) -> tuple[list[int], int]:
    """Non-overlapping consecutive tiles of `size`; returns (starts, pad_count)."""
    if length < 1 or size < 1:
        raise ConfigError("length and tile size must be positive")
    count = -(-length // size)
    return [i * size for i in range(count)], count * size - length


def batch_rows(
    features: np.ndarray, labels: np.ndarray, start: int, count: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows [start, start+count), repeating the final frame past the end."""
    if start < 0 or start >= len(features):
        raise ConfigError("batch start out of range")
    idx = np.arange(start, start + count)
    valid = idx < len(features)
    return features[np.minimum(idx, len(features) - 1)], labels[
        np.minimum(idx, len(features) - 1)
    ], valid


@dataclass(frozen=True)
class PiggybackPlan:
    """Overlap-m tiling of one sequence into batches of size n, stride n - m."""

    sequence_id: str
    batch_size: int
    overlap: int
    starts: tuple[int, ...]
    pad_count: int

    @property
    def batch_count(self) -> int:
        return len(self.starts)


def piggyback_plan(
    length: int, batch_size: int, overlap: int, sequence_id: str = ""
) -> PiggybackPlan:
    """Plan the overlapping batches covering a sequence of `length` frames.

    Batch count is 1 when the sequence fits in one batch, otherwise
    ceil((L - n) / (n - m)) + 1; the tail is right-padded with repeats of the
    final frame so every batch has exactly n positions.
    """
    n, m = batch_size, overlap
    if not 0 < m < n:
        raise ConfigError(f"overlap must satisfy 0 < m < n, got n={n} m={m}")
    if length <= m:
        raise ConfigError(
            f"sequence of {length} frames is too short for overlap {m}"
        )
    stride = n - m
    batches = 1 if length <= n else -(-(length - n) // stride) + 1
    padded = n + (batches - 1) * stride
    return PiggybackPlan(
        sequence_id=sequence_id,
        batch_size=n,
        overlap=m,
        starts=tuple(i * stride for i in range(batches)),
        pad_count=padded - length,
    )


class CarryStore:
    """The last m recurrent outputs of the most recent batch of one sequence.

    A store is owned by exactly one in-order traversal; batches of the same
    sequence must be processed in plan order.
    """

    def __init__(self, overlap: int):
        if overlap < 1:
            raise ConfigError("carry overlap must be >= 1")
        self.overlap = overlap
        self._rows: np.ndarray | None = None

    @property
    def is_empty(self) -> bool:
        return self._rows is None

    @property
    def rows(self) -> np.ndarray:
        if self._rows is None:
            raise SequencingError("carry store read before any batch was processed")
        return self._rows

    def update(self, h_rows: np.ndarray) -> None:
        """Overwrite with the batch's last m recurrent output vectors."""
        h_rows = np.asarray(h_rows, dtype=np.float64)
        if h_rows.ndim != 2 or h_rows.shape[0] != self.overlap:
            raise ShapeError(
                f"carry store expects {self.overlap} rows, got {h_rows.shape}"
            )
        if not np.isfinite(h_rows).all():
            raise SequencingError("refusing to store non-finite recurrent outputs")
        self._rows = h_rows.copy()


def carry_mask(batch_size: int, overlap: int, first_batch: bool) -> np.ndarray:
    """Positions whose recurrent input is a carried output: none on the first
    batch, the first `overlap` positions afterwards."""
    if not 0 < overlap < batch_size:
        raise ConfigError("carry mask requires 0 < overlap < batch_size")
    mask = np.zeros(batch_size, dtype=bool)
    if not first_batch:
        mask[:overlap] = True
    return mask


def apply_carry(
    batch_inputs: np.ndarray, store: CarryStore, mask: np.ndarray
) -> np.ndarray:
    """Substitute stored recurrent outputs at the masked positions.

    Unmasked rows pass through unchanged. The caller must refresh the store
    with the batch's last m recurrent outputs after the forward pass.
    """
    mask = np.asarray(mask, dtype=bool)
    if batch_inputs.ndim != 2 or mask.shape != (batch_inputs.shape[0],):
        raise ShapeError("mask length must equal the batch row count")
    if not mask.any():
        return batch_inputs.copy()
    if store.is_empty:
        raise SequencingError("carry requested but the store holds no batch yet")
    rows = store.rows
    if rows.shape[1] != batch_inputs.shape[1]:
        raise ShapeError(
            f"carried width {rows.shape[1]} != batch input width {batch_inputs.shape[1]}"
        )
    positions = np.flatnonzero(mask)
    if len(positions) != rows.shape[0]:
        raise SequencingError(
            f"mask selects {len(positions)} positions but store holds {rows.shape[0]} rows"
        )
    out = batch_inputs.copy()
    out[positions] = rows
    return out
