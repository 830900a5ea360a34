"""Observation encoding: macro observations -> map canvas + scalar vector.

Encoded observations are stored compactly (uint8 channels at native grid
size, float32 scalars) and embedded into the fixed 20x20 network canvas only
when batched for a forward pass. All coordinates are normalized to [0, 1] by
the grid extent; teammate freshness saturates at STALENESS_CAP timesteps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import Cell
from ..mapping import STALENESS_CAP, JointMacroObservation, MacroObservation
from .model import CANVAS, MAP_CHANNELS


@dataclass
class EncodedObs:
    channels: np.ndarray   # (4, h, w) uint8
    scalars: np.ndarray    # (S,) float32


def _norm_cell(cell: Cell, shape: tuple[int, int]) -> tuple[float, float]:
    h, w = shape
    return (cell[0] / max(1, h - 1), cell[1] / max(1, w - 1))


def encode_individual(obs: MacroObservation, grid_shape: tuple[int, int],
                      total_cells: int) -> EncodedObs:
    """Per-robot scalar block: pose, detection flag, coverage, candidates,
    then a 7-value ledger entry per teammate (sorted by id)."""
    vals: list[float] = []
    vals.extend(_norm_cell(obs.position, grid_shape))
    vals.append(1.0 if obs.teammate_seen else 0.0)
    vals.append(obs.explored_count / total_cells)
    for cand in obs.candidates:
        vals.extend(_norm_cell(cand, grid_shape))
    for j in sorted(obs.teammates):
        info = obs.teammates[j]
        vals.extend(_norm_cell(info.position, grid_shape))
        vals.extend(_norm_cell(info.goal, grid_shape))
        vals.extend(_norm_cell(info.prev_goal, grid_shape))
        vals.append(min(obs.t - info.last_update, STALENESS_CAP) / STALENESS_CAP)
    return EncodedObs(channels=obs.channels.copy(),
                      scalars=np.asarray(vals, dtype=np.float32))


def encode_joint(obs: JointMacroObservation, grid_shape: tuple[int, int],
                 total_cells: int) -> EncodedObs:
    """Joint scalar layout: positions, detection flags, joint coverage,
    all candidate sets, current goals, previous goals."""
    vals: list[float] = []
    for pos in obs.positions:
        vals.extend(_norm_cell(pos, grid_shape))
    for seen in obs.teammate_seen:
        vals.append(1.0 if seen else 0.0)
    vals.append(obs.explored_count / total_cells)
    for per_robot in obs.candidates:
        for cand in per_robot:
            vals.extend(_norm_cell(cand, grid_shape))
    for goal in obs.goals:
        vals.extend(_norm_cell(goal, grid_shape))
    for goal in obs.prev_goals:
        vals.extend(_norm_cell(goal, grid_shape))
    return EncodedObs(channels=obs.channels.copy(),
                      scalars=np.asarray(vals, dtype=np.float32))


def to_canvas(channels: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Embed (4, h, w) channels into the fixed network canvas at the origin."""
    _, h, w = channels.shape
    if h > CANVAS or w > CANVAS:
        raise ValueError(f"grid {h}x{w} exceeds the {CANVAS}x{CANVAS} canvas")
    out = np.zeros((MAP_CHANNELS, CANVAS, CANVAS), dtype=dtype)
    out[:, :h, :w] = channels
    return out


def batch_inputs(batch: list[EncodedObs], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Stack encoded observations into (N, 4, 20, 20) maps and (N, S) scalars."""
    maps = np.stack([to_canvas(e.channels, dtype) for e in batch])
    scalars = np.stack([e.scalars.astype(dtype) for e in batch])
    return maps, scalars


def batch_sequences(seqs: list[list[EncodedObs]], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    """Stack equal-length encoded sequences into (N, T, ...) tensors."""
    maps = np.stack([[to_canvas(e.channels, dtype) for e in seq] for seq in seqs])
    scalars = np.stack([[e.scalars.astype(dtype) for e in seq] for seq in seqs])
    return maps, scalars
