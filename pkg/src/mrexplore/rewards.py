"""Per-step reward terms for individual robots and the team.

Individual: +1 per newly observed cell, -1 per re-observed cell, plus a
proximity penalty that grows exponentially with the count of consecutive
timesteps a teammate stays detected (capped at -15 per teammate).
Team: same cell terms over the joint observation, -1 per timestep, +100 on
completing the map.
"""

from __future__ import annotations

import math

import numpy as np

COMPLETION_BONUS = 100.0
STEP_COST = 1.0
PROXIMITY_CAP = -15.0


def proximity_penalty(rho: int) -> float:
    """Penalty for one teammate detected for ``rho`` consecutive timesteps."""
    if rho < 2:
        return 0.0
    if rho > 7:
        return PROXIMITY_CAP
    return -math.sqrt(math.exp(rho) / 5.0)


def _cell_counts(cells: np.ndarray, explored: np.ndarray) -> tuple[int, int]:
    if len(cells) == 0:
        return 0, 0
    known = int(explored[cells[:, 0], cells[:, 1]].sum())
    return len(cells) - known, known


def compute_step_rewards(robot_cells: list[np.ndarray],
                         robot_explored: list[np.ndarray],
                         team_explored: np.ndarray,
                         detected: list[list[int]],
                         rho: list[dict[int, int]],
                         completed_now: bool) -> tuple[float, list[float]]:
    """Rewards for one timestep.

    ``robot_cells[i]`` are the cells robot i observed this step; the explored
    masks are the pre-update belief states. ``detected[i]`` lists teammates
    currently detected by robot i and ``rho[i][j]`` their consecutive counts.
    Returns (team reward, per-robot rewards).
    """
    individual = []
    shape = team_explored.shape
    team_mask = np.zeros(shape, dtype=bool)
    for i, cells in enumerate(robot_cells):
        new, known = _cell_counts(cells, robot_explored[i])
        prox = sum(proximity_penalty(rho[i][j]) for j in detected[i])
        individual.append(float(new - known + prox))
        if len(cells):
            team_mask[cells[:, 0], cells[:, 1]] = True
    team_new = int((team_mask & ~team_explored).sum())
    team_known = int((team_mask & team_explored).sum())
    team = float(team_new - team_known) - STEP_COST
    if completed_now:
        team += COMPLETION_BONUS
    return team, individual
