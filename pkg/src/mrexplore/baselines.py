"""Classical decentralized goal selectors: nearest-frontier, utility-based,
and planning-based (online value iteration with teammate occupancy spread).

All three read the same belief-map substrate the learned policies use and
return a goal cell for the shared macro executor, so metric comparisons
isolate the selection strategy.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .grid import Cell, SENSE_RANGE
from .mapping import BeliefMap, extract_frontiers

UB_DISTANCE_WEIGHT = 3.0
UB_COORDINATION_PENALTY = 60.0


def bfs_distances(free: np.ndarray, start: Cell) -> np.ndarray:
    """4-connected path distances through ``free`` cells; -1 is unreachable.

    The start cell is traversable even when not marked free (a teammate's
    last-seen cell may be outside our explored area).
    """
    h, w = free.shape
    dist = np.full((h, w), -1, dtype=np.int32)
    dist[start] = 0
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        d = dist[r, c] + 1
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and free[nr, nc] and dist[nr, nc] < 0:
                dist[nr, nc] = d
                queue.append((nr, nc))
    return dist


def _box_sum(grid: np.ndarray, radius: int) -> np.ndarray:
    """Sum of ``grid`` over the (2r+1)^2 Chebyshev box around each cell."""
    h, w = grid.shape
    padded = np.zeros((h + 2 * radius, w + 2 * radius), dtype=np.float64)
    padded[radius:radius + h, radius:radius + w] = grid
    csum = padded.cumsum(axis=0).cumsum(axis=1)
    csum = np.pad(csum, ((1, 0), (1, 0)))
    k = 2 * radius + 1
    return (csum[k:, k:] - csum[:-k, k:] - csum[k:, :-k] + csum[:-k, :-k])


def information_gain(belief: BeliefMap) -> np.ndarray:
    """Per-cell count of unexplored cells within sensing range."""
    return _box_sum((~belief.explored).astype(np.float64), SENSE_RANGE)


def nf_select_goal(belief: BeliefMap, position: Cell) -> Cell:
    """Reachable frontier with the smallest path distance; ties on (row, col)."""
    frontiers = sorted(extract_frontiers(belief))
    if not frontiers:
        return position
    dist = bfs_distances(belief.known_free, position)
    reachable = [(int(dist[f]), f) for f in frontiers if dist[f] >= 0]
    if not reachable:
        return position
    return min(reachable)[1]


def ub_select_goal(belief: BeliefMap, position: Cell,
                   teammate_positions: list[Cell],
                   distance_weight: float = UB_DISTANCE_WEIGHT,
                   coordination_penalty: float = UB_COORDINATION_PENALTY) -> Cell:
    """Maximize information gain minus travel cost minus a flat penalty on
    each teammate's nearest frontier."""
    frontiers = sorted(extract_frontiers(belief))
    if not frontiers:
        return position
    dist = bfs_distances(belief.known_free, position)
    gain = information_gain(belief)
    penalized: set[Cell] = set()
    for tpos in teammate_positions:
        tdist = bfs_distances(belief.known_free, tpos)
        options = [(int(tdist[f]), f) for f in frontiers if tdist[f] >= 0]
        if options:
            penalized.add(min(options)[1])
    best: tuple[float, Cell] | None = None
    for f in frontiers:
        if dist[f] < 0:
            continue
        utility = (float(gain[f]) - distance_weight * float(dist[f])
                   - (coordination_penalty if f in penalized else 0.0))
        if best is None or utility > best[0] or (utility == best[0] and f < best[1]):
            best = (utility, f)
    return best[1] if best is not None else position


@dataclass
class PbValueModel:
    """Online value-iteration model with propagated teammate occupancy."""
    discount: float = 0.95
    tolerance: float = 1e-3
    max_sweeps: int = 200
    occupancy: dict[int, dict[Cell, float]] = field(default_factory=dict)
    values: np.ndarray | None = None


def pb_propagate_teammates(model: PbValueModel, belief: BeliefMap,
                           last_known: dict[int, Cell],
                           elapsed: dict[int, int]) -> dict[int, dict[Cell, float]]:
    """Uniform occupancy over the cells a teammate could have reached.

    The wavefront expands through known-free cells up to the elapsed step
    count from the last observed position; zero elapsed is a point mass.
    """
    model.occupancy = {}
    for j, cell in sorted(last_known.items()):
        steps = elapsed[j]
        dist = bfs_distances(belief.known_free, cell)
        rs, cs = np.nonzero((dist >= 0) & (dist <= steps))
        cells = sorted((int(r), int(c)) for r, c in zip(rs, cs))
        if not cells:
            cells = [cell]
        p = 1.0 / len(cells)
        model.occupancy[j] = {c: p for c in cells}
    return model.occupancy


def _value_iteration(model: PbValueModel, belief: BeliefMap) -> np.ndarray:
    free = belief.known_free
    h, w = free.shape
    mass = np.zeros((h, w), dtype=np.float64)
    for dist_map in model.occupancy.values():
        for cell, p in dist_map.items():
            mass[cell] += p
    reward = information_gain(belief) * (1.0 - _box_sum(mass, SENSE_RANGE))
    reward[~free] = 0.0

    neg = -np.inf
    values = np.zeros((h, w), dtype=np.float64)
    values[~free] = neg
    for _ in range(model.max_sweeps):
        padded = np.full((h + 2, w + 2), neg)
        padded[1:-1, 1:-1] = values
        best_next = np.maximum.reduce([
            values,
            padded[:-2, 1:-1], padded[2:, 1:-1],
            padded[1:-1, :-2], padded[1:-1, 2:],
        ])
        new_values = np.where(free, reward + model.discount * best_next, neg)
        residual = np.max(np.abs(new_values[free] - values[free])) if free.any() else 0.0
        values = new_values
        if residual < model.tolerance:
            break
    model.values = values
    return values


def pb_select_goal(model: PbValueModel, belief: BeliefMap, position: Cell) -> Cell:
    """Frontier with the highest converged value along the greedy-policy path."""
    frontiers = extract_frontiers(belief)
    if not frontiers:
        return position
    values = _value_iteration(model, belief)
    free = belief.known_free
    h, w = free.shape

    path = [position]
    seen = {position}
    current = position
    for _ in range(int(free.sum())):
        best = current
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = current[0] + dr, current[1] + dc
            if 0 <= nr < h and 0 <= nc < w and free[nr, nc]:
                cand = (nr, nc)
                if (values[cand] > values[best]
                        or (values[cand] == values[best] and cand < best)):
                    best = cand
        if best == current or best in seen:
            break
        path.append(best)
        seen.add(best)
        current = best

    on_path = [f for f in path if f in frontiers]
    pool = on_path if on_path else sorted(frontiers)
    best_f = max(pool, key=lambda f: (values[f], [-x for x in f]))
    if values[best_f] == -np.inf:
        return position
    return best_f


def classical_policy_step(kind: str, belief: BeliefMap, position: Cell,
                          teammate_positions: list[Cell],
                          elapsed: dict[int, int] | None = None,
                          model: PbValueModel | None = None) -> Cell:
    """Dispatch to a selector; all kinds run under the shared macro executor."""
    if kind == "nf":
        return nf_select_goal(belief, position)
    if kind == "ub":
        return ub_select_goal(belief, position, teammate_positions)
    if kind == "pb":
        if model is None:
            model = PbValueModel()
        last_known = {j: pos for j, pos in enumerate(teammate_positions)}
        pb_propagate_teammates(model, belief, last_known,
                               elapsed or {j: 0 for j in last_known})
        return pb_select_goal(model, belief, position)
    raise ValueError(f"unknown classical policy {kind!r}")
