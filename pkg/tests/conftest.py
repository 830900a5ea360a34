"""Shared test oracles, independent of the implementation paths they check."""

from __future__ import annotations

from collections import deque

import numpy as np

from mrexplore.mapping import BeliefMap


def oracle_bfs_distance(free: np.ndarray, start, goal) -> int:
    """Plain BFS shortest-path length over a boolean free mask; -1 if cut off."""
    if start == goal:
        return 0
    h, w = free.shape
    dist = {start: 0}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nxt = (r + dr, c + dc)
            if nxt == goal:
                return dist[(r, c)] + 1
            if 0 <= nxt[0] < h and 0 <= nxt[1] < w and free[nxt] and nxt not in dist:
                dist[nxt] = dist[(r, c)] + 1
                queue.append(nxt)
    return -1


def oracle_flood_fill(free: np.ndarray, start) -> set:
    """All cells 4-connected to start through the free mask."""
    h, w = free.shape
    seen = {start}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nxt = (r + dr, c + dc)
            if 0 <= nxt[0] < h and 0 <= nxt[1] < w and free[nxt] and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def oracle_frontiers(belief: BeliefMap) -> set:
    """Per-cell brute-force frontier test."""
    out = set()
    h, w = belief.shape
    for r in range(h):
        for c in range(w):
            if not (belief.explored[r, c] and not belief.obstacles[r, c]):
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                nr, nc = r + dr, c + dc
                if 0 <= nr < h and 0 <= nc < w and not belief.explored[nr, nc]:
                    out.add((r, c))
                    break
    return out


def belief_from_ascii(rows: list[str]) -> BeliefMap:
    """'#' known obstacle, '.' known free, '?' unexplored."""
    belief = BeliefMap(len(rows), len(rows[0]))
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            if ch == ".":
                belief.explored[r, c] = True
            elif ch == "#":
                belief.explored[r, c] = True
                belief.obstacles[r, c] = True
            elif ch != "?":
                raise ValueError(f"bad map char {ch!r}")
    return belief


def random_belief(rng: np.random.Generator, h: int = 12, w: int = 12) -> BeliefMap:
    belief = BeliefMap(h, w)
    belief.explored = rng.random((h, w)) < rng.uniform(0.2, 0.9)
    belief.obstacles = belief.explored & (rng.random((h, w)) < 0.25)
    return belief


def central_difference(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f() w.r.t. array x, in place."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = f()
        flat[i] = orig - eps
        f_minus = f()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / scale))
