"""A* path planning on the belief map and the macro-action executor.

The executor turns "navigate to goal candidate" into primitive actions until
the macro terminates: arrival, a fresh teammate detection, or getting stuck
(no path / step budget exhausted).
"""

from __future__ import annotations

import heapq

from .grid import ACTION_DELTAS, Cell
from .mapping import BeliefMap

RUNNING = "running"
DONE_ARRIVED = "done_arrived"
DONE_TEAMMATE = "done_teammate"
DONE_STUCK = "done_stuck"


def astar(belief: BeliefMap, start: Cell, goal: Cell) -> list[Cell] | None:
    """Minimum-length 4-connected path through known-free cells.

    The goal cell itself is admitted even when unexplored, as long as it is
    not a known obstacle. Returns the cell sequence from start to goal
    inclusive, or None when no path exists. Ties break on (f, h, row, col).
    """
    if belief.obstacles[goal]:
        return None
    if start == goal:
        return [start]
    free = belief.known_free
    h_grid, w_grid = belief.shape

    def heuristic(cell: Cell) -> int:
        return abs(cell[0] - goal[0]) + abs(cell[1] - goal[1])

    start_h = heuristic(start)
    open_heap: list[tuple[int, int, int, int]] = [(start_h, start_h, start[0], start[1])]
    g_score = {start: 0}
    came_from: dict[Cell, Cell] = {}
    closed: set[Cell] = set()
    while open_heap:
        f, h, r, c = heapq.heappop(open_heap)
        cell = (r, c)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while cell in came_from:
                cell = came_from[cell]
                path.append(cell)
            path.reverse()
            return path
        closed.add(cell)
        g = g_score[cell]
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h_grid and 0 <= nc < w_grid):
                continue
            nxt = (nr, nc)
            if nxt != goal and not free[nr, nc]:
                continue
            ng = g + 1
            if ng < g_score.get(nxt, 1 << 30):
                g_score[nxt] = ng
                came_from[nxt] = cell
                nh = heuristic(nxt)
                heapq.heappush(open_heap, (ng + nh, nh, nr, nc))
    return None


def _action_towards(a: Cell, b: Cell) -> str:
    for action, (dr, dc) in ACTION_DELTAS.items():
        if (a[0] + dr, a[1] + dc) == b:
            return action
    raise ValueError(f"cells {a} and {b} are not adjacent")


class MacroExecutor:
    """Per-robot state machine driving one macro action to termination.

    Call ``propose`` for the next primitive action, apply it through the
    simulator, then call ``conclude`` with the post-step state. Every macro
    runs at least one primitive timestep; the step budget is 3 * grid cells.
    """

    def __init__(self, goal: Cell, grid_shape: tuple[int, int]):
        self.goal = goal
        self.step_budget = 3 * grid_shape[0] * grid_shape[1]
        self.steps_taken = 0
        self.status = RUNNING
        self.path: list[Cell] = []     # remaining cells, next first
        self._stuck_pending = False
        self._last_action = "stay"
        self._expected: Cell | None = None

    def _path_invalid(self, belief: BeliefMap, position: Cell) -> bool:
        if not self.path:
            return True
        if self._expected is not None and position != self._expected:
            return True  # failed motion: replan from where we actually are
        for cell in self.path:
            if cell != self.goal and not belief.known_free[cell]:
                return True
        return False

    def propose(self, belief: BeliefMap, position: Cell) -> str:
        """Next primitive action; emits ``stay`` for degenerate or stuck macros."""
        if self.status != RUNNING:
            raise RuntimeError("macro already terminated")
        self._stuck_pending = False
        if position == self.goal:
            self._last_action = "stay"
            self._expected = position
            return "stay"
        if self._path_invalid(belief, position):
            full = astar(belief, position, self.goal)
            if full is None:
                self.path = []
                self._stuck_pending = True
                self._last_action = "stay"
                self._expected = position
                return "stay"
            self.path = full[1:]
        nxt = self.path[0]
        self._last_action = _action_towards(position, nxt)
        self._expected = nxt
        return self._last_action

    def conclude(self, position: Cell, teammate_event: bool) -> str:
        """Settle the macro status after the proposed action was applied."""
        self.steps_taken += 1
        if self.path and position == self.path[0]:
            self.path.pop(0)
        if position == self.goal:
            self.status = DONE_ARRIVED
        elif teammate_event:
            self.status = DONE_TEAMMATE
        elif self._stuck_pending or self.steps_taken >= self.step_budget:
            self.status = DONE_STUCK
        return self.status

    @property
    def done(self) -> bool:
        return self.status != RUNNING
