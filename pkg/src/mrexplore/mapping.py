"""Belief maps, map merging, frontier goal candidates, teammate bookkeeping.

Maps are four binary channels (explored, obstacles, robot positions, goal
candidates). The occupancy channels only ever gain bits; the position and
candidate channels are overlays recomputed whenever an observation is built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Cell, SensorReading

N_GOAL_CANDIDATES = 4
STALENESS_CAP = 50  # timesteps after which teammate info counts as fully stale

CHANNEL_NAMES = ("explored", "obstacles", "robot_positions", "goal_candidates")


class BeliefMap:
    """Per-robot (or merged global) belief over the grid."""

    def __init__(self, height: int, width: int):
        self.height = height
        self.width = width
        self.explored = np.zeros((height, width), dtype=bool)
        self.obstacles = np.zeros((height, width), dtype=bool)
        self.robot_positions = np.zeros((height, width), dtype=bool)
        self.goal_candidates = np.zeros((height, width), dtype=bool)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def known_free(self) -> np.ndarray:
        return self.explored & ~self.obstacles

    @property
    def explored_count(self) -> int:
        return int(self.explored.sum())

    def copy(self) -> "BeliefMap":
        out = BeliefMap(self.height, self.width)
        out.explored = self.explored.copy()
        out.obstacles = self.obstacles.copy()
        out.robot_positions = self.robot_positions.copy()
        out.goal_candidates = self.goal_candidates.copy()
        return out

    def channels(self) -> np.ndarray:
        """Stacked (4, h, w) uint8 channel image in CHANNEL_NAMES order."""
        return np.stack([self.explored, self.obstacles,
                         self.robot_positions, self.goal_candidates]).astype(np.uint8)

    def set_overlays(self, positions: list[Cell], candidates: list[Cell]) -> None:
        self.robot_positions[:] = False
        self.goal_candidates[:] = False
        for cell in positions:
            self.robot_positions[cell] = True
        for cell in candidates:
            self.goal_candidates[cell] = True

    def dump(self) -> str:
        """Debug snapshot: one 1/0 block per channel."""
        blocks = []
        for name, channel in zip(CHANNEL_NAMES, (self.explored, self.obstacles,
                                                 self.robot_positions, self.goal_candidates)):
            rows = ["".join("1" if v else "0" for v in row) for row in channel]
            blocks.append(f"CHANNEL {name}\n" + "\n".join(rows))
        return "\n".join(blocks) + "\n"


def update_map(belief: BeliefMap, reading: SensorReading) -> None:
    """Fold one sensor reading into the occupancy channels (bits only gain)."""
    if len(reading.cells) == 0:
        return
    rs, cs = reading.cells[:, 0], reading.cells[:, 1]
    belief.explored[rs, cs] = True
    occ = reading.occupied
    belief.obstacles[rs[occ], cs[occ]] = True


def merge_maps(a: BeliefMap, b: BeliefMap) -> BeliefMap:
    """Union of the occupancy channels; overlays are left to the caller."""
    if a.shape != b.shape:
        raise ValueError(f"map shape mismatch: {a.shape} vs {b.shape}")
    out = BeliefMap(a.height, a.width)
    out.explored = a.explored | b.explored
    out.obstacles = a.obstacles | b.obstacles
    return out


def extract_frontiers(belief: BeliefMap) -> set[Cell]:
    """Known-free cells with at least one unexplored 4-neighbor."""
    free = belief.known_free
    unexplored = ~belief.explored
    edge = np.zeros_like(free)
    edge[:-1, :] |= unexplored[1:, :]
    edge[1:, :] |= unexplored[:-1, :]
    edge[:, :-1] |= unexplored[:, 1:]
    edge[:, 1:] |= unexplored[:, :-1]
    rs, cs = np.nonzero(free & edge)
    return {(int(r), int(c)) for r, c in zip(rs, cs)}


def _dist(a: Cell, b: Cell) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def select_goal_candidates(frontiers: set[Cell], robot_position: Cell) -> list[Cell]:
    """Four spatially spread frontier cells via greedy farthest-point sampling.

    Seeded with the frontier nearest the robot; each following pick maximizes
    the minimum distance to the picks so far. Short frontier sets cycle, an
    empty set degenerates to the robot's own cell. Ties break on (row, col).
    """
    if not frontiers:
        return [robot_position] * N_GOAL_CANDIDATES
    ordered = sorted(frontiers)
    chosen = [min(ordered, key=lambda f: (_dist(f, robot_position), f))]
    remaining = [f for f in ordered if f != chosen[0]]
    while remaining and len(chosen) < N_GOAL_CANDIDATES:
        best = max(remaining,
                   key=lambda f: (min(_dist(f, c) for c in chosen), [-x for x in f]))
        chosen.append(best)
        remaining.remove(best)
    return [chosen[i % len(chosen)] for i in range(N_GOAL_CANDIDATES)]


@dataclass
class TeammateInfo:
    """Last-exchanged knowledge about one teammate.

    ``last_update`` is the time of the last full exchange; ``last_seen`` the
    time the position field was last refreshed (positions stay observable
    during dropout).
    """
    prev_goal: Cell
    position: Cell
    goal: Cell
    local_map: BeliefMap
    last_update: int = 0
    last_seen: int = 0


@dataclass
class RobotKnowledge:
    """Everything robot i carries between timesteps."""
    robot_id: int
    belief: BeliefMap
    teammates: dict[int, TeammateInfo] = field(default_factory=dict)
    prev_goal: Cell = (0, 0)
    goal: Cell = (0, 0)

    @classmethod
    def initial(cls, robot_id: int, n_robots: int, shape: tuple[int, int],
                spawns: list[Cell]) -> "RobotKnowledge":
        # spawn positions are mutually known at t=0; maps start empty
        know = cls(robot_id=robot_id, belief=BeliefMap(*shape),
                   prev_goal=spawns[robot_id], goal=spawns[robot_id])
        for j in range(n_robots):
            if j != robot_id:
                know.teammates[j] = TeammateInfo(
                    prev_goal=spawns[j], position=spawns[j], goal=spawns[j],
                    local_map=BeliefMap(*shape))
        return know

    def commit_goal(self, goal: Cell) -> None:
        self.prev_goal = self.goal
        self.goal = goal


def exchange_information(a: RobotKnowledge, b: RobotKnowledge,
                         in_range: bool, link_up: bool,
                         pos_a: Cell, pos_b: Cell, t: int) -> None:
    """Mutual information exchange under the dropout rules.

    In range with the link up: goals and maps refresh both ways and local maps
    merge. In range with the link down: only positions refresh. Out of range:
    nothing changes.
    """
    if not in_range:
        return
    ta, tb = a.teammates[b.robot_id], b.teammates[a.robot_id]
    ta.position = pos_b
    ta.last_seen = t
    tb.position = pos_a
    tb.last_seen = t
    if not link_up:
        return
    ta.prev_goal, ta.goal = b.prev_goal, b.goal
    tb.prev_goal, tb.goal = a.prev_goal, a.goal
    ta.local_map = b.belief.copy()
    tb.local_map = a.belief.copy()
    ta.last_update = t
    tb.last_update = t
    merged = merge_maps(a.belief, b.belief)
    a.belief.explored = merged.explored.copy()
    a.belief.obstacles = merged.obstacles.copy()
    b.belief.explored = merged.explored
    b.belief.obstacles = merged.obstacles


@dataclass
class MacroObservation:
    """Individual macro observation: everything one robot knows at a decision."""
    robot_id: int
    position: Cell
    teammate_seen: bool
    teammates: dict[int, TeammateInfo]
    channels: np.ndarray          # (4, h, w) uint8 snapshot with overlays applied
    explored_count: int
    candidates: list[Cell]
    goal: Cell
    prev_goal: Cell
    t: int


@dataclass
class JointMacroObservation:
    """Joint macro observation over the merged global map."""
    positions: list[Cell]
    teammate_seen: list[bool]
    channels: np.ndarray          # (4, h, w) uint8 global map snapshot
    explored_count: int
    candidates: list[list[Cell]]  # per robot
    goals: list[Cell]
    prev_goals: list[Cell]
    t: int


def build_macro_observation(know: RobotKnowledge, position: Cell,
                            teammate_seen: bool, t: int) -> MacroObservation:
    """Assemble z_i with freshly extracted goal candidates and overlays."""
    candidates = select_goal_candidates(extract_frontiers(know.belief), position)
    overlay = know.belief
    positions = [position] + [info.position for _, info in sorted(know.teammates.items())]
    overlay.set_overlays(positions, candidates)
    return MacroObservation(
        robot_id=know.robot_id, position=position, teammate_seen=teammate_seen,
        teammates=know.teammates, channels=overlay.channels(),
        explored_count=overlay.explored_count, candidates=candidates,
        goal=know.goal, prev_goal=know.prev_goal, t=t)


def build_joint_observation(knowledge: list[RobotKnowledge], positions: list[Cell],
                            teammate_seen: list[bool], global_map: BeliefMap,
                            candidates: list[list[Cell]], t: int) -> JointMacroObservation:
    """Assemble the joint observation from the merged map and true positions."""
    overlay = global_map
    marks = [cell for per_robot in candidates for cell in per_robot]
    overlay.set_overlays(list(positions), marks)
    return JointMacroObservation(
        positions=list(positions), teammate_seen=list(teammate_seen),
        channels=overlay.channels(), explored_count=overlay.explored_count,
        candidates=[list(c) for c in candidates],
        goals=[k.goal for k in knowledge], prev_goals=[k.prev_goal for k in knowledge],
        t=t)
