"""Shared episode substrate: one team exploring one environment.

Every policy (learned, classical, random) drives an episode through the same
cycle: assign goals to robots whose macro terminated, then advance one
primitive timestep. The substrate owns motion, sensing, detection ledgers,
communication links, map exchange, rewards, and the metric series, so that
method comparisons differ in goal selection only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    GridEnvironment,
    RobotState,
    detect_teammates,
    sense,
    step_robot,
    CommLinkTable,
    SENSE_MISS_PROB,
    Cell,
)
from .mapping import (
    BeliefMap,
    JointMacroObservation,
    MacroObservation,
    RobotKnowledge,
    build_joint_observation,
    build_macro_observation,
    exchange_information,
    extract_frontiers,
    select_goal_candidates,
    update_map,
)
from .planning import MacroExecutor
from .rewards import compute_step_rewards


@dataclass
class SimStreams:
    """Independent seeded RNG streams, one per stochastic subsystem."""
    motion: np.random.Generator
    sensing: np.random.Generator
    links: np.random.Generator

    @classmethod
    def from_seed(cls, seed) -> "SimStreams":
        seq = seed if isinstance(seed, np.random.SeedSequence) \
            else np.random.SeedSequence(seed)
        motion, sensing, links = (np.random.default_rng(s) for s in seq.spawn(3))
        return cls(motion, sensing, links)


@dataclass
class StepOutcome:
    terminated: list[int]
    team_reward: float
    robot_rewards: list[float]
    completed_now: bool
    new_cells: int
    known_cells: int


@dataclass
class StepStat:
    new_cells: int
    known_cells: int
    completed: bool


class TeamRun:
    """One episode of a robot team in one environment."""

    def __init__(self, env: GridEnvironment, spawns: list[Cell], csp: float,
                 streams: SimStreams, step_cap: int,
                 miss_prob: float = SENSE_MISS_PROB, record_steps: bool = False):
        self.env = env
        self.streams = streams
        self.step_cap = step_cap
        self.miss_prob = miss_prob
        self.n = len(spawns)
        self.robots = [RobotState(id=i, position=spawns[i],
                                  rho_counters={j: 0 for j in range(self.n) if j != i})
                       for i in range(self.n)]
        self.knowledge = [RobotKnowledge.initial(i, self.n, env.shape, spawns)
                          for i in range(self.n)]
        self.links = CommLinkTable(self.n, csp)
        self.global_map = BeliefMap(*env.shape)
        self.executors: list[MacroExecutor | None] = [None] * self.n
        self.t = 0
        self.steps = 0
        self.joint_distance = 0
        self.distances = [0] * self.n
        self.interactions = 0
        self.complete = False
        self.q = [False] * self.n
        self.series_explored: list[int] = []
        self.series_free: list[int] = []
        self.series_distance: list[int] = []
        self.step_stats: list[StepStat] = [] if record_steps else None
        self._free_total = int((~env.obstacles).sum())

        # initial sensing, detection, and exchange before any motion
        positions = self.positions
        for i in range(self.n):
            reading = sense(env, i, positions, streams.sensing, miss_prob)
            update_map(self.knowledge[i].belief, reading)
            update_map(self.global_map, reading)
        in_range = self._in_range_pairs()
        self.links.tick(in_range, streams.links)
        self._exchange(in_range)
        for i in range(self.n):
            seen, _ = detect_teammates(positions, i, env)
            self.q[i] = seen
        self._update_rho()
        self.series_explored.append(self.global_map.explored_count)
        self.series_free.append(self._free_explored())
        self.series_distance.append(0)

    @property
    def positions(self) -> list[Cell]:
        return [r.position for r in self.robots]

    def _free_explored(self) -> int:
        return int((self.global_map.explored & ~self.env.obstacles).sum())

    @property
    def done(self) -> bool:
        return self.complete or self.steps >= self.step_cap

    def needs_decision(self) -> list[int]:
        return [i for i in range(self.n)
                if self.executors[i] is None or self.executors[i].done]

    def assign_goal(self, i: int, goal: Cell) -> None:
        self.knowledge[i].commit_goal(goal)
        self.executors[i] = MacroExecutor(goal, self.env.shape)

    def candidates_for(self, i: int) -> list[Cell]:
        know = self.knowledge[i]
        return select_goal_candidates(extract_frontiers(know.belief),
                                      self.robots[i].position)

    def observe_individual(self, i: int) -> MacroObservation:
        return build_macro_observation(self.knowledge[i], self.robots[i].position,
                                       self.q[i], self.t)

    def observe_joint(self) -> JointMacroObservation:
        candidates = [self.candidates_for(i) for i in range(self.n)]
        return build_joint_observation(self.knowledge, self.positions, self.q,
                                       self.global_map, candidates, self.t)

    def _in_range_pairs(self) -> set[tuple[int, int]]:
        pairs = set()
        positions = self.positions
        for i in range(self.n):
            _, _, cell_set = self.env.visible_from(positions[i])
            for j in range(i + 1, self.n):
                if positions[j] in cell_set:
                    pairs.add((i, j))
        return pairs

    def _exchange(self, in_range: set[tuple[int, int]]) -> None:
        positions = self.positions
        for i, j in sorted(in_range):
            exchange_information(self.knowledge[i], self.knowledge[j],
                                 True, self.links.is_up(i, j),
                                 positions[i], positions[j], self.t)

    def _update_rho(self) -> None:
        positions = self.positions
        for i in range(self.n):
            _, visible = detect_teammates(positions, i, self.env)
            seen = {j for j, _ in visible}
            counters = self.robots[i].rho_counters
            for j in counters:
                counters[j] = counters[j] + 1 if j in seen else 0

    def step(self) -> StepOutcome:
        """Advance one primitive timestep for every robot."""
        if self.done:
            raise RuntimeError("episode already finished")
        for i in range(self.n):
            if self.executors[i] is None or self.executors[i].done:
                raise RuntimeError(f"robot {i} has no running macro")
        self.t += 1
        env = self.env

        actions = [self.executors[i].propose(self.knowledge[i].belief,
                                             self.robots[i].position)
                   for i in range(self.n)]
        for i in range(self.n):
            new_pos = step_robot(env, self.robots[i].position, actions[i],
                                 self.streams.motion)
            if new_pos != self.robots[i].position:
                self.distances[i] += 1
                self.joint_distance += 1
            self.robots[i].position = new_pos

        positions = self.positions
        readings = [sense(env, i, positions, self.streams.sensing, self.miss_prob)
                    for i in range(self.n)]

        detection = [detect_teammates(positions, i, env) for i in range(self.n)]
        q_new = [seen for seen, _ in detection]
        q_events = [q_new[i] and not self.q[i] for i in range(self.n)]
        self._update_rho()

        # rewards read the pre-update explored masks
        union = np.zeros(env.shape, dtype=bool)
        for reading in readings:
            if len(reading.cells):
                union[reading.cells[:, 0], reading.cells[:, 1]] = True
        post_explored = self.global_map.explored | union
        free = ~env.obstacles
        completed_now = (not self.complete
                         and int((post_explored & free).sum()) == self._free_total)
        team_r, robot_rs = compute_step_rewards(
            [reading.cells for reading in readings],
            [self.knowledge[i].belief.explored for i in range(self.n)],
            self.global_map.explored,
            [sorted(j for j, _ in detection[i][1]) for i in range(self.n)],
            [self.robots[i].rho_counters for i in range(self.n)],
            completed_now)
        new_cells = int((union & ~self.global_map.explored).sum())
        known_cells = int((union & self.global_map.explored).sum())

        for i in range(self.n):
            update_map(self.knowledge[i].belief, readings[i])
            update_map(self.global_map, readings[i])

        in_range = self._in_range_pairs()
        self.links.tick(in_range, self.streams.links)
        self._exchange(in_range)
        self.q = q_new
        self.interactions += len(in_range)

        terminated = []
        for i in range(self.n):
            status = self.executors[i].conclude(positions[i], q_events[i])
            if status != "running":
                terminated.append(i)

        self.steps += 1
        if completed_now:
            self.complete = True
        self.series_explored.append(self.global_map.explored_count)
        self.series_free.append(self._free_explored())
        self.series_distance.append(self.joint_distance)
        if self.step_stats is not None:
            self.step_stats.append(StepStat(new_cells, known_cells, completed_now))
        return StepOutcome(terminated=terminated, team_reward=team_r,
                           robot_rewards=robot_rs, completed_now=completed_now,
                           new_cells=new_cells, known_cells=known_cells)


def corner_spawns(env: GridEnvironment, corner: Cell, team_size: int) -> list[Cell]:
    """The ``team_size`` free cells nearest a corner, deterministic order."""
    frees = env.free_cells()
    frees.sort(key=lambda cell: ((cell[0] - corner[0]) ** 2 + (cell[1] - corner[1]) ** 2,
                                 cell))
    return frees[:team_size]


def random_spawns(env: GridEnvironment, team_size: int,
                  rng: np.random.Generator) -> list[Cell]:
    frees = env.free_cells()
    idx = rng.integers(len(frees), size=team_size)
    return [frees[int(k)] for k in idx]
