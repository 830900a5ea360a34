"""Ground-truth grid world: generation, line of sight, sensing, motion, comm links.

Everything here is seeded and deterministic. Stochastic subsystems (motion,
sensing, links) each take their own ``numpy.random.Generator`` so tests can
pin one source of noise at a time.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

Cell = tuple[int, int]

SENSE_RANGE = 4          # Chebyshev radius, cells
SENSE_MISS_PROB = 0.1    # per-cell chance a visible cell goes unreported
MOVE_SUCCESS_PROB = 0.9
DROPOUT_TICKS = 7        # duration of one communication dropout

ACTIONS = ("up", "down", "left", "right", "stay")
ACTION_DELTAS = {
    "up": (-1, 0),
    "down": (1, 0),
    "left": (0, -1),
    "right": (0, 1),
    "stay": (0, 0),
}

_GENERATION_ATTEMPTS = 64


class GridGenerationError(RuntimeError):
    """Raised when no valid grid could be produced within the attempt budget."""


class GridEnvironment:
    """Immutable occupancy grid with designated spawn-corner cells.

    ``obstacles`` is a bool array indexed ``[row, col]``. Free space is a
    single 4-connected component and all spawn cells are free.
    """

    def __init__(self, width: int, height: int, density: float, seed: int,
                 obstacles: np.ndarray, spawn_cells: tuple[Cell, ...]):
        self.width = width
        self.height = height
        self.density = density
        self.seed = seed
        self.obstacles = obstacles
        self.spawn_cells = spawn_cells
        self._visible_cache: dict[Cell, tuple[np.ndarray, np.ndarray, frozenset[Cell]]] = {}

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def total_cells(self) -> int:
        return self.width * self.height

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.obstacles[cell]

    def free_cells(self) -> list[Cell]:
        rs, cs = np.nonzero(~self.obstacles)
        return [(int(r), int(c)) for r, c in zip(rs, cs)]

    def visible_from(self, origin: Cell) -> tuple[np.ndarray, np.ndarray, frozenset[Cell]]:
        """All cells within Chebyshev SENSE_RANGE of ``origin`` passing line of sight.

        Returns ``(cells (k,2), occupied (k,), cell set)``; cached per origin
        since the ground truth never changes.
        """
        hit = self._visible_cache.get(origin)
        if hit is not None:
            return hit
        r0, c0 = origin
        cells: list[Cell] = []
        for r in range(max(0, r0 - SENSE_RANGE), min(self.height, r0 + SENSE_RANGE + 1)):
            for c in range(max(0, c0 - SENSE_RANGE), min(self.width, c0 + SENSE_RANGE + 1)):
                if line_of_sight(self, origin, (r, c)):
                    cells.append((r, c))
        arr = np.array(cells, dtype=np.int64)
        occ = self.obstacles[arr[:, 0], arr[:, 1]]
        entry = (arr, occ, frozenset(cells))
        self._visible_cache[origin] = entry
        return entry

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GridEnvironment):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and self.density == other.density and self.seed == other.seed
                and np.array_equal(self.obstacles, other.obstacles)
                and self.spawn_cells == other.spawn_cells)


@dataclass
class RobotState:
    """Pose plus the per-teammate consecutive-detection counters."""
    id: int
    position: Cell
    rho_counters: dict[int, int] = field(default_factory=dict)


@dataclass
class SensorReading:
    origin: Cell
    cells: np.ndarray          # (k, 2) observed cell coordinates
    occupied: np.ndarray       # (k,) ground-truth occupancy of each observed cell
    teammates: list[tuple[int, Cell]]  # visible teammates (pre-drop), by id


def supercover_cells(a: Cell, b: Cell) -> list[Cell]:
    """Every cell the center-to-center segment from a to b passes through.

    Corner crossings include both side cells, so the result is symmetric in
    its endpoints.
    """
    (r0, c0), (r1, c1) = a, b
    dr, dc = r1 - r0, c1 - c0
    nr, nc = abs(dr), abs(dc)
    sr = 1 if dr > 0 else -1
    sc = 1 if dc > 0 else -1
    cells = [(r0, c0)]
    r, c = r0, c0
    ir = ic = 0
    while ir < nr or ic < nc:
        # next half-grid crossing: compare (ir + 1/2)/nr vs (ic + 1/2)/nc
        t_r = (1 + 2 * ir) * nc
        t_c = (1 + 2 * ic) * nr
        if nr == 0:
            t_r, t_c = 1, 0
        elif nc == 0:
            t_r, t_c = 0, 1
        if t_r == t_c:
            cells.append((r + sr, c))
            cells.append((r, c + sc))
            r += sr
            c += sc
            ir += 1
            ic += 1
            cells.append((r, c))
        elif t_r < t_c:
            r += sr
            ir += 1
            cells.append((r, c))
        else:
            c += sc
            ic += 1
            cells.append((r, c))
    return cells


def line_of_sight(env: GridEnvironment, from_cell: Cell, to_cell: Cell) -> bool:
    """True iff no obstacle lies strictly between the two cell centers."""
    if from_cell == to_cell:
        return True
    for cell in supercover_cells(from_cell, to_cell):
        if cell == from_cell or cell == to_cell:
            continue
        if env.obstacles[cell]:
            return False
    return True


def _flood_fill(free: np.ndarray, start: Cell) -> np.ndarray:
    """Bool mask of free cells 4-connected to ``start``."""
    h, w = free.shape
    seen = np.zeros_like(free)
    if not free[start]:
        return seen
    seen[start] = True
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and free[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                queue.append((nr, nc))
    return seen


def _free_components(free: np.ndarray) -> list[list[Cell]]:
    h, w = free.shape
    remaining = free.copy()
    components = []
    for r in range(h):
        for c in range(w):
            if remaining[r, c]:
                mask = _flood_fill(remaining, (r, c))
                rs, cs = np.nonzero(mask)
                components.append([(int(rr), int(cc)) for rr, cc in zip(rs, cs)])
                remaining &= ~mask
    return components


def _carve_corridor(obstacles: np.ndarray, a: Cell, b: Cell) -> None:
    """Clear an L-shaped corridor (rows first) between two cells."""
    r, c = a
    while r != b[0]:
        r += 1 if b[0] > r else -1
        obstacles[r, c] = False
    while c != b[1]:
        c += 1 if b[1] > c else -1
        obstacles[r, c] = False


def _connect_free_space(obstacles: np.ndarray) -> None:
    free = ~obstacles
    components = _free_components(free)
    while len(components) > 1:
        components.sort(key=len, reverse=True)
        a_cells, b_cells = components[0], components[1]
        best = None
        for ca in a_cells:
            for cb in b_cells:
                d = abs(ca[0] - cb[0]) + abs(ca[1] - cb[1])
                if best is None or d < best[0]:
                    best = (d, ca, cb)
        _carve_corridor(obstacles, best[1], best[2])
        components = _free_components(~obstacles)


def generate_environment(width: int, height: int, density: float, seed: int) -> GridEnvironment:
    """Seeded unstructured grid: blob-scattered obstacles, connected free space.

    The realized obstacle fraction stays within 2 percentage points of the
    request and the four corner cells are kept free as spawn anchors.
    Identical arguments produce bit-identical grids.
    """
    if not (0.0 <= density <= 0.8):
        raise ValueError(f"density out of range [0, 0.8]: {density}")
    if width < 5 or height < 5:
        raise ValueError(f"grid must be at least 5x5, got {width}x{height}")

    total = width * height
    target = round(density * total)
    corners = ((0, 0), (0, width - 1), (height - 1, 0), (height - 1, width - 1))

    for attempt in range(_GENERATION_ATTEMPTS):
        rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, attempt])
        obstacles = np.zeros((height, width), dtype=bool)
        count = 0
        # scatter 1-3 cell blobs until the target count is reached
        guard = 0
        while count < target and guard < 50 * total:
            guard += 1
            r = int(rng.integers(height))
            c = int(rng.integers(width))
            for _ in range(int(rng.integers(1, 4))):
                if not obstacles[r, c]:
                    obstacles[r, c] = True
                    count += 1
                    if count >= target:
                        break
                dr, dc = ACTION_DELTAS[ACTIONS[int(rng.integers(4))]]
                if 0 <= r + dr < height and 0 <= c + dc < width:
                    r, c = r + dr, c + dc
        for cell in corners:
            obstacles[cell] = False
        _connect_free_space(obstacles)

        # carving may have dropped the density; top up without disconnecting
        count = int(obstacles.sum())
        if count < target:
            frees = [(int(r), int(c)) for r, c in zip(*np.nonzero(~obstacles))
                     if (int(r), int(c)) not in corners]
            order = rng.permutation(len(frees))
            for idx in order:
                if count >= target:
                    break
                cell = frees[idx]
                if obstacles[cell]:
                    continue
                obstacles[cell] = True
                if _flood_fill(~obstacles, corners[0]).sum() == total - count - 1:
                    count += 1
                else:
                    obstacles[cell] = False

        fraction = obstacles.sum() / total
        connected = _flood_fill(~obstacles, corners[0]).sum() == total - obstacles.sum()
        if abs(fraction - density) <= 0.02 and connected:
            return GridEnvironment(width, height, density, seed, obstacles, corners)

    raise GridGenerationError(
        f"no valid {width}x{height} grid at density {density} for seed {seed}")


def write_grid(env: GridEnvironment) -> str:
    """Text form: header line then one row per line (# obstacle, . free, S spawn)."""
    spawn = set(env.spawn_cells)
    lines = [f"GRID {env.width} {env.height} {env.density!r} {env.seed}"]
    for r in range(env.height):
        row = []
        for c in range(env.width):
            if env.obstacles[r, c]:
                row.append("#")
            elif (r, c) in spawn:
                row.append("S")
            else:
                row.append(".")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def parse_grid(text: str) -> GridEnvironment:
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split()
    if len(header) != 5 or header[0] != "GRID":
        raise ValueError(f"bad grid header: {lines[0]!r}")
    width, height = int(header[1]), int(header[2])
    density, seed = float(header[3]), int(header[4])
    if len(lines) != height + 1:
        raise ValueError(f"expected {height} rows, got {len(lines) - 1}")
    obstacles = np.zeros((height, width), dtype=bool)
    spawns: list[Cell] = []
    for r, line in enumerate(lines[1:]):
        if len(line) != width:
            raise ValueError(f"row {r} has width {len(line)}, expected {width}")
        for c, ch in enumerate(line):
            if ch == "#":
                obstacles[r, c] = True
            elif ch == "S":
                spawns.append((r, c))
            elif ch != ".":
                raise ValueError(f"bad cell character {ch!r} at row {r}")
    return GridEnvironment(width, height, density, seed, obstacles, tuple(spawns))


def sense(env: GridEnvironment, robot_id: int, all_positions: list[Cell],
          rng: np.random.Generator, miss_prob: float = SENSE_MISS_PROB) -> SensorReading:
    """One sensor sweep from the robot's cell.

    Visible set = Chebyshev SENSE_RANGE square filtered by line of sight.
    Each visible cell except the robot's own is independently dropped with
    ``miss_prob``; teammates are reported from the pre-drop set.
    """
    origin = all_positions[robot_id]
    cells, occ, cell_set = env.visible_from(origin)
    keep = rng.random(len(cells)) >= miss_prob
    own = (cells[:, 0] == origin[0]) & (cells[:, 1] == origin[1])
    keep |= own
    teammates = [(i, pos) for i, pos in enumerate(all_positions)
                 if i != robot_id and pos in cell_set]
    return SensorReading(origin=origin, cells=cells[keep], occupied=occ[keep],
                         teammates=teammates)


def detect_teammates(all_positions: list[Cell], robot_id: int,
                     env: GridEnvironment) -> tuple[bool, list[tuple[int, Cell]]]:
    """Teammate visibility check (no sensing noise): in range and in line of sight."""
    _, _, cell_set = env.visible_from(all_positions[robot_id])
    visible = [(i, pos) for i, pos in enumerate(all_positions)
               if i != robot_id and pos in cell_set]
    return bool(visible), visible


def step_robot(env: GridEnvironment, position: Cell, action: str,
               rng: np.random.Generator) -> Cell:
    """Apply one primitive action; moves succeed with MOVE_SUCCESS_PROB.

    Blocked or failed moves leave the robot in place. ``stay`` always succeeds.
    """
    if action not in ACTION_DELTAS:
        raise ValueError(f"unknown action {action!r}")
    if action == "stay":
        return position
    dr, dc = ACTION_DELTAS[action]
    target = (position[0] + dr, position[1] + dc)
    if not env.in_bounds(target) or env.obstacles[target]:
        return position
    if rng.random() < MOVE_SUCCESS_PROB:
        return target
    return position


@dataclass
class LinkState:
    status: str = "up"            # "up" | "down"
    down_remaining: int = 0
    was_in_range: bool = False


class CommLinkTable:
    """Pairwise communication links with entry-triggered dropout.

    On the tick a pair enters mutual sensing range while up, a Bernoulli(csp)
    trial runs; failure silences the link for exactly DROPOUT_TICKS ticks.
    Recovery and re-trials follow the range-entry events only.
    """

    def __init__(self, n_robots: int, csp: float):
        self.csp = csp
        self.links = {(i, j): LinkState()
                      for i in range(n_robots) for j in range(i + 1, n_robots)}

    @staticmethod
    def _key(i: int, j: int) -> tuple[int, int]:
        return (i, j) if i < j else (j, i)

    def tick(self, in_range_pairs: set[tuple[int, int]], rng: np.random.Generator) -> None:
        for key in sorted(self.links):
            link = self.links[key]
            if link.status == "down":
                link.down_remaining -= 1
                if link.down_remaining <= 0:
                    link.status = "up"
                    link.down_remaining = 0
            in_range = key in in_range_pairs
            if in_range and not link.was_in_range and link.status == "up":
                if rng.random() >= self.csp:
                    link.status = "down"
                    link.down_remaining = DROPOUT_TICKS
            link.was_in_range = in_range

    def is_up(self, i: int, j: int) -> bool:
        return self.links[self._key(i, j)].status == "up"

    def exchange_ok(self, i: int, j: int, in_range: bool) -> bool:
        return in_range and self.is_up(i, j)
