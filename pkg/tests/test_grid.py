"""Sim-core checks: generation, line of sight, sensing, motion, comm links."""

import numpy as np
import pytest

from conftest import oracle_flood_fill
from mrexplore.grid import (
    CommLinkTable,
    detect_teammates,
    generate_environment,
    line_of_sight,
    parse_grid,
    sense,
    step_robot,
    supercover_cells,
    write_grid,
)


def open_env(width=20, height=20):
    return generate_environment(width, height, 0.0, 1)


def test_zero_density_all_free():
    env = open_env()
    assert not env.obstacles.any()


def test_generation_deterministic():
    a = generate_environment(20, 20, 0.5, 77)
    b = generate_environment(20, 20, 0.5, 77)
    assert np.array_equal(a.obstacles, b.obstacles)


def test_generation_density_and_connectivity():
    for density in (0.3, 0.5, 0.7):
        for seed in (1, 2, 3, 4):
            env = generate_environment(20, 20, density, seed)
            frac = env.obstacles.mean()
            assert abs(frac - density) <= 0.02, (density, seed, frac)
            free = ~env.obstacles
            component = oracle_flood_fill(free, (0, 0))
            assert len(component) == int(free.sum()), "free space disconnected"
            for corner in env.spawn_cells:
                assert free[corner]


def test_generation_rejects_bad_args():
    with pytest.raises(ValueError):
        generate_environment(20, 20, 0.9, 1)
    with pytest.raises(ValueError):
        generate_environment(4, 20, 0.3, 1)


def test_grid_file_roundtrip():
    env = generate_environment(20, 20, 0.4444444444444444, 123)
    text = write_grid(env)
    parsed = parse_grid(text)
    assert parsed == env
    assert write_grid(parsed) == text


def test_grid_parse_errors():
    with pytest.raises(ValueError):
        parse_grid("BAD 1 2 3\n")
    with pytest.raises(ValueError):
        parse_grid("GRID 3 1 0.0 5\n..\n")


def test_los_trivial_cases():
    env = open_env()
    assert line_of_sight(env, (3, 3), (3, 3))
    assert line_of_sight(env, (3, 3), (3, 4))


def test_los_blocked_midpoint():
    env = open_env()
    env.obstacles[2, 2] = True
    assert not line_of_sight(env, (2, 0), (2, 4))
    env.obstacles[2, 2] = False


def test_los_symmetry_random():
    rng = np.random.default_rng(9)
    env = generate_environment(15, 15, 0.4, 5)
    cells = env.free_cells()
    for _ in range(300):
        a = cells[int(rng.integers(len(cells)))]
        b = cells[int(rng.integers(len(cells)))]
        assert line_of_sight(env, a, b) == line_of_sight(env, b, a)


def test_supercover_diagonal_includes_corner_cells():
    cells = set(supercover_cells((0, 0), (2, 2)))
    # corner crossings pull in both side cells
    assert {(0, 0), (1, 1), (2, 2), (0, 1), (1, 0), (1, 2), (2, 1)} == cells


def test_supercover_straight_line():
    assert supercover_cells((2, 0), (2, 4)) == [(2, 0), (2, 1), (2, 2), (2, 3), (2, 4)]


def test_sense_open_clearing_81_cells():
    env = open_env()
    reading = sense(env, 0, [(10, 10)], np.random.default_rng(0), miss_prob=0.0)
    assert len(reading.cells) == 81
    rows = reading.cells[:, 0]
    cols = reading.cells[:, 1]
    assert rows.min() == 6 and rows.max() == 14
    assert cols.min() == 6 and cols.max() == 14


def test_sense_wall_blocks_far_side():
    env = open_env()
    env.obstacles[10, 12] = True
    env._visible_cache.clear()
    reading = sense(env, 0, [(10, 10)], np.random.default_rng(0), miss_prob=0.0)
    observed = {tuple(c) for c in reading.cells}
    assert (10, 12) in observed          # the wall itself is visible
    assert (10, 13) not in observed      # nothing strictly beyond it
    assert (10, 14) not in observed


def test_sense_soundness_and_own_cell():
    env = generate_environment(20, 20, 0.5, 31)
    rng = np.random.default_rng(2)
    cells = env.free_cells()
    for _ in range(50):
        pos = cells[int(rng.integers(len(cells)))]
        reading = sense(env, 0, [pos], rng)
        assert (pos[0], pos[1]) in {tuple(c) for c in reading.cells}
        truth = env.obstacles[reading.cells[:, 0], reading.cells[:, 1]]
        assert np.array_equal(truth, reading.occupied)


def test_sense_miss_rate():
    env = open_env()
    rng = np.random.default_rng(123)
    target = (10, 13)
    hits = 0
    trials = 10_000
    for _ in range(trials):
        reading = sense(env, 0, [(10, 10)], rng)
        if any((r, c) == target for r, c in reading.cells):
            hits += 1
    assert abs(hits / trials - 0.90) <= 0.01


def test_step_robot_blocked_and_stay():
    env = open_env()
    env.obstacles[5, 6] = True
    rng = np.random.default_rng(0)
    assert step_robot(env, (5, 5), "right", rng) == (5, 5)
    assert step_robot(env, (5, 5), "stay", rng) == (5, 5)
    assert step_robot(env, (0, 0), "up", rng) == (0, 0)


def test_step_robot_success_rate():
    env = open_env()
    rng = np.random.default_rng(7)
    moved = 0
    trials = 10_000
    for _ in range(trials):
        if step_robot(env, (10, 10), "right", rng) == (10, 11):
            moved += 1
    assert abs(moved / trials - 0.90) <= 0.01


def test_motion_never_enters_obstacle():
    env = generate_environment(15, 15, 0.5, 3)
    rng = np.random.default_rng(4)
    pos = (0, 0)
    actions = ["up", "down", "left", "right", "stay"]
    for _ in range(2000):
        pos = step_robot(env, pos, actions[int(rng.integers(5))], rng)
        assert not env.obstacles[pos]


def test_links_csp_one_never_down():
    links = CommLinkTable(3, csp=1.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        links.tick({(0, 1), (0, 2), (1, 2)}, rng)
        assert links.is_up(0, 1) and links.is_up(0, 2) and links.is_up(1, 2)


def test_links_csp_zero_dropout_is_exactly_seven_ticks():
    links = CommLinkTable(2, csp=0.0)
    rng = np.random.default_rng(0)
    links.tick({(0, 1)}, rng)          # range entry -> guaranteed failure
    down_ticks = 0 if links.is_up(0, 1) else 1
    for _ in range(20):
        links.tick({(0, 1)}, rng)      # stays in range: no new entry trial
        if not links.is_up(0, 1):
            down_ticks += 1
    assert down_ticks == 7
    assert links.is_up(0, 1)           # no re-entry, so it stays up afterwards


def test_links_retrial_on_next_entry():
    links = CommLinkTable(2, csp=0.0)
    rng = np.random.default_rng(0)
    links.tick({(0, 1)}, rng)
    assert not links.is_up(0, 1)
    for _ in range(7):
        links.tick(set(), rng)         # leaves range; dropout runs out
    assert links.is_up(0, 1)
    links.tick({(0, 1)}, rng)          # re-entry -> new trial -> down again
    assert not links.is_up(0, 1)


def test_links_failure_rate_half():
    rng = np.random.default_rng(42)
    failures = 0
    trials = 10_000
    for _ in range(trials):
        links = CommLinkTable(2, csp=0.5)
        links.tick({(0, 1)}, rng)
        if not links.is_up(0, 1):
            failures += 1
    assert abs(failures / trials - 0.50) <= 0.02


def test_exchange_permission_rules():
    links = CommLinkTable(2, csp=0.0)
    rng = np.random.default_rng(0)
    links.tick({(0, 1)}, rng)
    assert not links.exchange_ok(0, 1, in_range=True)    # link down
    assert not links.exchange_ok(0, 1, in_range=False)
    up = CommLinkTable(2, csp=1.0)
    up.tick({(0, 1)}, rng)
    assert up.exchange_ok(0, 1, in_range=True)
    assert not up.exchange_ok(0, 1, in_range=False)      # out of range


def test_detect_teammates_cases():
    env = open_env()
    q, visible = detect_teammates([(10, 10)], 0, env)
    assert not q and visible == []
    q, visible = detect_teammates([(10, 10), (10, 13)], 0, env)
    assert q and visible == [(1, (10, 13))]
    env.obstacles[10, 11] = True
    env.obstacles[10, 12] = True
    env._visible_cache.clear()
    q, visible = detect_teammates([(10, 10), (10, 13)], 0, env)
    assert not q and visible == []


def test_detection_symmetric():
    env = generate_environment(15, 15, 0.4, 8)
    cells = env.free_cells()
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = cells[int(rng.integers(len(cells)))]
        b = cells[int(rng.integers(len(cells)))]
        qa, _ = detect_teammates([a, b], 0, env)
        qb, _ = detect_teammates([a, b], 1, env)
        assert qa == qb


def test_trajectory_determinism():
    def rollout():
        env = generate_environment(15, 15, 0.4, 99)
        streams = np.random.SeedSequence(5).spawn(2)
        motion = np.random.default_rng(streams[0])
        sensing = np.random.default_rng(streams[1])
        pos = (0, 0)
        trace = []
        actions = ["right", "down", "right", "up", "left"] * 20
        for action in actions:
            pos = step_robot(env, pos, action, motion)
            reading = sense(env, 0, [pos], sensing)
            trace.append((pos, reading.cells.tobytes(), reading.occupied.tobytes()))
        return trace

    assert rollout() == rollout()
