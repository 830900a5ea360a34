"""Scratch experiment: desk-scale training vs random (criterion 7 tuning)."""
import sys
import time

import numpy as np

from mrexplore.training import TrainConfig, train
from mrexplore.grid import generate_environment
from mrexplore.episode import TeamRun, SimStreams, random_spawns
from mrexplore.harness import NetGoalPolicy, RandomGoalPolicy


def evaluate(policy_factory, n_trials=30, seed=505, step_cap=150):
    steps = []
    seq = np.random.SeedSequence(seed)
    env_rng = np.random.default_rng(seq.spawn(1)[0])
    trial_seqs = seq.spawn(n_trials)
    for k in range(n_trials):
        env = generate_environment(10, 10, float(env_rng.uniform(0.15, 0.35)),
                                   int(env_rng.integers(2**31)))
        s_seq, p_seq = trial_seqs[k].spawn(2)
        spawn_rng = np.random.default_rng(p_seq)
        spawns = random_spawns(env, 2, spawn_rng)
        run = TeamRun(env, spawns, 1.0, SimStreams.from_seed(s_seq), step_cap)
        policy = policy_factory(np.random.default_rng(p_seq))
        while not run.done:
            for i in run.needs_decision():
                run.assign_goal(i, policy.select(run, i))
            run.step()
        steps.append(run.steps)
    return float(np.mean(steps))


def main(episodes, seed, scale, upe, horizon, lr):
    r_mean = evaluate(lambda rng: RandomGoalPolicy(rng))
    print(f'random mean steps: {r_mean:.2f}', flush=True)
    cfg = TrainConfig(episodes=episodes, seed=seed, team_size=2,
                      grid_width=10, grid_height=10,
                      density_low=0.15, density_high=0.35, step_cap=150,
                      min_buffer=16, buffer_capacity=600,
                      eps_horizon=horizon, updates_per_episode=upe,
                      target_sync=200, lr=lr, reward_scale=scale)
    t0 = time.perf_counter()
    result = train(cfg)
    print(f'train: {time.perf_counter()-t0:.0f}s', flush=True)
    steps_log = [row['steps'] for row in result.log]
    for k in range(0, episodes, max(1, episodes // 10)):
        chunk = steps_log[k:k + max(1, episodes // 10)]
        print(f'  ep {k}: mean rollout steps {np.mean(chunk):.1f}')
    t_mean = evaluate(lambda rng: NetGoalPolicy(result.deps))
    print(f'trained mean steps: {t_mean:.2f}  ratio: {t_mean/r_mean:.3f}', flush=True)


if __name__ == "__main__":
    episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 11
    scale = float(sys.argv[3]) if len(sys.argv) > 3 else 0.01
    upe = int(sys.argv[4]) if len(sys.argv) > 4 else 4
    horizon = int(sys.argv[5]) if len(sys.argv) > 5 else 65000
    lr = float(sys.argv[6]) if len(sys.argv) > 6 else 1e-3
    main(episodes, seed, scale, upe, horizon, lr)
