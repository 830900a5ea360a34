"""Sweep desk-scale CTDE configs for criterion-7 robustness."""
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
        spawns = random_spawns(env, 2, np.random.default_rng(p_seq))
        run = TeamRun(env, spawns, 1.0, SimStreams.from_seed(s_seq), step_cap)
        policy = policy_factory(np.random.default_rng(p_seq))
        while not run.done:
            for i in run.needs_decision():
                run.assign_goal(i, policy.select(run, i))
            run.step()
        steps.append(run.steps)
    return float(np.mean(steps))


def evaluate_multi(policy_factory, seeds=(505, 606, 707)):
    means = [evaluate(policy_factory, seed=s) for s in seeds]
    return float(np.mean(means)), means


def main():
    episodes = int(sys.argv[1])
    horizon = int(sys.argv[2])
    seed = int(sys.argv[3])
    upe = int(sys.argv[4]) if len(sys.argv) > 4 else 4
    eps_end = float(sys.argv[5]) if len(sys.argv) > 5 else 0.05
    random_mean, r_per = evaluate_multi(lambda rng: RandomGoalPolicy(rng))
    cfg = TrainConfig(episodes=episodes, seed=seed, team_size=2, grid_width=10,
                      grid_height=10, density_low=0.15, density_high=0.35,
                      step_cap=150, min_buffer=16, buffer_capacity=600,
                      eps_horizon=horizon, eps_end=eps_end,
                      updates_per_episode=upe,
                      target_sync=200, lr=1e-3, reward_scale=0.01)
    t0 = time.perf_counter()
    result = train(cfg)
    wall = time.perf_counter() - t0
    t_mean, t_per = evaluate_multi(lambda rng: NetGoalPolicy(result.deps))
    print(f'eps={episodes} hor={horizon} seed={seed} upe={upe} end={eps_end}: '
          f'trained {t_mean:.2f} {t_per} random {random_mean:.2f} {r_per} '
          f'ratio {t_mean / random_mean:.3f} ({wall:.0f}s)', flush=True)
    print('validation log:', [(e, round(s, 1)) for e, s in result.validation_log],
          flush=True)
    import os
    from mrexplore.nn.weights import save_weights
    out = f"/tmp/deps_{seed}_{episodes}"
    os.makedirs(out, exist_ok=True)
    for i, dep in enumerate(result.deps):
        save_weights(dep.params, f"{out}/dep_{i}.mdw")
    print('saved to', out, flush=True)


if __name__ == "__main__":
    main()
