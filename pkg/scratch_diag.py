"""Diagnostic: can the per-robot nets learn the nearest-candidate preference?"""
import sys
import time

import numpy as np

from mrexplore.training import TrainConfig, train, train_decentralized_only
from mrexplore.grid import generate_environment
from mrexplore.episode import TeamRun, SimStreams, random_spawns
from mrexplore.harness import NetGoalPolicy, RandomGoalPolicy
from mrexplore.nn.encode import encode_individual, batch_inputs
from mrexplore.nn.model import zero_hidden


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


def probe_actions(deps, n_eps=20, seed=606):
    """Histogram of greedy actions + mean Q per action over decision states."""
    rng = np.random.default_rng(seed)
    hist = np.zeros(4)
    qsums = np.zeros(4)
    count = 0
    for _ in range(n_eps):
        env = generate_environment(10, 10, float(rng.uniform(0.15, 0.35)),
                                   int(rng.integers(2**31)))
        run = TeamRun(env, random_spawns(env, 2, rng), 1.0,
                      SimStreams.from_seed(int(rng.integers(2**31))), 150)
        hidden = [zero_hidden(1) for _ in range(2)]
        while not run.done:
            for i in run.needs_decision():
                obs = run.observe_individual(i)
                enc = encode_individual(obs, run.env.shape, run.env.total_cells)
                maps, scal = batch_inputs([enc])
                q, h2, c2 = deps[i].step(maps, scal, *hidden[i])
                hidden[i] = (h2, c2)
                hist[int(np.argmax(q[0]))] += 1
                qsums += q[0]
                count += 1
                run.assign_goal(i, obs.candidates[int(np.argmax(q[0]))])
            run.step()
    print('  greedy action histogram:', (hist / hist.sum()).round(3))
    print('  mean Q per action:', (qsums / count).round(3))


random_mean = evaluate(lambda rng: RandomGoalPolicy(rng))
print(f'random: {random_mean:.2f}', flush=True)

mode = sys.argv[1] if len(sys.argv) > 1 else "dt"
episodes = int(sys.argv[2]) if len(sys.argv) > 2 else 600
upe = int(sys.argv[3]) if len(sys.argv) > 3 else 4
scale = float(sys.argv[4]) if len(sys.argv) > 4 else 0.01

cfg = TrainConfig(episodes=episodes, seed=11, team_size=2, grid_width=10,
                  grid_height=10, density_low=0.15, density_high=0.35,
                  step_cap=150, min_buffer=16, buffer_capacity=600,
                  eps_horizon=20000, updates_per_episode=upe,
                  target_sync=200, lr=1e-3, reward_scale=scale)
t0 = time.perf_counter()
result = train_decentralized_only(cfg) if mode == "dt" else train(cfg)
print(f'{mode} train {episodes} eps: {time.perf_counter()-t0:.0f}s', flush=True)
t_mean = evaluate(lambda rng: NetGoalPolicy(result.deps))
print(f'{mode} trained: {t_mean:.2f}  ratio {t_mean/random_mean:.3f}')
probe_actions(result.deps)

