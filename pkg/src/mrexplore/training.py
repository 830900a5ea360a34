"""Macro-level replay, epsilon-greedy rollouts, and the double-Q updates.

Two environments run per training episode: one team driven by the joint
(centralized) network, one by the per-robot networks. The per-robot update
bootstraps its target action from the joint network's argmax, projected onto
that robot's component, so decentralized behavior absorbs centralized
coordination. A decentralized-only variant replaces that projection with each
robot's own double-Q argmax.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .episode import SimStreams, TeamRun, random_spawns
from .grid import GridEnvironment, generate_environment
from .nn.encode import EncodedObs, batch_inputs, batch_sequences, encode_individual, encode_joint
from .nn.model import RecurrentQNet, cep_spec, dep_spec, sequence_backward, sequence_forward, zero_hidden
from .nn.optim import Adam
from .nn.weights import save_weights


class TrainingAbort(RuntimeError):
    """Raised when an update produces a non-finite loss."""


@dataclass
class MacroTransition:
    """One macro-level replay record (individual or joint)."""
    obs: EncodedObs
    action: int
    reward: float
    next_obs: EncodedObs | None
    duration: int
    terminal: bool
    joint_obs: EncodedObs | None = None       # aligned joint view (per-robot records)
    joint_next_obs: EncodedObs | None = None


class ReplayBuffer:
    """Ring of complete episodes; samples contiguous in-episode subsequences."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.episodes: list[tuple[int, list[MacroTransition]]] = []

    def add(self, tag: int, transitions: list[MacroTransition]) -> None:
        if not transitions:
            return
        self.episodes.append((tag, transitions))
        if len(self.episodes) > self.capacity:
            self.episodes.pop(0)

    def __len__(self) -> int:
        return len(self.episodes)

    def sample(self, rng: np.random.Generator, batch_size: int,
               seq_len: int) -> list[tuple[int, list[MacroTransition]]]:
        out = []
        for _ in range(batch_size):
            tag, episode = self.episodes[int(rng.integers(len(self.episodes)))]
            length = min(seq_len, len(episode))
            start = int(rng.integers(len(episode) - length + 1))
            out.append((tag, episode[start:start + length]))
        return out


def joint_action_encode(actions: list[int] | tuple[int, ...], n_choices: int = 4) -> int:
    index = 0
    for a in actions:
        if not 0 <= a < n_choices:
            raise ValueError(f"macro action {a} out of range [0, {n_choices})")
        index = index * n_choices + a
    return index


def joint_action_decode(index: int, team_size: int, n_choices: int = 4) -> tuple[int, ...]:
    if not 0 <= index < n_choices ** team_size:
        raise ValueError(f"joint index {index} out of range")
    out = []
    for _ in range(team_size):
        out.append(index % n_choices)
        index //= n_choices
    return tuple(reversed(out))


def constrained_joint_argmax(q: np.ndarray, locked: list[int | None],
                             n_choices: int = 4) -> int:
    """Argmax over joint actions whose components match every locked robot.

    Ties break toward the smallest joint index.
    """
    team_size = len(locked)
    if all(a is not None for a in locked):
        raise ValueError("at least one robot must be unlocked")
    best_idx = -1
    best_q = -np.inf
    for idx in range(n_choices ** team_size):
        comps = joint_action_decode(idx, team_size, n_choices)
        if any(lock is not None and comps[i] != lock
               for i, lock in enumerate(locked)):
            continue
        if q[idx] > best_q:
            best_q = float(q[idx])
            best_idx = idx
    return best_idx


@dataclass
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    horizon: int = 1


def epsilon(step: int, schedule: EpsilonSchedule) -> float:
    frac = min(1.0, step / max(1, schedule.horizon))
    return schedule.start + (schedule.end - schedule.start) * frac


@dataclass
class TrainConfig:
    episodes: int
    seed: int
    team_size: int = 3
    grid_width: int = 20
    grid_height: int = 20
    density_low: float = 0.3
    density_high: float = 0.7
    csp: float = 1.0
    step_cap: int = 300
    gamma: float = 1.0
    batch_size: int = 16
    seq_len: int = 8
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_horizon: int | None = None  # defaults to half the planned decision budget
    lr: float = 1e-3
    target_sync: int = 200
    buffer_capacity: int = 256
    min_buffer: int = 8
    updates_per_episode: int = 1
    grad_clip: float | None = 10.0
    reward_scale: float = 1.0  # scales TD targets; argmax-invariant
    miss_prob: float = 0.1
    select_best: bool = True   # keep the best greedy-validation snapshot
    select_every: int = 25     # episodes between validation passes
    select_trials: int = 16    # fixed seeded validation trials per pass
    ema_decay: float | None = 0.99  # per-episode Polyak average of the
                                    # per-robot nets; the averaged weights are
                                    # what validation scores and train returns
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if not (0.0 <= self.eps_end <= self.eps_start <= 1.0):
            raise ValueError("epsilon endpoints must satisfy 0 <= end <= start <= 1")
        if self.episodes < 0:
            raise ValueError("episodes must be non-negative")
        for name in ("team_size", "grid_width", "grid_height",
                     "step_cap", "batch_size", "seq_len", "target_sync",
                     "buffer_capacity", "updates_per_episode"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.grid_height, self.grid_width)

    @property
    def total_cells(self) -> int:
        return self.grid_width * self.grid_height


@dataclass
class EpisodeResult:
    team_transitions: list[MacroTransition]
    robot_transitions: list[list[MacroTransition]]
    team_reward: float
    steps: int
    explored: int
    decisions: int
    completed: bool


def _greedy_or_random(q: np.ndarray, eps: float, rng: np.random.Generator,
                      n_actions: int) -> int:
    if rng.random() < eps:
        return int(rng.integers(n_actions))
    return int(np.argmax(q))


def run_decentralized_episode(run: TeamRun, deps: list[RecurrentQNet], eps: float,
                              rng: np.random.Generator, total_cells: int,
                              collect_joint: bool = True) -> tuple[list[list[MacroTransition]], float, int]:
    """Roll one episode with every robot acting on its own network."""
    n = run.n
    shape = run.env.shape
    hidden = [zero_hidden(1) for _ in range(n)]
    episodes: list[list[MacroTransition]] = [[] for _ in range(n)]
    open_tr: list[MacroTransition | None] = [None] * n
    team_total = 0.0
    decisions = 0

    def build(i: int) -> tuple[EncodedObs, EncodedObs | None, list]:
        obs = run.observe_individual(i)
        enc = encode_individual(obs, shape, total_cells)
        jenc = (encode_joint(run.observe_joint(), shape, total_cells)
                if collect_joint else None)
        return enc, jenc, obs.candidates

    while not run.done:
        for i in run.needs_decision():
            enc, jenc, candidates = build(i)
            if open_tr[i] is not None:
                open_tr[i].next_obs = enc
                open_tr[i].joint_next_obs = jenc
                episodes[i].append(open_tr[i])
            maps, scalars = batch_inputs([enc])
            q, h2, c2 = deps[i].step(maps, scalars, *hidden[i])
            hidden[i] = (h2, c2)
            action = _greedy_or_random(q[0], eps, rng, 4)
            decisions += 1
            open_tr[i] = MacroTransition(obs=enc, action=action, reward=0.0,
                                         next_obs=None, duration=0, terminal=False,
                                         joint_obs=jenc)
            run.assign_goal(i, candidates[action])
        out = run.step()
        team_total += out.team_reward
        for i in range(n):
            open_tr[i].reward += out.robot_rewards[i]
            open_tr[i].duration += 1
    for i in range(n):
        if open_tr[i] is not None and open_tr[i].duration > 0:
            enc, jenc, _ = build(i)
            open_tr[i].next_obs = enc
            open_tr[i].joint_next_obs = jenc
            open_tr[i].terminal = run.complete
            episodes[i].append(open_tr[i])
    return episodes, team_total, decisions


def run_centralized_episode(run: TeamRun, cep: RecurrentQNet, eps: float,
                            rng: np.random.Generator,
                            total_cells: int) -> tuple[list[MacroTransition], float, int]:
    """Roll one episode with the joint network assigning macros at every
    asynchronous decision point; mid-macro robots keep their locked action."""
    n = run.n
    shape = run.env.shape
    hidden = zero_hidden(1)
    transitions: list[MacroTransition] = []
    open_tr: MacroTransition | None = None
    current = [0] * n
    team_total = 0.0
    decisions = 0

    while not run.done:
        need = run.needs_decision()
        if need:
            jobs = run.observe_joint()
            enc = encode_joint(jobs, shape, total_cells)
            if open_tr is not None:
                open_tr.next_obs = enc
                transitions.append(open_tr)
            maps, scalars = batch_inputs([enc])
            q, h2, c2 = cep.step(maps, scalars, *hidden)
            hidden = (h2, c2)
            locked = [None if i in need else current[i] for i in range(n)]
            comps = list(joint_action_decode(constrained_joint_argmax(q[0], locked),
                                             n))
            for i in need:
                if rng.random() < eps:
                    comps[i] = int(rng.integers(4))
            decisions += 1
            for i in need:
                current[i] = comps[i]
                run.assign_goal(i, jobs.candidates[i][comps[i]])
            open_tr = MacroTransition(obs=enc, action=joint_action_encode(comps),
                                      reward=0.0, next_obs=None, duration=0,
                                      terminal=False)
        out = run.step()
        team_total += out.team_reward
        open_tr.reward += out.team_reward
        open_tr.duration += 1
    if open_tr is not None and open_tr.duration > 0:
        enc = encode_joint(run.observe_joint(), shape, total_cells)
        open_tr.next_obs = enc
        open_tr.terminal = run.complete
        transitions.append(open_tr)
    return transitions, team_total, decisions


def _bucket(samples, key_fn):
    buckets: dict = {}
    for sample in samples:
        buckets.setdefault(key_fn(sample), []).append(sample)
    return buckets


def _finite_or_abort(loss: float, context: str) -> None:
    if not np.isfinite(loss):
        raise TrainingAbort(f"non-finite loss in {context}: {loss}")


def centralized_update(cep: RecurrentQNet, samples: list[list[MacroTransition]],
                       gamma: float, adam: Adam, reward_scale: float = 1.0) -> float:
    """One squared-TD step on the joint network with a double-Q target."""
    total = len(samples)
    grads_total = {k: np.zeros_like(v) for k, v in cep.params.items()}
    loss = 0.0
    for length, seqs in sorted(_bucket(samples, lambda s: len(s)).items()):
        maps, scalars = batch_sequences([[tr.obs for tr in s] for s in seqs])
        pmaps, pscalars = batch_sequences([[tr.next_obs for tr in s] for s in seqs])
        qs, _, caches = sequence_forward(cep.params, maps, scalars)
        qsp, _, _ = sequence_forward(cep.params, pmaps, pscalars, keep_cache=False)
        qtp, _, _ = sequence_forward(cep.target, pmaps, pscalars, keep_cache=False)
        acts = np.array([s[-1].action for s in seqs])
        rews = np.array([s[-1].reward * reward_scale for s in seqs], dtype=qs.dtype)
        live = np.array([0.0 if s[-1].terminal else 1.0 for s in seqs], dtype=qs.dtype)
        rows = np.arange(len(seqs))
        a_star = np.argmax(qsp[:, -1, :], axis=1)
        y = rews + gamma * qtp[rows, -1, a_star] * live
        td = qs[rows, -1, acts] - y
        loss += float((td ** 2).sum())
        dqs = np.zeros_like(qs)
        dqs[rows, -1, acts] = 2.0 * td / total
        grads = sequence_backward(cep.params, caches, dqs)
        for k in grads_total:
            grads_total[k] += grads[k]
    loss /= total
    _finite_or_abort(loss, "centralized update")
    adam.step(cep.params, grads_total)
    return loss


def _projected_target_actions(cep: RecurrentQNet, seqs: list[list[MacroTransition]],
                              robot_id: int, team_size: int) -> np.ndarray:
    """Per-robot target actions: component of the joint argmax on the primed
    joint history (the coupling that lets robots learn from joint training)."""
    jmaps, jscalars = batch_sequences([[tr.joint_next_obs for tr in s] for s in seqs])
    qj, _, _ = sequence_forward(cep.params, jmaps, jscalars, keep_cache=False)
    joint_best = np.argmax(qj[:, -1, :], axis=1)
    return np.array([joint_action_decode(int(idx), team_size)[robot_id]
                     for idx in joint_best])


def decentralized_update(deps: list[RecurrentQNet], cep: RecurrentQNet | None,
                         samples: list[tuple[int, list[MacroTransition]]],
                         gamma: float, adams: list[Adam],
                         team_size: int, reward_scale: float = 1.0) -> dict[int, float]:
    """Per-robot squared-TD step.

    With ``cep`` given, target actions are projected from the joint argmax;
    without it, each robot uses its own double-Q argmax (decentralized-only
    training).
    """
    total = len(samples)
    losses: dict[int, float] = {}
    grads_by_robot: dict[int, dict] = {}
    counts: dict[int, int] = {}
    for (robot_id, length), group in sorted(
            _bucket(samples, lambda s: (s[0], len(s[1]))).items()):
        seqs = [s[1] for s in group]
        net = deps[robot_id]
        maps, scalars = batch_sequences([[tr.obs for tr in s] for s in seqs])
        pmaps, pscalars = batch_sequences([[tr.next_obs for tr in s] for s in seqs])
        qs, _, caches = sequence_forward(net.params, maps, scalars)
        qtp, _, _ = sequence_forward(net.target, pmaps, pscalars, keep_cache=False)
        if cep is not None:
            target_actions = _projected_target_actions(cep, seqs, robot_id, team_size)
        else:
            qsp, _, _ = sequence_forward(net.params, pmaps, pscalars, keep_cache=False)
            target_actions = np.argmax(qsp[:, -1, :], axis=1)
        acts = np.array([s[-1].action for s in seqs])
        rews = np.array([s[-1].reward * reward_scale for s in seqs], dtype=qs.dtype)
        live = np.array([0.0 if s[-1].terminal else 1.0 for s in seqs], dtype=qs.dtype)
        rows = np.arange(len(seqs))
        y = rews + gamma * qtp[rows, -1, target_actions] * live
        td = qs[rows, -1, acts] - y
        losses[robot_id] = losses.get(robot_id, 0.0) + float((td ** 2).sum())
        counts[robot_id] = counts.get(robot_id, 0) + len(seqs)
        dqs = np.zeros_like(qs)
        dqs[rows, -1, acts] = 2.0 * td / total
        grads = sequence_backward(net.params, caches, dqs)
        bucket_grads = grads_by_robot.setdefault(
            robot_id, {k: np.zeros_like(v) for k, v in net.params.items()})
        for k in grads:
            bucket_grads[k] += grads[k]
    for robot_id, grads in sorted(grads_by_robot.items()):
        losses[robot_id] /= counts[robot_id]
        _finite_or_abort(losses[robot_id], f"decentralized update robot {robot_id}")
        adams[robot_id].step(deps[robot_id].params, grads)
    return losses


@dataclass
class TrainResult:
    cep: RecurrentQNet | None
    deps: list[RecurrentQNet]
    log: list[dict] = field(default_factory=list)
    validation_log: list[tuple[int, float]] = field(default_factory=list)

    def write_log(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["episode", "team_reward", "steps",
                                "explored_cells", "epsilon"])
            writer.writeheader()
            for row in self.log:
                writer.writerow(row)


def greedy_validation_steps(deps: list[RecurrentQNet], cfg: TrainConfig,
                            seed, n_trials: int) -> float:
    """Mean steps-to-completion of the greedy per-robot policy on a fixed
    seeded trial set. Pure function of the weights; used for snapshot
    selection during training."""
    seq = seed if isinstance(seed, np.random.SeedSequence) \
        else np.random.SeedSequence(seed)
    env_rng = np.random.default_rng(seq.spawn(1)[0])
    trial_seqs = seq.spawn(n_trials)
    total = 0
    for k in range(n_trials):
        density = float(env_rng.uniform(cfg.density_low, cfg.density_high))
        env = generate_environment(cfg.grid_width, cfg.grid_height, density,
                                   int(env_rng.integers(2 ** 31)))
        s_seq, p_seq = trial_seqs[k].spawn(2)
        spawns = random_spawns(env, cfg.team_size, np.random.default_rng(p_seq))
        run = TeamRun(env, spawns, cfg.csp, SimStreams.from_seed(s_seq),
                      cfg.step_cap, cfg.miss_prob)
        hidden = [zero_hidden(1) for _ in range(cfg.team_size)]
        while not run.done:
            for i in run.needs_decision():
                obs = run.observe_individual(i)
                enc = encode_individual(obs, run.env.shape, cfg.total_cells)
                maps, scalars = batch_inputs([enc])
                q, h2, c2 = deps[i].step(maps, scalars, *hidden[i])
                hidden[i] = (h2, c2)
                run.assign_goal(i, obs.candidates[int(np.argmax(q[0]))])
            run.step()
        total += run.steps
    return total / n_trials


class _PolicySelector:
    """Polyak-average the per-robot weights and keep the best-validating copy.

    Desk-scale value learning is noisy and not monotone: the greedy argmax
    flips under per-state fit noise and the final iterate can be much worse
    than the best one seen. Averaged weights smooth the flips; periodic
    greedy validation on a fixed seeded trial set picks the iterate that is
    actually worth returning.
    """

    def __init__(self, cfg: TrainConfig, deps: list[RecurrentQNet]):
        self.cfg = cfg
        self.seed = np.random.SeedSequence([cfg.seed, 0x5E1EC7])
        self.best: float | None = None
        self.score_log: list[tuple[int, float]] = []
        self.snapshot: list[dict] | None = None
        self.ema: list[dict] | None = None
        if cfg.ema_decay is not None:
            self.ema = [{k: v.copy() for k, v in net.params.items()}
                        for net in deps]

    def _advance_ema(self, deps: list[RecurrentQNet]) -> None:
        decay = self.cfg.ema_decay
        for shadow, net in zip(self.ema, deps):
            for key, value in net.params.items():
                shadow[key] *= decay
                shadow[key] += (1.0 - decay) * value

    def candidate_nets(self, deps: list[RecurrentQNet]) -> list[RecurrentQNet]:
        if self.ema is None:
            return deps
        nets = []
        for net, shadow in zip(deps, self.ema):
            copy = RecurrentQNet.__new__(RecurrentQNet)
            copy.spec = net.spec
            copy.dtype = net.dtype
            copy.params = shadow
            copy.target = shadow
            nets.append(copy)
        return nets

    def observe(self, episode: int, deps: list[RecurrentQNet],
                warmed: bool) -> None:
        if self.ema is not None:
            self._advance_ema(deps)
        if not self.cfg.select_best or not warmed:
            return
        if (episode + 1) % self.cfg.select_every:
            return
        candidates = self.candidate_nets(deps)
        score = greedy_validation_steps(candidates, self.cfg, self.seed,
                                        self.cfg.select_trials)
        self.score_log.append((episode, score))
        if self.best is None or score < self.best:
            self.best = score
            self.snapshot = [{k: v.copy() for k, v in net.params.items()}
                             for net in candidates]

    def restore(self, deps: list[RecurrentQNet]) -> None:
        chosen = self.snapshot
        if chosen is None and self.ema is not None:
            chosen = self.ema
        if chosen is None:
            return
        for net, params in zip(deps, chosen):
            net.params = params
            net.sync_target()


def default_env_generator(cfg: TrainConfig):
    """Fresh seeded environment per call, density uniform in the configured range."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xE17]))

    def make() -> GridEnvironment:
        density = float(rng.uniform(cfg.density_low, cfg.density_high))
        return generate_environment(cfg.grid_width, cfg.grid_height, density,
                                    int(rng.integers(2 ** 62)))
    return make


def _new_run(cfg: TrainConfig, env_gen, spawn_rng, stream_seq) -> TeamRun:
    env = env_gen()
    spawns = random_spawns(env, cfg.team_size, spawn_rng)
    return TeamRun(env, spawns, cfg.csp, SimStreams.from_seed(stream_seq),
                   cfg.step_cap, cfg.miss_prob)


def _checkpoint(cfg: TrainConfig, episode: int, cep: RecurrentQNet | None,
                deps: list[RecurrentQNet]) -> None:
    if not cfg.checkpoint_every or not cfg.checkpoint_dir:
        return
    if episode % cfg.checkpoint_every:
        return
    os.makedirs(cfg.checkpoint_dir, exist_ok=True)
    if cep is not None:
        save_weights(cep.params, os.path.join(cfg.checkpoint_dir, "cep.mdw"))
    for i, dep in enumerate(deps):
        save_weights(dep.params, os.path.join(cfg.checkpoint_dir, f"dep_{i}.mdw"))


def train(cfg: TrainConfig, env_gen=None) -> TrainResult:
    """Full parallel-environment training of the joint and per-robot networks."""
    if env_gen is None:
        env_gen = default_env_generator(cfg)
    seq = np.random.SeedSequence(cfg.seed)
    net_seed_rng, spawn_rng, policy_rng, sample_rng = (
        np.random.default_rng(s) for s in seq.spawn(4))
    stream_seqs = seq.spawn(2 * cfg.episodes)

    cep = RecurrentQNet(cep_spec(cfg.team_size), int(net_seed_rng.integers(2 ** 31)))
    deps = [RecurrentQNet(dep_spec(cfg.team_size), int(net_seed_rng.integers(2 ** 31)))
            for _ in range(cfg.team_size)]
    adam_c = Adam(cep.params, lr=cfg.lr, grad_clip=cfg.grad_clip)
    adams_d = [Adam(dep.params, lr=cfg.lr, grad_clip=cfg.grad_clip) for dep in deps]
    cent_buf = ReplayBuffer(cfg.buffer_capacity)
    dec_buf = ReplayBuffer(cfg.buffer_capacity)
    horizon = cfg.eps_horizon if cfg.eps_horizon is not None else max(1, cfg.episodes * 10)
    schedule = EpsilonSchedule(cfg.eps_start, cfg.eps_end, horizon)

    result = TrainResult(cep=cep, deps=deps)
    tracker = _PolicySelector(cfg, deps)
    decision_count = 0
    update_count = 0
    for episode in range(cfg.episodes):
        eps = epsilon(decision_count, schedule)
        cent_run = _new_run(cfg, env_gen, spawn_rng, stream_seqs[2 * episode])
        dec_run = _new_run(cfg, env_gen, spawn_rng, stream_seqs[2 * episode + 1])
        team_tr, team_reward, dec_c = run_centralized_episode(
            cent_run, cep, eps, policy_rng, cfg.total_cells)
        robot_tr, _, dec_d = run_decentralized_episode(
            dec_run, deps, eps, policy_rng, cfg.total_cells, collect_joint=True)
        decision_count += dec_c + dec_d
        cent_buf.add(0, team_tr)
        for i in range(cfg.team_size):
            dec_buf.add(i, robot_tr[i])
        warmed = len(cent_buf) >= cfg.min_buffer and len(dec_buf) >= cfg.min_buffer
        if warmed:
            for _ in range(cfg.updates_per_episode):
                centralized_update(
                    cep, [s for _, s in cent_buf.sample(sample_rng, cfg.batch_size,
                                                        cfg.seq_len)],
                    cfg.gamma, adam_c, cfg.reward_scale)
                decentralized_update(
                    deps, cep, dec_buf.sample(sample_rng, cfg.batch_size, cfg.seq_len),
                    cfg.gamma, adams_d, cfg.team_size, cfg.reward_scale)
                update_count += 1
                if update_count % cfg.target_sync == 0:
                    cep.sync_target()
                    for dep in deps:
                        dep.sync_target()
        tracker.observe(episode, deps, warmed)
        result.log.append({"episode": episode, "team_reward": round(team_reward, 6),
                           "steps": cent_run.steps,
                           "explored_cells": cent_run.global_map.explored_count,
                           "epsilon": round(eps, 6)})
        _checkpoint(cfg, episode + 1, cep, deps)
    tracker.restore(deps)
    result.validation_log = tracker.score_log
    return result


def train_decentralized_only(cfg: TrainConfig, env_gen=None) -> TrainResult:
    """Decentralized-training variant: per-robot double-Q, no joint network."""
    if env_gen is None:
        env_gen = default_env_generator(cfg)
    seq = np.random.SeedSequence(cfg.seed)
    net_seed_rng, spawn_rng, policy_rng, sample_rng = (
        np.random.default_rng(s) for s in seq.spawn(4))
    stream_seqs = seq.spawn(cfg.episodes)

    deps = [RecurrentQNet(dep_spec(cfg.team_size), int(net_seed_rng.integers(2 ** 31)))
            for _ in range(cfg.team_size)]
    adams_d = [Adam(dep.params, lr=cfg.lr, grad_clip=cfg.grad_clip) for dep in deps]
    dec_buf = ReplayBuffer(cfg.buffer_capacity)
    horizon = cfg.eps_horizon if cfg.eps_horizon is not None else max(1, cfg.episodes * 10)
    schedule = EpsilonSchedule(cfg.eps_start, cfg.eps_end, horizon)

    result = TrainResult(cep=None, deps=deps)
    tracker = _PolicySelector(cfg, deps)
    decision_count = 0
    update_count = 0
    for episode in range(cfg.episodes):
        eps = epsilon(decision_count, schedule)
        run = _new_run(cfg, env_gen, spawn_rng, stream_seqs[episode])
        robot_tr, team_reward, decisions = run_decentralized_episode(
            run, deps, eps, policy_rng, cfg.total_cells, collect_joint=False)
        decision_count += decisions
        for i in range(cfg.team_size):
            dec_buf.add(i, robot_tr[i])
        warmed = len(dec_buf) >= cfg.min_buffer
        if warmed:
            for _ in range(cfg.updates_per_episode):
                decentralized_update(
                    deps, None, dec_buf.sample(sample_rng, cfg.batch_size, cfg.seq_len),
                    cfg.gamma, adams_d, cfg.team_size, cfg.reward_scale)
                update_count += 1
                if update_count % cfg.target_sync == 0:
                    for dep in deps:
                        dep.sync_target()
        tracker.observe(episode, deps, warmed)
        result.log.append({"episode": episode, "team_reward": round(team_reward, 6),
                           "steps": run.steps,
                           "explored_cells": run.global_map.explored_count,
                           "epsilon": round(eps, 6)})
        _checkpoint(cfg, episode + 1, None, deps)
    tracker.restore(deps)
    result.validation_log = tracker.score_log
    return result
