"""Evaluation protocol: environment suites, trial grids, metrics, plots.

A trial cell is (environment, start corner, communication success
probability); every method consumes identical simulator RNG streams per cell
so outcome differences are attributable to goal selection alone.
"""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import PbValueModel, nf_select_goal, pb_propagate_teammates, pb_select_goal, ub_select_goal
from .episode import SimStreams, TeamRun, corner_spawns
from .grid import Cell, GridEnvironment, generate_environment, parse_grid, write_grid
from .nn.encode import batch_inputs, encode_individual
from .nn.model import RecurrentQNet, dep_spec, zero_hidden
from .nn.weights import load_weights

LEARNED_METHODS = ("made-net", "made-net-dt")
CLASSICAL_METHODS = ("nf", "ub", "pb")
ALL_METHODS = LEARNED_METHODS + CLASSICAL_METHODS + ("random",)

TRIAL_COLUMNS = ("method", "env", "corner", "csp", "steps", "distance_m",
                 "interactions", "ofv", "completed", "wall_ms")
SERIES_COLUMNS = ("method", "env", "corner", "csp", "t", "explored_cells",
                  "free_explored", "distance_m", "total_free")
SUMMARY_COLUMNS = ("method", "csp", "mean_steps", "mean_distance",
                   "mean_interactions", "mean_ofv", "completion_rate")
CURVE_COLUMNS = ("method", "csp", "decile_pct", "mean_distance_m")
DECILES = tuple(range(10, 101, 10))


class ConfigError(ValueError):
    """Invalid run configuration (missing weights, unreadable suite, ...)."""


@dataclass
class RunConfig:
    method: str
    env_paths: list[str]
    csps: list[float]
    seed: int
    weight_dir: str | None = None
    step_cap: int = 300
    team_size: int = 3
    workers: int = 1

    def validate(self) -> None:
        if self.method not in ALL_METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.method in LEARNED_METHODS and not self.weight_dir:
            raise ConfigError(f"method {self.method} requires --weights")
        if not self.env_paths:
            raise ConfigError("no environment files given")
        for path in self.env_paths:
            if not os.path.isfile(path):
                raise ConfigError(f"environment file missing: {path}")
        if self.weight_dir:
            for i in range(self.team_size):
                path = os.path.join(self.weight_dir, f"dep_{i}.mdw")
                if not os.path.isfile(path):
                    raise ConfigError(f"weight file missing: {path}")


@dataclass
class TrialRecord:
    method: str
    env: int
    corner: int
    csp: float
    steps: int
    distance_m: int
    interactions: int
    ofv: float
    completed: bool
    wall_ms: int
    series_explored: list[int] = field(default_factory=list)
    series_free: list[int] = field(default_factory=list)
    series_distance: list[int] = field(default_factory=list)
    total_free: int = 0

    def row(self) -> list[str]:
        return [self.method, str(self.env), str(self.corner), _fmt(self.csp),
                str(self.steps), str(self.distance_m), str(self.interactions),
                _fmt(self.ofv), "1" if self.completed else "0", str(self.wall_ms)]


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def compute_ofv(explored: list[int], distance: list[int]) -> float:
    """Summed explored-cells-per-distance over timesteps with any travel."""
    if len(explored) != len(distance):
        raise ValueError(f"series length mismatch: {len(explored)} vs {len(distance)}")
    return float(sum(e / d for e, d in zip(explored, distance) if d > 0))


class NetGoalPolicy:
    """Greedy per-robot network policy with persistent hidden state."""

    def __init__(self, deps: list[RecurrentQNet]):
        self.deps = deps
        self.hidden = [zero_hidden(1) for _ in deps]

    def select(self, run: TeamRun, i: int) -> Cell:
        obs = run.observe_individual(i)
        enc = encode_individual(obs, run.env.shape, run.env.total_cells)
        maps, scalars = batch_inputs([enc])
        q, h2, c2 = self.deps[i].step(maps, scalars, *self.hidden[i])
        self.hidden[i] = (h2, c2)
        return obs.candidates[int(np.argmax(q[0]))]


class RandomGoalPolicy:
    """Uniform choice among the four goal candidates."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def select(self, run: TeamRun, i: int) -> Cell:
        candidates = run.candidates_for(i)
        return candidates[int(self.rng.integers(len(candidates)))]


class ClassicalGoalPolicy:
    """Adapter running a classical selector on the macro substrate."""

    def __init__(self, kind: str, team_size: int):
        self.kind = kind
        self.models = [PbValueModel() for _ in range(team_size)]

    def select(self, run: TeamRun, i: int) -> Cell:
        know = run.knowledge[i]
        belief = know.belief
        position = run.robots[i].position
        mates = sorted(know.teammates.items())
        if self.kind == "nf":
            return nf_select_goal(belief, position)
        if self.kind == "ub":
            return ub_select_goal(belief, position, [info.position for _, info in mates])
        if self.kind == "pb":
            model = self.models[i]
            last_known = {j: info.position for j, info in mates}
            elapsed = {j: max(0, run.t - info.last_seen) for j, info in mates}
            pb_propagate_teammates(model, belief, last_known, elapsed)
            return pb_select_goal(model, belief, position)
        raise ValueError(f"unknown classical kind {self.kind!r}")


def load_policy_weights(weight_dir: str, team_size: int) -> list[RecurrentQNet]:
    deps = []
    for i in range(team_size):
        net = RecurrentQNet(dep_spec(team_size), seed=0)
        params = load_weights(os.path.join(weight_dir, f"dep_{i}.mdw"))
        for key in net.params:
            net.params[key] = params[key].astype(net.dtype)
        net.sync_target()
        deps.append(net)
    return deps


def make_policy(method: str, team_size: int, weight_dir: str | None,
                policy_rng: np.random.Generator):
    if method in LEARNED_METHODS:
        return NetGoalPolicy(load_policy_weights(weight_dir, team_size))
    if method == "random":
        return RandomGoalPolicy(policy_rng)
    return ClassicalGoalPolicy(method, team_size)


def run_trial(env: GridEnvironment, env_idx: int, corner_idx: int, csp: float,
              method: str, team_size: int, step_cap: int,
              cell_seed: np.random.SeedSequence,
              weight_dir: str | None = None) -> TrialRecord:
    """One trial: corner spawn, macro decisions, metrics series."""
    stream_seq, policy_seq = cell_seed.spawn(2)
    streams = SimStreams.from_seed(stream_seq)
    policy = make_policy(method, team_size, weight_dir,
                         np.random.default_rng(policy_seq))
    corner = env.spawn_cells[corner_idx]
    spawns = corner_spawns(env, corner, team_size)
    run = TeamRun(env, spawns, csp, streams, step_cap)
    started = time.perf_counter()
    while not run.done:
        for i in run.needs_decision():
            run.assign_goal(i, policy.select(run, i))
        run.step()
    wall_ms = int(round(1000.0 * (time.perf_counter() - started)))
    return TrialRecord(
        method=method, env=env_idx, corner=corner_idx, csp=csp,
        steps=run.steps, distance_m=run.joint_distance,
        interactions=run.interactions,
        ofv=compute_ofv(run.series_explored, run.series_distance),
        completed=run.complete, wall_ms=wall_ms,
        series_explored=list(run.series_explored),
        series_free=list(run.series_free),
        series_distance=list(run.series_distance),
        total_free=int((~env.obstacles).sum()))


def _run_cell(args) -> TrialRecord:
    (env_text, env_idx, corner_idx, csp, csp_idx, method, team_size,
     step_cap, seed, weight_dir) = args
    env = parse_grid(env_text)
    cell_seed = np.random.SeedSequence([seed, env_idx, corner_idx, csp_idx])
    return run_trial(env, env_idx, corner_idx, csp, method, team_size, step_cap,
                     cell_seed, weight_dir)


def run_trials(config: RunConfig) -> list[TrialRecord]:
    """Every (env, corner, csp) cell for the configured method."""
    config.validate()
    env_texts = []
    for path in config.env_paths:
        with open(path) as fh:
            text = fh.read()
        parse_grid(text)  # fail before any trial runs
        env_texts.append(text)
    cells = []
    for env_idx, env_text in enumerate(env_texts):
        n_corners = len(parse_grid(env_text).spawn_cells)
        for corner_idx in range(n_corners):
            for csp_idx, csp in enumerate(config.csps):
                cells.append((env_text, env_idx, corner_idx, csp, csp_idx,
                              config.method, config.team_size, config.step_cap,
                              config.seed, config.weight_dir))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_cell, cells))
    else:
        records = [_run_cell(cell) for cell in cells]
    records.sort(key=lambda r: (r.method, r.env, r.corner, r.csp))
    return records


def write_trials_csv(records: list[TrialRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRIAL_COLUMNS)
        for record in records:
            writer.writerow(record.row())


def write_series_csv(records: list[TrialRecord], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SERIES_COLUMNS)
        for record in records:
            for t, (e, f, d) in enumerate(zip(record.series_explored,
                                              record.series_free,
                                              record.series_distance)):
                writer.writerow([record.method, record.env, record.corner,
                                 _fmt(record.csp), t, e, f, d,
                                 record.total_free])


def gen_env_suite(count: int, width: int, height: int,
                  density_range: tuple[float, float], seed: int,
                  out_dir: str) -> list[str]:
    """Write env_00.grid .. env_{n-1}.grid with a linear density ramp."""
    if count < 1:
        raise ValueError("suite needs at least one environment")
    lo, hi = density_range
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i in range(count):
        density = lo if count == 1 else lo + (hi - lo) * i / (count - 1)
        env = generate_environment(width, height, density, seed + i)
        path = os.path.join(out_dir, f"env_{i:02d}.grid")
        with open(path, "w") as fh:
            fh.write(write_grid(env))
        paths.append(path)
    return paths


def decile_distances(record: TrialRecord) -> dict[int, float]:
    """Distance at each explored-percent decile, linearly interpolated."""
    if record.total_free <= 0:
        return {}
    pct = [100.0 * f / record.total_free for f in record.series_free]
    dist = record.series_distance
    out: dict[int, float] = {}
    for decile in DECILES:
        for t, p in enumerate(pct):
            if p >= decile:
                if t == 0 or pct[t] == pct[t - 1]:
                    out[decile] = float(dist[t])
                else:
                    frac = (decile - pct[t - 1]) / (pct[t] - pct[t - 1])
                    out[decile] = dist[t - 1] + frac * (dist[t] - dist[t - 1])
                break
    return out


def summarize(records: list[TrialRecord]) -> tuple[list[dict], list[dict]]:
    """Per (method, csp) means plus exploration-vs-distance decile curves."""
    groups: dict[tuple[str, float], list[TrialRecord]] = {}
    for record in records:
        groups.setdefault((record.method, record.csp), []).append(record)
    summary_rows = []
    curve_rows = []
    for (method, csp), group in sorted(groups.items()):
        summary_rows.append({
            "method": method, "csp": csp,
            "mean_steps": float(np.mean([r.steps for r in group])),
            "mean_distance": float(np.mean([r.distance_m for r in group])),
            "mean_interactions": float(np.mean([r.interactions for r in group])),
            "mean_ofv": float(np.mean([r.ofv for r in group])),
            "completion_rate": float(np.mean([1.0 if r.completed else 0.0
                                              for r in group])),
        })
        per_decile: dict[int, list[float]] = {d: [] for d in DECILES}
        for record in group:
            for decile, value in decile_distances(record).items():
                per_decile[decile].append(value)
        for decile in DECILES:
            if per_decile[decile]:
                curve_rows.append({
                    "method": method, "csp": csp, "decile_pct": decile,
                    "mean_distance_m": float(np.mean(per_decile[decile]))})
    return summary_rows, curve_rows


def write_summary_csv(summary_rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary_rows:
            writer.writerow([row["method"], _fmt(row["csp"]),
                             _fmt(row["mean_steps"]), _fmt(row["mean_distance"]),
                             _fmt(row["mean_interactions"]), _fmt(row["mean_ofv"]),
                             _fmt(row["completion_rate"])])


def write_curves_csv(curve_rows: list[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for row in curve_rows:
            writer.writerow([row["method"], _fmt(row["csp"]),
                             str(row["decile_pct"]), _fmt(row["mean_distance_m"])])


def _embed_data(path: str, rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    for row in rows:
        writer.writerow(row)
    payload = buf.getvalue().replace("--", "- -")
    with open(path, "a") as fh:
        fh.write(f"<!--plotdata\n{payload}-->\n")


def extract_plot_data(path: str) -> list[list[str]]:
    """Parse back the data rows embedded in a plot file."""
    with open(path) as fh:
        text = fh.read()
    start = text.index("<!--plotdata\n") + len("<!--plotdata\n")
    end = text.index("-->", start)
    return [row for row in csv.reader(io.StringIO(text[start:end])) if row]


def emit_plots(summary_rows: list[dict], curve_rows: list[dict],
               out_dir: str) -> list[str]:
    """Grouped bars per metric and percent-explored-vs-distance curves (SVG)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    written = []
    metrics = (("mean_steps", "steps"), ("mean_distance", "distance"),
               ("mean_interactions", "interactions"), ("mean_ofv", "ofv"))
    methods = sorted({row["method"] for row in summary_rows})
    csps = sorted({row["csp"] for row in summary_rows})
    for key, name in metrics:
        if not summary_rows:
            break
        fig, ax = plt.subplots(figsize=(7, 4))
        width = 0.8 / max(1, len(methods))
        data_rows = []
        for m_idx, method in enumerate(methods):
            xs, ys = [], []
            for c_idx, csp in enumerate(csps):
                rows = [r for r in summary_rows
                        if r["method"] == method and r["csp"] == csp]
                if rows:
                    xs.append(c_idx + m_idx * width)
                    ys.append(rows[0][key])
                    data_rows.append([method, _fmt(csp), _fmt(rows[0][key])])
            ax.bar(xs, ys, width=width, label=method)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(csps))])
        ax.set_xticklabels([_fmt(c) for c in csps])
        ax.set_xlabel("communication success probability")
        ax.set_ylabel(name)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"metric_{name}.svg")
        fig.savefig(path)
        plt.close(fig)
        _embed_data(path, data_rows)
        written.append(path)
    curve_csps = sorted({row["csp"] for row in curve_rows})
    for csp in curve_csps:
        fig, ax = plt.subplots(figsize=(6, 4))
        data_rows = []
        for method in sorted({r["method"] for r in curve_rows if r["csp"] == csp}):
            points = sorted((r["decile_pct"], r["mean_distance_m"])
                            for r in curve_rows
                            if r["method"] == method and r["csp"] == csp)
            ax.plot([p[1] for p in points], [p[0] for p in points],
                    marker="o", label=method)
            data_rows.extend([method, _fmt(csp), str(d), _fmt(v)] for d, v in points)
        ax.set_xlabel("distance traveled (m)")
        ax.set_ylabel("percent explored")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = os.path.join(out_dir, f"curves_csp_{_fmt(csp)}.svg")
        fig.savefig(path)
        plt.close(fig)
        _embed_data(path, data_rows)
        written.append(path)
    return written
