"""Command-line front end.

Verbs: gen-envs, train, train-dt, eval, summarize, plot. Options may come
from a flat key=value config file; explicit flags win. All seeds are
mandatory so every artifact is reproducible byte for byte.

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import csv
import glob
import os
import sys

import click

from .grid import GridGenerationError
from .harness import (
    ConfigError,
    RunConfig,
    TrialRecord,
    emit_plots,
    gen_env_suite,
    run_trials,
    summarize as summarize_records,
    write_curves_csv,
    write_series_csv,
    write_summary_csv,
    write_trials_csv,
)
from .nn.weights import WeightFormatError, save_weights
from .training import TrainConfig, TrainingAbort, train, train_decentralized_only

RUNTIME_ERRORS = (TrainingAbort, GridGenerationError, WeightFormatError, OSError)


def _load_config_file(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    if not os.path.isfile(path):
        raise click.UsageError(f"config file not found: {path}")
    values: dict[str, str] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise click.UsageError(f"{path}:{line_no}: expected key=value")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _pick(flag_value, file_values: dict, key: str, cast, default):
    if flag_value is not None:
        return flag_value
    if key in file_values:
        return cast(file_values[key])
    return default


@click.group()
def main():
    """Multi-robot exploration: environments, training, evaluation, plots."""


@main.command("gen-envs")
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--width", type=int, default=20, show_default=True)
@click.option("--height", type=int, default=20, show_default=True)
@click.option("--density-low", type=float, default=0.3, show_default=True)
@click.option("--density-high", type=float, default=0.7, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def gen_envs(count, width, height, density_low, density_high, seed, out_dir):
    """Generate an environment suite with a linear clutter ramp."""
    try:
        paths = gen_env_suite(count, width, height, (density_low, density_high),
                              seed, out_dir)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    except RUNTIME_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"wrote {len(paths)} environments to {out_dir}")


def _train_config(config, episodes, seed, team_size, width, height, csp,
                  **overrides) -> TrainConfig:
    file_values = _load_config_file(config)
    kwargs = dict(
        episodes=_pick(episodes, file_values, "episodes", int, 1000),
        seed=seed,
        team_size=_pick(team_size, file_values, "team_size", int, 3),
        grid_width=_pick(width, file_values, "grid_width", int, 20),
        grid_height=_pick(height, file_values, "grid_height", int, 20),
        csp=_pick(csp, file_values, "csp", float, 1.0),
    )
    for key, cast in (("density_low", float), ("density_high", float),
                      ("step_cap", int), ("batch_size", int), ("seq_len", int),
                      ("eps_horizon", int), ("lr", float), ("target_sync", int),
                      ("buffer_capacity", int), ("min_buffer", int),
                      ("updates_per_episode", int), ("checkpoint_every", int)):
        if overrides.get(key) is not None:
            kwargs[key] = overrides[key]
        elif key in file_values:
            kwargs[key] = cast(file_values[key])
    try:
        return TrainConfig(**kwargs)
    except ValueError as exc:
        raise click.UsageError(str(exc))


_train_options = [
    click.option("--config", type=click.Path(), default=None,
                 help="flat key=value defaults file"),
    click.option("--episodes", type=int, default=None),
    click.option("--seed", type=int, required=True),
    click.option("--team-size", "team_size", type=int, default=None),
    click.option("--width", type=int, default=None),
    click.option("--height", type=int, default=None),
    click.option("--csp", type=float, default=None),
    click.option("--step-cap", "step_cap", type=int, default=None),
    click.option("--lr", type=float, default=None),
    click.option("--eps-horizon", "eps_horizon", type=int, default=None),
    click.option("--out", "out_dir", required=True, type=click.Path()),
]


def _apply_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


def _save_nets(result, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    if result.cep is not None:
        save_weights(result.cep.params, os.path.join(out_dir, "cep.mdw"))
    for i, dep in enumerate(result.deps):
        save_weights(dep.params, os.path.join(out_dir, f"dep_{i}.mdw"))
    result.write_log(os.path.join(out_dir, "training_log.csv"))


@main.command("train")
@_apply_options(_train_options)
def train_cmd(config, episodes, seed, team_size, width, height, csp, step_cap,
              lr, eps_horizon, out_dir):
    """Train the joint and per-robot networks in parallel environments."""
    cfg = _train_config(config, episodes, seed, team_size, width, height, csp,
                        step_cap=step_cap, lr=lr, eps_horizon=eps_horizon)
    try:
        result = train(cfg)
        _save_nets(result, out_dir)
    except RUNTIME_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"trained {cfg.episodes} episodes; weights in {out_dir}")


@main.command("train-dt")
@_apply_options(_train_options)
def train_dt_cmd(config, episodes, seed, team_size, width, height, csp,
                 step_cap, lr, eps_horizon, out_dir):
    """Train the decentralized-only variant (per-robot double-Q targets)."""
    cfg = _train_config(config, episodes, seed, team_size, width, height, csp,
                        step_cap=step_cap, lr=lr, eps_horizon=eps_horizon)
    try:
        result = train_decentralized_only(cfg)
        _save_nets(result, out_dir)
    except RUNTIME_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"trained {cfg.episodes} episodes; weights in {out_dir}")


@main.command("eval")
@click.option("--method", required=True)
@click.option("--envs", "env_dir", required=True, type=click.Path())
@click.option("--weights", "weight_dir", type=click.Path(), default=None)
@click.option("--csp", "csp_list", default="0.0,0.5,0.8,1.0", show_default=True,
              help="comma-separated communication success probabilities")
@click.option("--seed", type=int, required=True)
@click.option("--step-cap", type=int, default=300, show_default=True)
@click.option("--team-size", type=int, default=3, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def eval_cmd(method, env_dir, weight_dir, csp_list, seed, step_cap, team_size,
             workers, out_dir):
    """Run the trial grid (every env x corner x csp) for one method."""
    env_paths = sorted(glob.glob(os.path.join(env_dir, "*.grid")))
    try:
        csps = [float(x) for x in csp_list.split(",") if x]
    except ValueError:
        raise click.UsageError(f"bad csp list: {csp_list!r}")
    config = RunConfig(method=method, env_paths=env_paths, csps=csps, seed=seed,
                       weight_dir=weight_dir, step_cap=step_cap,
                       team_size=team_size, workers=workers)
    try:
        config.validate()
    except ConfigError as exc:
        raise click.UsageError(str(exc))
    try:
        records = run_trials(config)
        os.makedirs(out_dir, exist_ok=True)
        write_trials_csv(records, os.path.join(out_dir, "trials.csv"))
        write_series_csv(records, os.path.join(out_dir, "series.csv"))
    except RUNTIME_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    click.echo(f"{len(records)} trials -> {out_dir}/trials.csv")


def _read_records(trials_path: str, series_path: str | None) -> list[TrialRecord]:
    records: dict[tuple, TrialRecord] = {}
    with open(trials_path, newline="") as fh:
        for row in csv.DictReader(fh):
            record = TrialRecord(
                method=row["method"], env=int(row["env"]), corner=int(row["corner"]),
                csp=float(row["csp"]), steps=int(row["steps"]),
                distance_m=int(row["distance_m"]),
                interactions=int(row["interactions"]), ofv=float(row["ofv"]),
                completed=row["completed"] == "1", wall_ms=int(row["wall_ms"]))
            records[(record.method, record.env, record.corner, record.csp)] = record
    if series_path and os.path.isfile(series_path):
        with open(series_path, newline="") as fh:
            for row in csv.DictReader(fh):
                key = (row["method"], int(row["env"]), int(row["corner"]),
                       float(row["csp"]))
                record = records.get(key)
                if record is None:
                    continue
                record.series_explored.append(int(row["explored_cells"]))
                record.series_free.append(int(row["free_explored"]))
                record.series_distance.append(int(row["distance_m"]))
                record.total_free = int(row["total_free"])
    return list(records.values())


@main.command("summarize")
@click.option("--trials", "trials_path", required=True, type=click.Path())
@click.option("--series", "series_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
def summarize_cmd(trials_path, series_path, out_dir):
    """Aggregate trials into per-method x per-csp means and decile curves."""
    if not os.path.isfile(trials_path):
        raise click.UsageError(f"trials file missing: {trials_path}")
    records = _read_records(trials_path, series_path)
    summary_rows, curve_rows = summarize_records(records)
    os.makedirs(out_dir, exist_ok=True)
    write_summary_csv(summary_rows, os.path.join(out_dir, "summary.csv"))
    write_curves_csv(curve_rows, os.path.join(out_dir, "curves.csv"))
    if not curve_rows:
        click.echo("notice: no series data, curves.csv has headers only")
    click.echo(f"summary -> {out_dir}/summary.csv")


@main.command("plot")
@click.option("--summary", "summary_path", required=True, type=click.Path())
@click.option("--curves", "curves_path", type=click.Path(), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path())
def plot_cmd(summary_path, curves_path, out_dir):
    """Render bar charts per metric and exploration-vs-distance curves."""
    if not os.path.isfile(summary_path):
        raise click.UsageError(f"summary file missing: {summary_path}")
    summary_rows = []
    with open(summary_path, newline="") as fh:
        for row in csv.DictReader(fh):
            summary_rows.append({
                "method": row["method"], "csp": float(row["csp"]),
                "mean_steps": float(row["mean_steps"]),
                "mean_distance": float(row["mean_distance"]),
                "mean_interactions": float(row["mean_interactions"]),
                "mean_ofv": float(row["mean_ofv"]),
                "completion_rate": float(row["completion_rate"])})
    curve_rows = []
    if curves_path and os.path.isfile(curves_path):
        with open(curves_path, newline="") as fh:
            for row in csv.DictReader(fh):
                curve_rows.append({
                    "method": row["method"], "csp": float(row["csp"]),
                    "decile_pct": int(row["decile_pct"]),
                    "mean_distance_m": float(row["mean_distance_m"])})
    try:
        written = emit_plots(summary_rows, curve_rows, out_dir)
    except RUNTIME_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    if not curve_rows:
        click.echo("notice: no curve data, curve plots skipped")
    click.echo(f"wrote {len(written)} plots to {out_dir}")


if __name__ == "__main__":
    main()
