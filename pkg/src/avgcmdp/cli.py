"""Command-line interface: solve a model exactly, run learners, summarize."""

from __future__ import annotations

import sys

import click
import numpy as np

from .exact import optimal_constrained
from .harness import (
    baseline,
    compute_metrics,
    emit_plot_data,
    execute_run,
    load_config,
    run_suite,
)
from .harness import MetricCurves
from .model import load_model, save_model
from .harness import generate_random_ergodic
from .runlog import fmt


@click.group()
def main():
    """Tabular average-reward constrained MDP toolkit."""


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--epsilon", type=float, default=0.0, show_default=True,
              help="Extra slack subtracted from the cost threshold.")
def solve(model_path, epsilon):
    """Print the constrained-optimal gain, cost, and policy of MODEL_PATH."""
    model = load_model(model_path)
    opt = optimal_constrained(model, epsilon)
    click.echo(f"J_star      = {fmt(opt.gain)}")
    click.echo(f"J_star_cost = {fmt(opt.gain_cost)}")
    click.echo(f"tau         = {fmt(model.threshold)}")
    click.echo("policy (rows = states, cols = action probabilities):")
    for s in range(model.num_states):
        row = " ".join(fmt(p) for p in opt.policy.probs[s])
        click.echo(f"  s{s}: {row}")


@main.command()
@click.argument("config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None,
              help="Run only this seed instead of the config's first seed.")
def run(config_path, seed):
    """Execute a single run from CONFIG_PATH and print its metrics."""
    config = load_config(config_path)
    model = load_model(config.model_path)
    use_seed = config.seeds[0] if seed is None else seed
    log = execute_run(model, config, use_seed)
    j_star, j_star_cost = baseline(model)
    curves = compute_metrics(log, j_star, model.threshold, config.checkpoints,
                             j_star_cost)
    click.echo(f"seed={use_seed} J_star={fmt(j_star)} tau={fmt(model.threshold)}")
    click.echo("t,regret,violation")
    for t, r, c in zip(curves.checkpoints, curves.regret, curves.violation):
        click.echo(f"{t},{fmt(r)},{fmt(c)}")


@main.command()
@click.argument("config_path", type=click.Path(exists=True))
def suite(config_path):
    """Run every seed in CONFIG_PATH and write logs, metrics, and a summary."""
    config = load_config(config_path)
    result = run_suite(config)
    for seed, status, message in result["statuses"]:
        line = f"seed {seed}: {status}"
        if message:
            line += f" ({message})"
        click.echo(line)
    click.echo(f"summary: {result['summary']}")


@main.command()
@click.argument("metrics_paths", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default="plots",
              show_default=True)
def plot(metrics_paths, out_dir):
    """Aggregate metrics CSVs into plot data and SVG charts."""
    curve_list = []
    for path in metrics_paths:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        curve_list.append(MetricCurves(
            checkpoints=tuple(int(t) for t in rows[:, 0]),
            regret=rows[:, 1],
            violation=rows[:, 2],
            j_star=float("nan"),
            j_star_cost=float("nan"),
            tau=float("nan"),
        ))
    if len({c.checkpoints for c in curve_list}) != 1:
        click.echo("error: metrics files have mismatched checkpoints", err=True)
        sys.exit(1)
    for path in emit_plot_data(curve_list, out_dir):
        click.echo(path)


@main.command()
@click.option("--states", "num_states", type=int, required=True)
@click.option("--actions", "num_actions", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--min-self-loop", type=float, default=0.2, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Output file (default: model_S<seed>.json).")
def gen(num_states, num_actions, seed, min_self_loop, out_path):
    """Generate a random ergodic model and write it as JSON."""
    model = generate_random_ergodic(num_states, num_actions, seed, min_self_loop)
    path = out_path or f"model_seed{seed}.json"
    save_model(model, path)
    click.echo(f"wrote {path} (tau={fmt(model.threshold)}, c0={fmt(model.c0)})")


if __name__ == "__main__":
    main()
