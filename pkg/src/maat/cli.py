"""Command-line entry points: synth, importance, pretrain, run, report, serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .environment import default_seed, load_dataset
from .errors import MaatError


def _load_toml(path: str) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


@click.group()
def main():
    """Adaptive-testing engine: simulation harness and live session service."""


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="TOML file with synthetic population settings.")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
def synth(spec_path, out_dir, seed):
    """Generate a synthetic dataset (records.csv, concepts.csv, ground_truth.json)."""
    from .harness.experiment import synthetic_spec_from_dict
    from .harness.synthetic import SyntheticSpec, generate_synthetic

    raw = _load_toml(spec_path) if spec_path else {}
    if seed is not None:
        raw["seed"] = seed
    spec = synthetic_spec_from_dict(raw) if raw else SyntheticSpec(seed=default_seed())
    dataset = generate_synthetic(spec)
    dataset.save(out_dir)
    click.echo(f"wrote synthetic dataset ({spec.n_examinees} examinees, "
               f"{spec.n_questions} questions, {spec.n_concepts} concepts) to {out_dir}")


@main.command()
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default="importance.json")
@click.option("--dim", type=int, default=20)
@click.option("--epochs", type=int, default=5)
@click.option("--k-n", "k_n", type=int, default=10)
@click.option("--gamma", type=float, default=0.1)
@click.option("--seed", type=int, default=None)
def importance(dataset_dir, out_path, dim, epochs, k_n, gamma, seed):
    """Pre-compute per-concept importance weights from a dataset."""
    from .importance import EmbeddingConfig, compute_importance, train_embeddings

    env = load_dataset(dataset_dir)
    cfg = EmbeddingConfig(dim=dim, epochs=epochs,
                          seed=seed if seed is not None else default_seed())
    embedding = train_embeddings(env.records, env.n_questions, cfg)
    table = compute_importance(embedding, env.graph, k_n=k_n, gamma=gamma)
    table.save(out_path)
    click.echo(f"wrote importance weights for {env.n_concepts} concepts to {out_path}")


@main.command()
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--model-kind", type=click.Choice(["irt", "mirt", "ncdm"]), default="irt")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option("--epochs", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--seed", type=int, default=None)
def pretrain(dataset_dir, model_kind, out_path, epochs, learning_rate, seed):
    """Fit question-side model parameters on a dataset and save a checkpoint."""
    from .cdm import PretrainConfig
    from .cdm import pretrain as fit
    from .harness.experiment import PRETRAIN_DEFAULTS

    env = load_dataset(dataset_dir)
    settings = dict(PRETRAIN_DEFAULTS.get(model_kind, {}))
    if epochs is not None:
        settings["epochs"] = epochs
    if learning_rate is not None:
        settings["learning_rate"] = learning_rate
    settings["seed"] = seed if seed is not None else default_seed()
    model = fit(model_kind, env.records, env.graph, PretrainConfig(**settings))
    target = out_path or f"model.{model_kind}.json"
    model.save(target, graph=env.graph)
    click.echo(f"wrote {model_kind} checkpoint (final loss "
               f"{model.training_losses[-1]:.4f}) to {target}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Run directory (overrides the config's `out`).")
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), default=None,
              help="Dataset directory (overrides the config's `dataset`).")
@click.option("--strategy", "strategies", multiple=True,
              help="Restrict to these strategies (repeatable).")
@click.option("--no-figures", is_flag=True, default=False)
def run(config_path, out_dir, dataset_dir, strategies, no_figures):
    """Run an experiment from a TOML config; write report, curves and figures."""
    import dataclasses

    from .harness.experiment import load_experiment_config, run_experiment
    from .report import render_figures, summary_text

    config, config_out = load_experiment_config(config_path)
    if dataset_dir is not None:
        config = dataclasses.replace(config, dataset_path=dataset_dir)
    if strategies:
        config = dataclasses.replace(config, strategies=tuple(strategies))
    target = out_dir or config_out
    if target is None:
        raise click.UsageError("no output directory: pass --out or set `out` in the config")

    report = run_experiment(config)
    root = report.write(target)
    if not no_figures:
        for path in render_figures(root):
            click.echo(f"figure: {path}")
    click.echo(summary_text(root))
    click.echo(f"run artifacts in {root}")


@main.command()
@click.argument("run_dir", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Where to put figures (default: the run directory).")
def report(run_dir, out_dir):
    """Re-render figures and print the summary for an existing run directory."""
    from .report import render_figures, summary_text

    for path in render_figures(run_dir, out_dir):
        click.echo(f"figure: {path}")
    click.echo(summary_text(run_dir))


@main.command()
@click.option("--model", "model_paths", type=click.Path(exists=True), multiple=True,
              required=True, help="Model checkpoint(s); repeatable.")
@click.option("--importance", "importance_path", type=click.Path(exists=True),
              required=True)
@click.option("--port", type=int, default=8080)
@click.option("--host", default="127.0.0.1")
@click.option("--store", "store_path", type=click.Path(), default=None,
              help="Sqlite session store (default: in-memory).")
@click.option("--n-steps", type=int, default=20, help="Default test length.")
@click.option("--k-c", type=int, default=10, help="Default candidate-set size.")
def serve(model_paths, importance_path, port, host, store_path, n_steps, k_c):
    """Serve live adaptive-test sessions over HTTP."""
    import uvicorn

    from .service import create_app, engine_from_files

    engine = engine_from_files(list(model_paths), importance_path,
                               store_path=store_path,
                               default_n_steps=n_steps, default_k_c=k_c)
    app = create_app(engine)
    click.echo(f"serving models {sorted(engine.models)} on {host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def entrypoint():
    try:
        main(standalone_mode=True)
    except MaatError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entrypoint()
