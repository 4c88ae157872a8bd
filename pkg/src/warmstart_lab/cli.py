"""Command line entry points: run, report, serve, validate-data."""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .data_core import load_dataset
from .errors import WarmstartLabError
from .runner.config import load_config
from .runner.experiment import run_experiment
from .runner.report import build_report

logger = logging.getLogger(__name__)


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Benchmark laboratory for domain-knowledge warm starts."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _apply_overrides(config, kwargs) -> None:
    if kwargs.get("ucb_kappa") is not None:
        config.ucb["kappa"] = kwargs["ucb_kappa"]
    if kwargs.get("ucb_budget") is not None:
        config.ucb["budget"] = kwargs["ucb_budget"]
    if kwargs.get("ucb_seed_size") is not None:
        config.ucb["seed_size"] = kwargs["ucb_seed_size"]
    if kwargs.get("dapr_k") is not None:
        config.dapr["k"] = kwargs["dapr_k"]
    if kwargs.get("dapr_s") is not None:
        config.dapr["s"] = kwargs["dapr_s"]
    if kwargs.get("dapr_n_importance") is not None:
        config.dapr["n_importance"] = kwargs["dapr_n_importance"]
    if kwargs.get("hkma_bscout") is not None:
        config.hkma["b_scout"] = kwargs["hkma_bscout"]
    if kwargs.get("hkma_gamma") is not None:
        config.hkma["gamma"] = kwargs["hkma_gamma"]
    if kwargs.get("hkma_topk") is not None:
        config.hkma["top_k"] = kwargs["hkma_topk"]
    if kwargs.get("hkma_mode") is not None:
        mode = kwargs["hkma_mode"]
        method = {"scout_only": "hkma_scout", "rag_only": "hkma_rag", "both": "hkma_both"}[mode]
        config.methods = [m for m in config.methods if not m.startswith("hkma")] + [method]
    if kwargs.get("amp_condition") is not None:
        method = f"amp{kwargs['amp_condition']}"
        config.methods = [m for m in config.methods if not m.startswith("amp")] + [method]


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--ucb-kappa", type=float, default=None)
@click.option("--ucb-budget", type=int, default=None)
@click.option("--ucb-seed-size", type=int, default=None)
@click.option("--dapr-k", type=int, default=None)
@click.option("--dapr-s", type=int, default=None)
@click.option("--dapr-n-importance", type=int, default=None)
@click.option("--hkma-mode", type=click.Choice(["scout_only", "rag_only", "both"]), default=None)
@click.option("--hkma-bscout", type=int, default=None)
@click.option("--hkma-gamma", type=float, default=None)
@click.option("--hkma-topk", type=int, default=None)
@click.option("--amp-condition", type=click.Choice(["2", "3", "4"]), default=None)
def run(config_path: str, **kwargs) -> None:
    """Run the experiment sweep described by a JSON config file."""
    try:
        config = load_config(config_path)
        _apply_overrides(config, kwargs)
        config.validate()
        summary = run_experiment(config)
    except WarmstartLabError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(
        f"wrote {summary.trial_count} trial record(s) to {summary.store_path} "
        f"({summary.tokens_in} tokens in / {summary.tokens_out} out)"
    )
    if summary.error_count:
        click.echo(f"warning: {summary.error_count} trial(s) recorded errors", err=True)


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default="report", type=click.Path())
@click.option("--seed", default=0, type=int, help="Seed for the ranking bootstrap.")
@click.option("--baseline", default="bs_llm", help="Method the deltas compare against.")
def report(store_path: str, out_dir: str, seed: int, baseline: str) -> None:
    """Build rank tables, tier matrix, and cost summaries from a store."""
    try:
        paths = build_report(store_path, out_dir, seed=seed, baseline=baseline)
    except WarmstartLabError as exc:
        raise click.ClickException(str(exc)) from exc
    for path in paths.files:
        click.echo(str(path))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--addr", default="127.0.0.1:8787", help="host:port to bind.")
@click.option(
    "--console-dir",
    default=None,
    type=click.Path(),
    help="Directory of built console assets to serve at /.",
)
def serve(config_path: str, addr: str, console_dir: str | None) -> None:
    """Serve the expert feedback API (and optionally the console)."""
    import uvicorn

    from .runner.api import SessionManager, create_app
    from .runner.experiment import _corpus_excerpt

    try:
        config = load_config(config_path)
        datasets = config.load_datasets()
    except WarmstartLabError as exc:
        raise click.ClickException(str(exc)) from exc
    manager = SessionManager(config)
    corpus_root = config.corpus_path()
    for dataset in datasets:
        manager.add_session(dataset, docs_excerpt=_corpus_excerpt(corpus_root, dataset))
        click.echo(f"session hdkp-{dataset.name} started")
    app = create_app(manager, console_dir=console_dir)
    host, _, port = addr.partition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8787), log_level="info")
    finally:
        manager.shutdown()


@main.command("validate-data")
@click.argument("csv_path", type=click.Path(exists=True))
def validate_data(csv_path: str) -> None:
    """Load a pool CSV and print its derived schema."""
    try:
        dataset = load_dataset(Path(csv_path))
    except WarmstartLabError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"name: {dataset.name}")
    click.echo(f"tier: {dataset.tier} ({len(dataset.feature_specs)} features)")
    click.echo(f"rows: {len(dataset.rows)}")
    for spec in dataset.feature_specs:
        if spec.kind == "numeric":
            click.echo(f"  feature {spec.name}: numeric in [{spec.lo:g}, {spec.hi:g}]")
        else:
            click.echo(f"  feature {spec.name}: symbolic {list(spec.categories)}")
    for spec in dataset.objective_specs:
        click.echo(
            f"  objective {spec.name}: {spec.direction} in [{spec.lo:g}, {spec.hi:g}]"
        )
    for note in dataset.warnings:
        click.echo(f"  warning: {note}", err=True)


if __name__ == "__main__":
    sys.exit(main())
