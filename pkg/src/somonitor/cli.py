"""Headless driver for every pipeline stage.

Exit codes: 0 success, 1 validation problem, 2 backend failure. Each command
prints the persisted artifact's JSON followed by a short human summary.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import asdict

import click

from .clustering import ClusterConfig
from .config import AppConfig, load_config, override
from .domain import ContentKind, Objective
from .errors import SomonitorError
from .evaluation import EvalConfig
from .gateway import AuthFailure, BackendUnavailable
from .pillars import PillarKind
from .pipeline import build_gateway, run_clusters, run_evaluation, run_opportunities, run_pillars, run_ranking, run_story
from .ranking import AllRunsFailed
from .store import Store, SubsetFilter

_BACKEND_ERRORS = (BackendUnavailable, AuthFailure, AllRunsFailed)


def _emit(payload, summary_lines):
    click.echo(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False))
    for line in summary_lines:
        click.echo(line)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _BACKEND_ERRORS as exc:
            click.echo(f"backend failure: {exc}", err=True)
            sys.exit(2)
        except (SomonitorError, ValueError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.option("--store", "store_root", default=None, help="Store directory (default from config).")
@click.option("--config", "config_path", default=None, help="Path to a somonitor.toml config file.")
@click.pass_context
def main(ctx, store_root, config_path):
    """Explainable marketing analytics pipeline."""
    config = load_config(config_path)
    if store_root:
        from dataclasses import replace

        config = replace(config, store_root=store_root)
    ctx.obj = config


def _store(config: AppConfig) -> Store:
    return Store(config.store_root)


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl")
@click.pass_obj
@guarded
def ingest(config, path, fmt):
    """Load, validate, and persist a dataset file."""
    handle = _store(config).load_dataset(path, format=fmt)
    _emit(asdict(handle), [f"ingested {handle.item_count} records as dataset {handle.dataset_id}"])


@main.command()
@click.argument("dataset_id")
@click.pass_obj
@guarded
def stats(config, dataset_id):
    """Counts and per-brand shares for a dataset."""
    result = _store(config).dataset_stats(dataset_id)
    _emit(
        result.to_payload(),
        [f"total={result.total} ads={result.ads} organic={result.organic}"],
    )


@main.command()
@click.argument("dataset_id")
@click.option("--backend", default=None, help="Completion backend id (default from config).")
@click.pass_obj
@guarded
def pillars(config, dataset_id, backend):
    """Extract the six content pillars for every creative."""
    store = _store(config)
    gateway = build_gateway(store, config.gateway)
    backend_id = backend or config.gateway.backend
    table = run_pillars(store, gateway, dataset_id, backend_id, temperature=config.gateway.temperature)
    _emit(
        table.to_payload(),
        [f"pillars: {len(table.rows)} rows, {len(table.failures)} failures (run {table.run_id})"],
    )


@main.command()
@click.argument("dataset_id")
@click.option("--pillar", type=click.Choice(["audience", "insight"]), required=True)
@click.option("--k0", type=int, default=None)
@click.option("--kmax", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--outlier-pct", type=float, default=None)
@click.option("--backend", default=None)
@click.pass_obj
@guarded
def cluster(config, dataset_id, pillar, k0, kmax, seed, outlier_pct, backend):
    """Cluster a pillar's embeddings into annotated persona/challenge cards."""
    settings = override(config.cluster, k0=k0, k_max=kmax, seed=seed, outlier_percentile=outlier_pct)
    cluster_config = ClusterConfig(
        k0=settings.k0,
        k_max=settings.k_max,
        seed=settings.seed,
        max_iterations=settings.max_iterations,
        outlier_percentile=settings.outlier_percentile,
        pillar=PillarKind(pillar),
    )
    store = _store(config)
    gateway = build_gateway(store, config.gateway)
    payload = run_clusters(store, gateway, dataset_id, cluster_config, backend or config.gateway.backend)
    _emit(
        payload,
        [
            f"clustered {pillar} with k0={cluster_config.k0} kmax={cluster_config.k_max} "
            f"seed={cluster_config.seed}",
            f"found {payload['cluster_count']} clusters, excluded {len(payload['excluded'])} outliers "
            f"(run {payload['run_id']})",
        ],
    )


@main.command()
@click.argument("dataset_id")
@click.option("--ranker", type=click.Choice(["score", "llm"]), required=True)
@click.option("--grounded", is_flag=True, default=False)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--runs", type=int, default=None, help="Ensemble size for the llm ranker.")
@click.option("--classifier", default=None, help="CTR classifier id for the score ranker.")
@click.option("--brand", default=None, help="Restrict candidates to one brand.")
@click.option("--objective", type=click.Choice([o.value for o in Objective]), default=None)
@click.option("--backend", default=None)
@click.pass_obj
@guarded
def rank(config, dataset_id, ranker, grounded, alpha, beta, runs, classifier, brand, objective, backend):
    """Rank ad creatives via the score layer or the LLM ensemble."""
    settings = override(
        config.rank,
        alpha=alpha,
        beta=beta,
        ensemble_runs=runs,
        classifier=classifier,
        grounded=grounded or None,
    )
    subset = SubsetFilter(
        brands=frozenset({brand}) if brand else None,
        kind=ContentKind.AD,
        objective=Objective(objective) if objective else None,
    )
    store = _store(config)
    gateway = build_gateway(store, config.gateway)
    ranked, label = run_ranking(
        store,
        gateway,
        dataset_id,
        ranker,
        settings,
        subset,
        backend or config.gateway.backend,
        temperature=config.gateway.temperature,
    )
    summary = [f"ranker={label} candidates={len(ranked.candidate_ids)}"]
    if ranker == "llm":
        summary.append(f"ensemble_runs={settings.ensemble_runs} grounded={settings.grounded}")
    else:
        summary.append(f"alpha={settings.alpha} beta={settings.beta} classifier={settings.classifier}")
    _emit(ranked.to_payload(), summary)


@main.command()
@click.argument("dataset_id")
@click.option("--rankers", required=True, help="Comma-separated ranker labels (e.g. score,llm-gd).")
@click.option("--relevance-size", "-R", "relevance_size", type=int, default=None)
@click.option("--cutoffs", default=None, help="Comma-separated cutoffs (default 3,5,10).")
@click.pass_obj
@guarded
def evaluate(config, dataset_id, rankers, relevance_size, cutoffs):
    """nDCG@k / Recall@k comparison table over stored rankings."""
    eval_config = EvalConfig(
        relevance_size=relevance_size or config.evaluation.relevance_size,
        cutoffs=tuple(int(c) for c in cutoffs.split(",")) if cutoffs else config.evaluation.cutoffs,
    )
    store = _store(config)
    labels = [label.strip() for label in rankers.split(",") if label.strip()]
    rows, report = run_evaluation(store, dataset_id, labels, eval_config)
    _emit({"rows": [r.to_payload() for r in rows]}, ["", report])


@main.command()
@click.argument("dataset_id")
@click.option("--own", required=True)
@click.option("--competitor", required=True)
@click.pass_obj
@guarded
def opportunities(config, dataset_id, own, competitor):
    """Persona x challenge gap matrix with the automatic MaxGap pick."""
    payload = run_opportunities(_store(config), dataset_id, own, competitor)
    cell = payload["selected"]
    note = " (no positive gap)" if payload["not_underexploited"] else ""
    _emit(
        payload,
        [
            f"selected {cell['persona_id']} x {cell['challenge_id']} "
            f"gap={cell['gap']:.3f} volume={cell['volume']}{note}"
        ],
    )


@main.command()
@click.argument("dataset_id")
@click.option("--persona", required=True)
@click.option("--challenge", required=True)
@click.option("--brand", required=True)
@click.option("--backend", default=None)
@click.pass_obj
@guarded
def story(config, dataset_id, persona, challenge, brand, backend):
    """Generate a character and story brief for a persona x challenge pair."""
    store = _store(config)
    gateway = build_gateway(store, config.gateway)
    result, brief, brief_path = run_story(
        store, gateway, dataset_id, persona, challenge, brand, backend or config.gateway.backend
    )
    _emit(result.to_payload(), [f"brief written to {brief_path}", "", brief])


@main.command()
@click.option("--port", type=int, default=None)
@click.option("--host", default=None)
@click.pass_obj
@guarded
def serve(config, port, host):
    """Run the HTTP JSON API."""
    import uvicorn

    from .service import create_app

    service = override(config.service, port=port, host=host)
    app = create_app(config=config)
    uvicorn.run(app, host=service.host, port=service.port, log_level="info")


@main.command()
@click.option("--out", "out_dir", default="somonitor-demo", help="Output directory.")
@click.option("--n", "n", type=int, default=200)
@click.option("--seed", type=int, default=7)
@click.pass_obj
@guarded
def demo(config, out_dir, n, seed):
    """Full offline pipeline on a bundled synthetic corpus."""
    from .pipeline import run_demo

    summary = run_demo(out_dir, n=n, seed=seed, config=config)
    report = summary.pop("report")
    _emit(
        summary,
        [
            "",
            report,
            f"demo complete: {summary['persona_count']} personas, "
            f"{summary['challenge_count']} challenges, story brief at {summary['brief_path']}",
        ],
    )


if __name__ == "__main__":
    main()
