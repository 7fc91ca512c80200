"""Stage orchestration shared by the CLI and the HTTP service.

Every stage reads its inputs from the store, writes one artifact with a
content-derived run id, and returns the payload it persisted. Offline runs
are therefore idempotent: re-running a stage on unchanged inputs rewrites
the same bytes under the same run id.
"""

from __future__ import annotations

from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from .backends import HashingEmbeddingBackend, RemoteChatBackend, RuleCompletionBackend
from .clustering import ClusterConfig, annotate_cluster, filter_outliers, xmeans
from .clustering import ClusterCard
from .config import AppConfig, GatewaySettings, RankSettings
from .domain import ContentKind, ScoreLayer
from .errors import SomonitorError
from .evaluation import EvalConfig, MetricRow, evaluate, render_report
from .gateway import Gateway
from .pillars import PillarKind, PillarTable, batch_extract
from .ranking import (
    RankedList,
    RankerConfig,
    build_grounding_block,
    default_registry,
    ensemble_rank,
    rank_by_score,
)
from .story import Story, export_brief, generate_character, generate_story, opportunity_matrix, select_opportunity
from .store import ArtifactKey, NotFound, Store, SubsetFilter
from .synth import COMPETITOR_BRAND, OWN_BRAND, make_demo_corpus
from .util import canonical_json, short_digest

EMBEDDING_BACKEND = "hashing"


def build_gateway(store: Optional[Store] = None, settings: Optional[GatewaySettings] = None) -> Gateway:
    settings = settings or GatewaySettings()
    gateway = Gateway(
        store=store,
        max_parallel=settings.max_parallel,
        retry_limit=settings.retry_limit,
    )
    gateway.register_completion("offline", RuleCompletionBackend())
    gateway.register_completion("remote", RemoteChatBackend())
    gateway.register_embedding(EMBEDDING_BACKEND, HashingEmbeddingBackend(d=256, seed=0))
    return gateway


def run_pillars(
    store: Store,
    gateway: Gateway,
    dataset_id: str,
    backend_id: str = "offline",
    temperature: float = 0.1,
) -> PillarTable:
    return batch_extract(store, dataset_id, gateway, backend_id, temperature=temperature)


def run_clusters(
    store: Store,
    gateway: Gateway,
    dataset_id: str,
    config: ClusterConfig,
    backend_id: str = "offline",
) -> dict:
    """Embed the chosen pillar, cluster, trim outliers, annotate, persist."""
    handle = store.get_handle(dataset_id)
    table = PillarTable.from_payload(store.get_latest_artifact("pillars", dataset_id))
    ids = sorted(table.rows)
    if not ids:
        raise SomonitorError(f"pillar table for {dataset_id} has no rows")
    texts = [getattr(table.rows[i], config.pillar.field) for i in ids]
    matrix = gateway.embed(texts, EMBEDDING_BACKEND)
    partition = xmeans(matrix.vectors, config)
    filtered, excluded_rows = filter_outliers(partition, matrix.vectors, config.outlier_percentile)
    by_ad = filtered.with_item_ids(ids)
    brands = {ad.id: ad.brand for ad in store.get_ads(dataset_id)}
    cards = []
    for label in range(by_ad.K):
        members = by_ad.members(label)
        cards.append(
            annotate_cluster(
                cluster_id=f"{config.pillar.value}-{label}",
                member_pillars={i: table.rows[i] for i in members},
                kind=config.pillar,
                brands=brands,
                gateway=gateway,
                backend_id=backend_id,
            )
        )
    run_id = short_digest(
        [
            "clusters",
            handle.checksum,
            table.run_id,
            config.pillar.value,
            config.k0,
            config.k_max,
            config.seed,
            config.max_iterations,
            config.outlier_percentile,
            backend_id,
        ]
    )
    payload = {
        "dataset_id": dataset_id,
        "run_id": run_id,
        "pillar": config.pillar.value,
        "config": {
            "k0": config.k0,
            "k_max": config.k_max,
            "seed": config.seed,
            "max_iterations": config.max_iterations,
            "outlier_percentile": config.outlier_percentile,
        },
        "cluster_count": by_ad.K,
        "assignments": {i: by_ad.assignments[i] for i in sorted(by_ad.assignments)},
        "centroids": [[float(x) for x in row] for row in by_ad.centroids],
        "inertia": by_ad.inertia,
        "excluded": [ids[r] for r in excluded_rows],
        "cards": [card.to_payload() for card in cards],
    }
    store.put_artifact(ArtifactKey(f"clusters-{config.pillar.value}", dataset_id, run_id), payload)
    return payload


def load_cards(store: Store, dataset_id: str, pillar: PillarKind) -> list[ClusterCard]:
    payload = store.get_latest_artifact(f"clusters-{pillar.value}", dataset_id)
    return [ClusterCard.from_payload(c) for c in payload["cards"]]


def ranker_label(ranker: str, grounded: bool) -> str:
    return f"{ranker}-gd" if ranker == "llm" and grounded else ranker


def run_ranking(
    store: Store,
    gateway: Gateway,
    dataset_id: str,
    ranker: str,
    settings: RankSettings,
    subset: Optional[SubsetFilter] = None,
    backend_id: str = "offline",
    temperature: float = 0.1,
) -> tuple[RankedList, str]:
    """Rank a candidate subset (default: every ad-kind creative).

    Grounded LLM runs require a single-brand candidate set; the exemplars
    come from that brand's remaining creatives so they stay disjoint from
    the candidates.
    """
    ads = store.get_ads(dataset_id)
    subset = subset or SubsetFilter(kind=ContentKind.AD)
    candidates = [a for a in ads if subset.matches(a)]
    if not candidates:
        raise SomonitorError("candidate subset is empty")
    label = ranker_label(ranker, settings.grounded)
    if ranker == "score":
        registry = default_registry(candidates)
        ranked = rank_by_score(
            candidates,
            ScoreLayer(alpha=settings.alpha, beta=settings.beta),
            settings.classifier,
            registry,
            dataset_id=dataset_id,
        )
    elif ranker == "llm":
        config = RankerConfig(
            temperature=temperature,
            ensemble_runs=settings.ensemble_runs,
            grounding_exemplars=3 if settings.grounded else 0,
            backend_id=backend_id,
            seed_base=settings.seed_base,
        )
        grounding = None
        if settings.grounded:
            brands = {a.brand for a in candidates}
            if len(brands) != 1:
                raise SomonitorError(
                    f"grounded ranking needs a single-brand candidate set, got {sorted(brands)}"
                )
            brand = brands.pop()
            candidate_ids = frozenset(a.id for a in candidates)
            pool = [a for a in ads if a.brand == brand and a.id not in candidate_ids and a.impressions > 0]
            grounding = build_grounding_block(pool, exclude_ids=candidate_ids)
        ranked = ensemble_rank(candidates, config, gateway, grounding=grounding, dataset_id=dataset_id)
    else:
        raise ValueError(f"unknown ranker {ranker!r} (expected 'score' or 'llm')")
    run_id = short_digest(["ranking", label, ranked.to_payload()])
    store.put_artifact(ArtifactKey(f"ranking-{label}", dataset_id, run_id), ranked.to_payload())
    return ranked, label


def run_evaluation(
    store: Store,
    dataset_id: str,
    labels: Sequence[str],
    config: EvalConfig,
) -> tuple[list[MetricRow], str]:
    rankings = {}
    for label in labels:
        rankings[label] = RankedList.from_payload(
            store.get_latest_artifact(f"ranking-{label}", dataset_id)
        )
    first = next(iter(rankings.values()))
    candidate_ids = set(first.candidate_ids)
    ads = [a for a in store.get_ads(dataset_id) if a.id in candidate_ids]
    rows = evaluate(rankings, ads, config)
    report = render_report(rows)
    run_id = short_digest(["evaluation", dataset_id, sorted(labels), [r.to_payload() for r in rows]])
    store.put_artifact(
        ArtifactKey("evaluation", dataset_id, run_id),
        {
            "dataset_id": dataset_id,
            "run_id": run_id,
            "rankers": sorted(labels),
            "rows": [r.to_payload() for r in rows],
            "report": report,
        },
    )
    return rows, report


def run_opportunities(store: Store, dataset_id: str, own: str, competitor: str) -> dict:
    personas = load_cards(store, dataset_id, PillarKind.AUDIENCE)
    challenges = load_cards(store, dataset_id, PillarKind.INSIGHT)
    matrix = opportunity_matrix(personas, challenges, own, competitor)
    selection = select_opportunity(matrix)
    payload = {
        "dataset_id": dataset_id,
        "own": own,
        "competitor": competitor,
        "cells": [asdict(c) for c in matrix],
        "selected": asdict(selection.cell),
        "policy": selection.policy.value,
        "not_underexploited": selection.not_underexploited,
    }
    run_id = short_digest(["opportunities", payload])
    payload["run_id"] = run_id
    store.put_artifact(ArtifactKey("opportunities", dataset_id, run_id), payload)
    return payload


def run_story(
    store: Store,
    gateway: Gateway,
    dataset_id: str,
    persona_id: str,
    challenge_id: str,
    brand: str,
    backend_id: str = "offline",
) -> tuple[Story, str, Path]:
    personas = {c.cluster_id: c for c in load_cards(store, dataset_id, PillarKind.AUDIENCE)}
    challenges = {c.cluster_id: c for c in load_cards(store, dataset_id, PillarKind.INSIGHT)}
    if persona_id not in personas:
        raise NotFound(f"persona {persona_id!r}")
    if challenge_id not in challenges:
        raise NotFound(f"challenge {challenge_id!r}")
    persona = personas[persona_id]
    challenge = challenges[challenge_id]
    character = generate_character(persona, gateway, backend_id)
    story = generate_story(character, challenge, brand, gateway, backend_id)
    cluster_runs = [
        store.latest_run_id("clusters-audience", dataset_id),
        store.latest_run_id("clusters-insight", dataset_id),
    ]
    brief = export_brief(
        story,
        persona_name=persona.name,
        challenge_name=challenge.name,
        dataset_id=dataset_id,
        run_ids=cluster_runs,
    )
    payload = story.to_payload()
    payload["dataset_id"] = dataset_id
    payload["persona_id"] = persona_id
    payload["brief"] = brief
    store.put_artifact(ArtifactKey("story", dataset_id, story.run_id), payload)
    brief_path = store.root / "briefs" / f"{story.run_id}.md"
    brief_path.parent.mkdir(parents=True, exist_ok=True)
    brief_path.write_text(brief, encoding="utf-8")
    return story, brief, brief_path


def run_demo(workdir: str | Path, n: int = 200, seed: int = 7, config: Optional[AppConfig] = None) -> dict:
    """Full offline pipeline on the bundled synthetic corpus.

    Deterministic end to end: scripted backends, content-derived run ids,
    canonical serialization. Returns a summary with ids and paths.
    """
    config = config or AppConfig()
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    store = Store(workdir / "store")
    gateway = build_gateway(store=store, settings=config.gateway)

    corpus = make_demo_corpus(n=n, seed=seed)
    corpus_path = workdir / "demo-corpus.jsonl"
    corpus_path.write_text(
        "".join(canonical_json(a.to_record()) + "\n" for a in corpus), encoding="utf-8"
    )
    handle = store.load_dataset(corpus_path, format="jsonl")

    table = run_pillars(
        store, gateway, handle.dataset_id, temperature=config.gateway.temperature
    )
    cluster_kwargs = dict(
        k0=config.cluster.k0,
        k_max=config.cluster.k_max,
        seed=config.cluster.seed,
        max_iterations=config.cluster.max_iterations,
        outlier_percentile=config.cluster.outlier_percentile,
    )
    personas = run_clusters(
        store, gateway, handle.dataset_id, ClusterConfig(pillar=PillarKind.AUDIENCE, **cluster_kwargs)
    )
    challenges = run_clusters(
        store, gateway, handle.dataset_id, ClusterConfig(pillar=PillarKind.INSIGHT, **cluster_kwargs)
    )

    # Rank one brand-and-objective slice so the grounded run has a held-out
    # exemplar pool and the evaluation has one clean group.
    from .domain import Objective

    subset = SubsetFilter(
        brands=frozenset({OWN_BRAND}), kind=ContentKind.AD, objective=Objective.TRAFFIC
    )
    _, score_label = run_ranking(store, gateway, handle.dataset_id, "score", config.rank, subset)

    grounded = RankSettings(
        alpha=config.rank.alpha,
        beta=config.rank.beta,
        classifier=config.rank.classifier,
        ensemble_runs=config.rank.ensemble_runs,
        grounded=True,
        seed_base=config.rank.seed_base,
    )
    _, llm_label = run_ranking(
        store,
        gateway,
        handle.dataset_id,
        "llm",
        grounded,
        subset,
        temperature=config.gateway.temperature,
    )
    rows, report = run_evaluation(
        store,
        handle.dataset_id,
        [score_label, llm_label],
        EvalConfig(
            relevance_size=config.evaluation.relevance_size, cutoffs=config.evaluation.cutoffs
        ),
    )

    opportunities = run_opportunities(store, handle.dataset_id, OWN_BRAND, COMPETITOR_BRAND)
    story, brief, brief_path = run_story(
        store,
        gateway,
        handle.dataset_id,
        opportunities["selected"]["persona_id"],
        opportunities["selected"]["challenge_id"],
        OWN_BRAND,
    )
    return {
        "workdir": str(workdir),
        "dataset_id": handle.dataset_id,
        "item_count": handle.item_count,
        "pillar_rows": len(table.rows),
        "pillar_failures": len(table.failures),
        "persona_count": personas["cluster_count"],
        "challenge_count": challenges["cluster_count"],
        "rankers": [score_label, llm_label],
        "metric_rows": len(rows),
        "report": report,
        "selected_persona": opportunities["selected"]["persona_id"],
        "selected_challenge": opportunities["selected"]["challenge_id"],
        "story_insight": story.concluding_insight,
        "brief_path": str(brief_path),
    }
