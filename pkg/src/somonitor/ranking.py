"""Two ways to rank creatives by expected performance.

The score path pushes a pluggable CTR classifier's label distribution
through the affine score layer; the LLM path elicits orderings from a
completion backend (optionally grounded with labeled exemplar ads) and
aggregates several runs by summing rank positions.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .backends import HashingEmbeddingBackend
from .domain import AdCreative, CtrDistribution, ScoreLayer, tercile_label
from .errors import SomonitorError
from .gateway import (
    BackendUnavailable,
    CompletionRequest,
    Gateway,
    PromptTemplate,
    load_template,
    render_prompt,
)

SYSTEM_PROMPT = (
    "You are a marketing performance analyst. "
    "Answer with the requested format only, no commentary."
)

EXCERPT_CHARS = 500


class UnknownClassifier(SomonitorError):
    pass


class MissingPerformance(SomonitorError):
    pass


class PoolTooSmall(SomonitorError):
    pass


class UnparsableRanking(SomonitorError):
    pass


class AllRunsFailed(SomonitorError):
    pass


class RankerKind(enum.Enum):
    SCORE_LAYER = "score_layer"
    LLM_SINGLE = "llm_single"
    LLM_ENSEMBLE = "llm_ensemble"


@dataclass(frozen=True)
class RankedList:
    """A full ordering of a candidate set, with provenance.

    `degraded` marks ensembles where more than half of the runs failed and
    the order was computed from the survivors.
    """

    dataset_id: str
    candidate_ids: tuple[str, ...]
    ranker: RankerKind
    grounded: bool = False
    scores: Optional[tuple[float, ...]] = None
    run_ids: tuple[str, ...] = ()
    run_orderings: tuple[tuple[str, ...], ...] = ()
    degraded: bool = False

    def __post_init__(self):
        if len(set(self.candidate_ids)) != len(self.candidate_ids):
            raise ValueError("candidate_ids contains duplicates")
        if self.scores is not None:
            if len(self.scores) != len(self.candidate_ids):
                raise ValueError("scores must parallel candidate_ids")
            for a, b in zip(self.scores, self.scores[1:]):
                if b > a:
                    raise ValueError("scores must be non-increasing")

    def to_payload(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "candidate_ids": list(self.candidate_ids),
            "ranker": self.ranker.value,
            "grounded": self.grounded,
            "scores": list(self.scores) if self.scores is not None else None,
            "run_ids": list(self.run_ids),
            "run_orderings": [list(r) for r in self.run_orderings],
            "degraded": self.degraded,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "RankedList":
        return cls(
            dataset_id=payload["dataset_id"],
            candidate_ids=tuple(payload["candidate_ids"]),
            ranker=RankerKind(payload["ranker"]),
            grounded=payload.get("grounded", False),
            scores=tuple(payload["scores"]) if payload.get("scores") is not None else None,
            run_ids=tuple(payload.get("run_ids", ())),
            run_orderings=tuple(tuple(r) for r in payload.get("run_orderings", ())),
            degraded=payload.get("degraded", False),
        )


@dataclass(frozen=True)
class RankerConfig:
    temperature: float = 0.1
    ensemble_runs: int = 5
    grounding_exemplars: int = 3
    backend_id: str = "offline"
    seed_base: int = 0

    def __post_init__(self):
        if self.ensemble_runs < 1:
            raise ValueError("ensemble_runs must be at least 1")
        if self.grounding_exemplars not in (0, 3):
            raise ValueError("grounding uses exactly 0 or 3 exemplars")


# -- CTR classifiers ---------------------------------------------------------


Classifier = Callable[[AdCreative], CtrDistribution]


class ClassifierRegistry:
    def __init__(self):
        self._classifiers: dict[str, Classifier] = {}

    def register(self, classifier_id: str, classifier: Classifier) -> None:
        self._classifiers[classifier_id] = classifier

    def classify(self, ad: AdCreative, classifier_id: str) -> CtrDistribution:
        if classifier_id not in self._classifiers:
            raise UnknownClassifier(classifier_id)
        return self._classifiers[classifier_id](ad)


def classify_ctr(ad: AdCreative, classifier_id: str, registry: ClassifierRegistry) -> CtrDistribution:
    return registry.classify(ad, classifier_id)


def make_oracle_classifier(ads: Sequence[AdCreative]) -> Classifier:
    """Desk-scale oracle: terciles of the observed CTRs in `ads` define the
    label, which then gets probability 0.8 (0.1 on each other label)."""
    ctrs = sorted(a.ctr().value for a in ads if a.impressions > 0)
    if not ctrs:
        raise MissingPerformance("oracle needs at least one ad with impressions")
    m = len(ctrs)
    thresholds = (ctrs[m // 3], ctrs[(2 * m) // 3] if (2 * m) // 3 < m else ctrs[-1])

    def classify(ad: AdCreative) -> CtrDistribution:
        if ad.impressions == 0:
            raise MissingPerformance(f"{ad.id} has no impressions")
        label = tercile_label(ad.ctr().value, thresholds)
        probs = {"low": 0.1, "average": 0.1, "high": 0.1}
        probs[label.value] = 0.8
        return CtrDistribution(p_high=probs["high"], p_avg=probs["average"], p_low=probs["low"])

    return classify


_LEXICAL_FEATURE_SEED = 7
_LEXICAL_WEIGHT_SEED = 11


def make_lexical_classifier(d: int = 256) -> Classifier:
    """Baseline with fixed shipped weights: hashed text features through a
    softmax over the three labels. Content-only, no performance peeking."""
    embedder = HashingEmbeddingBackend(d=d, seed=_LEXICAL_FEATURE_SEED)
    weights = np.random.default_rng(_LEXICAL_WEIGHT_SEED).standard_normal((3, d))

    def classify(ad: AdCreative) -> CtrDistribution:
        vec = embedder.embed_one(ad.text)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
        logits = weights @ vec
        exp = np.exp(logits - logits.max())
        probs = exp / exp.sum()
        return CtrDistribution(p_high=float(probs[0]), p_avg=float(probs[1]), p_low=float(probs[2]))

    return classify


def default_registry(ads: Optional[Sequence[AdCreative]] = None) -> ClassifierRegistry:
    registry = ClassifierRegistry()
    registry.register("lexical-baseline", make_lexical_classifier())
    if ads:
        registry.register("oracle", make_oracle_classifier(ads))
    return registry


# -- score path ---------------------------------------------------------------


def score(dist: CtrDistribution, layer: ScoreLayer) -> float:
    return layer.alpha * dist.p_high + layer.beta * (1.0 - dist.p_high)


def rank_by_score(
    candidates: Sequence[AdCreative],
    layer: ScoreLayer,
    classifier_id: str,
    registry: ClassifierRegistry,
    dataset_id: str = "",
) -> RankedList:
    """Sort by score descending; score ties fall back to ascending ad id."""
    if not candidates:
        raise ValueError("need at least one candidate")
    scored = []
    for ad in candidates:
        dist = registry.classify(ad, classifier_id)
        scored.append((score(dist, layer), ad.id))
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return RankedList(
        dataset_id=dataset_id,
        candidate_ids=tuple(ad_id for _, ad_id in scored),
        scores=tuple(s for s, _ in scored),
        ranker=RankerKind.SCORE_LAYER,
        grounded=False,
    )


# -- LLM path -----------------------------------------------------------------


def _flatten(text: str, limit: int = EXCERPT_CHARS) -> str:
    return " ".join(text.split())[:limit]


@dataclass(frozen=True)
class GroundingExemplar:
    ad_id: str
    excerpt: str
    ctr_value: float
    rank_label: str


@dataclass(frozen=True)
class GroundingBlock:
    best: GroundingExemplar
    average: GroundingExemplar
    worst: GroundingExemplar
    source_brand: str

    def __post_init__(self):
        ids = {self.best.ad_id, self.average.ad_id, self.worst.ad_id}
        if len(ids) != 3:
            raise ValueError("grounding exemplars must be three distinct ads")

    @property
    def exemplar_ids(self) -> frozenset[str]:
        return frozenset((self.best.ad_id, self.average.ad_id, self.worst.ad_id))

    def render(self) -> str:
        return (
            f"Three example advertisements from {self.source_brand} with known CTR rank:\n"
            f'- best performer: "{self.best.excerpt}"\n'
            f'- average performer: "{self.average.excerpt}"\n'
            f'- worst performer: "{self.worst.excerpt}"'
        )


def build_grounding_block(
    brand_pool: Sequence[AdCreative],
    exclude_ids: frozenset[str] = frozenset(),
    excerpt_chars: int = 280,
) -> GroundingBlock:
    """Pick best / median / worst CTR exemplars from one brand's pool.

    Ads listed in `exclude_ids` (the candidates under evaluation) are
    dropped first, which keeps the exemplars disjoint from the ranked set.
    The average exemplar is the lower median for even pool sizes.
    """
    pool = [a for a in brand_pool if a.id not in exclude_ids]
    brands = {a.brand for a in pool}
    if len(brands) > 1:
        raise ValueError(f"grounding pool spans several brands: {sorted(brands)}")
    without_ctr = [a.id for a in pool if a.impressions == 0]
    if without_ctr:
        raise MissingPerformance(f"pool ads without impressions: {without_ctr[:5]}")
    if len(pool) < 3:
        raise PoolTooSmall(f"grounding needs 3 ads, pool has {len(pool)}")
    ordered = sorted(pool, key=lambda a: (a.ctr().value, a.id))

    def exemplar(ad: AdCreative, label: str) -> GroundingExemplar:
        return GroundingExemplar(
            ad_id=ad.id,
            excerpt=_flatten(ad.text, excerpt_chars),
            ctr_value=ad.ctr().value,
            rank_label=label,
        )

    return GroundingBlock(
        best=exemplar(ordered[-1], "best"),
        average=exemplar(ordered[(len(ordered) - 1) // 2], "average"),
        worst=exemplar(ordered[0], "worst"),
        source_brand=ordered[0].brand,
    )


def _parse_ordering(response: str, candidate_ids: Sequence[str]) -> list[str]:
    """Recover a full permutation from free-form model output.

    Each candidate id is matched at word-ish boundaries; the first occurrence
    fixes its position (so duplicates keep the first), ids the model dropped
    are appended in original input order, and fewer than half recognized is
    an UnparsableRanking.
    """
    positions = []
    for cid in candidate_ids:
        pattern = re.compile(rf"(?<![A-Za-z0-9_-]){re.escape(cid)}(?![A-Za-z0-9_-])")
        m = pattern.search(response)
        if m:
            positions.append((m.start(), cid))
    if 2 * len(positions) < len(candidate_ids):
        raise UnparsableRanking(
            f"recognized only {len(positions)} of {len(candidate_ids)} candidate ids"
        )
    recognized = [cid for _, cid in sorted(positions)]
    seen = set(recognized)
    return recognized + [cid for cid in candidate_ids if cid not in seen]


def llm_rank_once(
    candidates: Sequence[AdCreative],
    config: RankerConfig,
    gateway: Gateway,
    grounding: Optional[GroundingBlock] = None,
    run_index: int = 0,
    dataset_id: str = "",
    template: Optional[PromptTemplate] = None,
) -> RankedList:
    if len(candidates) < 2:
        raise ValueError("ranking needs at least two candidates")
    if grounding is not None:
        overlap = grounding.exemplar_ids & {a.id for a in candidates}
        if overlap:
            raise ValueError(f"grounding exemplars overlap candidates: {sorted(overlap)}")
    if template is None:
        template = load_template("ranking.v1")
    candidate_ids = [a.id for a in candidates]
    prompt = render_prompt(
        template,
        {
            "grounding": grounding.render() if grounding is not None else "",
            "candidates": "\n".join(f"- {a.id}: {_flatten(a.text)}" for a in candidates),
        },
    )
    result = gateway.complete(
        CompletionRequest(
            system_prompt=SYSTEM_PROMPT,
            user_prompt=prompt,
            backend_id=config.backend_id,
            temperature=config.temperature,
            seed=config.seed_base + run_index,
        )
    )
    ordering = _parse_ordering(result.text, candidate_ids)
    return RankedList(
        dataset_id=dataset_id,
        candidate_ids=tuple(ordering),
        ranker=RankerKind.LLM_SINGLE,
        grounded=grounding is not None,
        run_ids=(result.request_digest[:16],),
    )


def ensemble_rank(
    candidates: Sequence[AdCreative],
    config: RankerConfig,
    gateway: Gateway,
    grounding: Optional[GroundingBlock] = None,
    dataset_id: str = "",
    template: Optional[PromptTemplate] = None,
) -> RankedList:
    """Aggregate several elicited orderings by total 1-based rank position.

    The final order is ascending by total, ties broken by ascending ad id.
    Failed runs are dropped; losing more than half flags the result as
    degraded, losing all of them raises AllRunsFailed.
    """
    runs: list[RankedList] = []
    failures: list[str] = []
    for run_index in range(config.ensemble_runs):
        try:
            runs.append(
                llm_rank_once(
                    candidates,
                    config,
                    gateway,
                    grounding=grounding,
                    run_index=run_index,
                    dataset_id=dataset_id,
                    template=template,
                )
            )
        except (UnparsableRanking, BackendUnavailable) as exc:
            failures.append(f"run {run_index}: {exc}")
    if not runs:
        raise AllRunsFailed("; ".join(failures))
    totals: dict[str, int] = {a.id: 0 for a in candidates}
    for run in runs:
        for position, ad_id in enumerate(run.candidate_ids, start=1):
            totals[ad_id] += position
    final = sorted(totals, key=lambda ad_id: (totals[ad_id], ad_id))
    return RankedList(
        dataset_id=dataset_id,
        candidate_ids=tuple(final),
        ranker=RankerKind.LLM_ENSEMBLE,
        grounded=grounding is not None,
        run_ids=tuple(r.run_ids[0] for r in runs),
        run_orderings=tuple(r.candidate_ids for r in runs),
        degraded=len(failures) * 2 > config.ensemble_runs,
    )
