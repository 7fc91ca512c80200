"""Offline ranking evaluation: CTR-derived relevance, Recall@k, nDCG@k.

Relevance is the top-R set by observed CTR (R is configuration, default 5),
gains are binary, and the discount is the standard log2(i + 1). Reports are
rendered both as artifacts and as an aligned plain-text table with columns
ranker / nDCG@5 / nDCG@10 / Recall@3 / Recall@5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

from .domain import AdCreative
from .errors import SomonitorError
from .ranking import RankedList


class RTooLarge(SomonitorError):
    pass


class CandidateMismatch(SomonitorError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    relevance_size: int = 5
    cutoffs: tuple[int, ...] = (3, 5, 10)
    gain: str = "binary"
    group_by: tuple[str, ...] | None = ("brand", "objective")

    def __post_init__(self):
        if self.relevance_size < 1:
            raise ValueError("relevance_size must be at least 1")
        if not self.cutoffs or any(k < 1 for k in self.cutoffs):
            raise ValueError("cutoffs must be positive")
        if tuple(sorted(self.cutoffs)) != tuple(self.cutoffs):
            raise ValueError("cutoffs must be sorted ascending")
        if self.gain != "binary":
            raise ValueError("only binary gains are supported")


@dataclass(frozen=True)
class MetricRow:
    ranker: str
    group: str
    ndcg_at: dict[int, float]
    recall_at: dict[int, float]

    def to_payload(self) -> dict:
        return {
            "ranker": self.ranker,
            "group": self.group,
            "ndcg_at": {str(k): v for k, v in sorted(self.ndcg_at.items())},
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
        }


Ranking = Union[RankedList, Sequence[str]]


def _ids(ranking: Ranking) -> tuple[str, ...]:
    if isinstance(ranking, RankedList):
        return ranking.candidate_ids
    return tuple(ranking)


def relevance_set(ads: Sequence[AdCreative], relevance_size: int) -> frozenset[str]:
    """The R ads with highest observed CTR; ties broken by ascending id."""
    if relevance_size > len(ads):
        raise RTooLarge(f"R = {relevance_size} exceeds {len(ads)} ads")
    ordered = sorted(ads, key=lambda a: (-a.ctr().value, a.id))
    return frozenset(a.id for a in ordered[:relevance_size])


def recall_at_k(ranking: Ranking, relevant: Iterable[str], k: int) -> float:
    """|top-k intersect relevant| / |relevant|; k beyond the list uses all of it."""
    relevant = frozenset(relevant)
    if k < 1:
        raise ValueError("k must be at least 1")
    if not relevant:
        raise ValueError("relevant set must be non-empty")
    top = _ids(ranking)[:k]
    return len(relevant.intersection(top)) / len(relevant)


def ndcg_at_k(ranking: Ranking, relevant: Iterable[str], k: int) -> float:
    """Binary-gain nDCG: DCG@k over the ideal DCG with all relevant first.

    An empty relevant set leaves the ideal undefined; that case returns 0.0
    instead of raising so sweeps over sparse groups stay total.
    """
    relevant = frozenset(relevant)
    if k < 1:
        raise ValueError("k must be at least 1")
    if not relevant:
        return 0.0
    top = _ids(ranking)[:k]
    dcg = sum(1.0 / math.log2(i + 1) for i, ad_id in enumerate(top, start=1) if ad_id in relevant)
    ideal = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, len(relevant)) + 1))
    return dcg / ideal


def _group_key(ad: AdCreative, group_by: tuple[str, ...]) -> str:
    parts = []
    for attr in group_by:
        value = getattr(ad, attr)
        parts.append(f"{attr}={getattr(value, 'value', value)}")
    return "|".join(parts)


def evaluate(
    rankings: Mapping[str, Ranking],
    ads: Sequence[AdCreative],
    config: EvalConfig,
) -> list[MetricRow]:
    """One MetricRow per ranker per group.

    Every ranking must cover exactly the given candidate set; per group the
    orderings are restricted to the group's ads and scored against that
    group's top-R relevance set (R clipped to the group size).
    """
    full = sorted(a.id for a in ads)
    for label in sorted(rankings):
        if sorted(_ids(rankings[label])) != full:
            raise CandidateMismatch(f"ranking {label!r} does not cover the candidate set")
    if config.group_by:
        grouped: dict[str, list[AdCreative]] = {}
        for ad in ads:
            grouped.setdefault(_group_key(ad, config.group_by), []).append(ad)
    else:
        grouped = {"all": list(ads)}
    rows = []
    for group in sorted(grouped):
        group_ads = grouped[group]
        group_ids = {a.id for a in group_ads}
        relevant = relevance_set(group_ads, min(config.relevance_size, len(group_ads)))
        for label in sorted(rankings):
            restricted = [i for i in _ids(rankings[label]) if i in group_ids]
            rows.append(
                MetricRow(
                    ranker=label,
                    group=group,
                    ndcg_at={k: ndcg_at_k(restricted, relevant, k) for k in config.cutoffs},
                    recall_at={k: recall_at_k(restricted, relevant, k) for k in config.cutoffs},
                )
            )
    return rows


def format_metric(value: float) -> str:
    """Three decimals, trailing zeros trimmed: 0.6 not 0.600, 1 not 1.000."""
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return text if text else "0"


def render_report(
    rows: Sequence[MetricRow],
    ndcg_cols: tuple[int, ...] = (5, 10),
    recall_cols: tuple[int, ...] = (3, 5),
) -> str:
    """Aligned plain-text comparison table, one block per group."""
    if not rows:
        return "(no metric rows)"
    ndcg_cols = tuple(k for k in ndcg_cols if k in rows[0].ndcg_at) or tuple(sorted(rows[0].ndcg_at))
    recall_cols = tuple(k for k in recall_cols if k in rows[0].recall_at) or tuple(
        sorted(rows[0].recall_at)
    )
    headers = ["ranker"] + [f"nDCG@{k}" for k in ndcg_cols] + [f"Recall@{k}" for k in recall_cols]
    groups: dict[str, list[MetricRow]] = {}
    for row in rows:
        groups.setdefault(row.group, []).append(row)
    lines = []
    for group in sorted(groups):
        table = [headers]
        for row in groups[group]:
            table.append(
                [row.ranker]
                + [format_metric(row.ndcg_at[k]) for k in ndcg_cols]
                + [format_metric(row.recall_at[k]) for k in recall_cols]
            )
        widths = [max(len(r[c]) for r in table) for c in range(len(headers))]
        if len(groups) > 1 or group != "all":
            lines.append(f"group: {group}")
        for r in table:
            cells = [r[0].ljust(widths[0])] + [
                r[c].rjust(widths[c]) for c in range(1, len(headers))
            ]
            lines.append("  ".join(cells).rstrip())
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
