"""Persona and challenge mining over pillar embeddings.

The clustering stack is written for reproducibility first: seeded k-means++
initialization, Lloyd iterations to an assignment fixpoint, spherical-Gaussian
BIC scoring, and a structure-improvement loop that both splits and merges
clusters until the BIC stops improving. Given the same points and seed, the
result is bit-identical across runs, and permuting the input rows only
relabels clusters (rows are canonically ordered internally).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .errors import SomonitorError
from .gateway import CompletionRequest, Gateway, PromptTemplate, load_template, render_prompt
from .pillars import SYSTEM_PROMPT, PillarKind
from .util import parse_labeled_lines

_BIC_TIE = 1e-12
_MAX_STRUCTURE_ROUNDS = 32


class TooFewPoints(SomonitorError):
    pass


class AnnotationParseError(SomonitorError):
    pass


@dataclass(frozen=True)
class ClusterConfig:
    k0: int = 3
    k_max: int = 50
    max_iterations: int = 100
    seed: int = 0
    outlier_percentile: float = 95.0
    pillar: PillarKind = PillarKind.AUDIENCE

    def __post_init__(self):
        if not 1 <= self.k0 <= self.k_max:
            raise ValueError(f"need 1 <= k0 <= k_max, got k0={self.k0}, k_max={self.k_max}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not 0 < self.outlier_percentile <= 100:
            raise ValueError("outlier_percentile must be in (0, 100]")


@dataclass(frozen=True)
class Partition:
    """A hard assignment of items to K non-empty clusters."""

    assignments: dict[Any, int]
    centroids: np.ndarray
    inertia: float
    K: int

    def __post_init__(self):
        labels = set(self.assignments.values())
        if labels != set(range(self.K)):
            raise ValueError(f"expected labels 0..{self.K - 1}, got {sorted(labels)}")
        if self.inertia < 0:
            raise ValueError("inertia must be non-negative")

    def members(self, label: int) -> list:
        return sorted(i for i, a in self.assignments.items() if a == label)

    def sizes(self) -> list[int]:
        counts = [0] * self.K
        for a in self.assignments.values():
            counts[a] += 1
        return counts

    def with_item_ids(self, ids: Sequence) -> "Partition":
        """Re-key row-index assignments by external item ids."""
        return Partition(
            assignments={ids[i]: a for i, a in self.assignments.items()},
            centroids=self.centroids,
            inertia=self.inertia,
            K=self.K,
        )

    def to_payload(self) -> dict:
        return {
            "assignments": {str(k): v for k, v in sorted(self.assignments.items(), key=lambda kv: str(kv[0]))},
            "centroids": [[float(x) for x in row] for row in self.centroids],
            "inertia": self.inertia,
            "k": self.K,
        }


class BicScore(NamedTuple):
    value: float
    degenerate: bool


# -- core numerics ----------------------------------------------------------


def _check_points(points) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be a 2-d matrix, got shape {points.shape}")
    if not np.isfinite(points).all():
        raise ValueError("points must be finite")
    return points


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[int(rng.integers(n))]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iterations: int):
    """Lloyd iterations to an assignment fixpoint.

    Empty clusters are repaired by reseeding them to the point currently
    farthest from its own centroid (singleton donors are protected so the
    repair never creates a new empty cluster). Returns the final assignment,
    centroids, inertia, and the per-iteration inertia history.
    """
    n = len(points)
    k = len(centroids)
    centroids = centroids.astype(np.float64).copy()
    assign: Optional[np.ndarray] = None
    history: list[float] = []
    for _ in range(max_iterations):
        d2 = _sq_dists(points, centroids)
        new_assign = np.argmin(d2, axis=1)
        counts = np.bincount(new_assign, minlength=k)
        for empty in np.where(counts == 0)[0]:
            own = d2[np.arange(n), new_assign].astype(np.float64)
            own[counts[new_assign] <= 1] = -np.inf
            far = int(np.argmax(own))
            new_assign[far] = empty
            counts = np.bincount(new_assign, minlength=k)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            centroids[j] = points[assign == j].mean(axis=0)
        history.append(float(((points - centroids[assign]) ** 2).sum()))
    inertia = float(((points - centroids[assign]) ** 2).sum())
    return assign, centroids, inertia, history


def _relabel_by_first_member(assign: np.ndarray, centroids: np.ndarray):
    """Canonical labels: cluster of the first item gets 0, and so on."""
    mapping: dict[int, int] = {}
    for a in assign:
        if int(a) not in mapping:
            mapping[int(a)] = len(mapping)
    new_assign = np.array([mapping[int(a)] for a in assign])
    order = sorted(mapping, key=mapping.get)
    return new_assign, centroids[order]


def kmeans(points, k: int, seed=0, max_iterations: int = 100) -> Partition:
    """Seeded k-means++ initialization followed by Lloyd to a fixpoint."""
    points = _check_points(points)
    n = len(points)
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < k:
        raise TooFewPoints(f"{n} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(points, k, rng)
    assign, centroids, inertia, _ = _lloyd(points, centroids, max_iterations)
    assign, centroids = _relabel_by_first_member(assign, centroids)
    return Partition(
        assignments={int(i): int(a) for i, a in enumerate(assign)},
        centroids=centroids,
        inertia=inertia,
        K=k,
    )


def _bic_from_labels(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray, K: int) -> BicScore:
    """Spherical-Gaussian BIC with a pooled variance estimate.

    sigma^2 = RSS / (n - K); per-cluster log-likelihood
    -(n_j d / 2) ln(2 pi sigma^2) - (n_j - K) / 2 + n_j ln(n_j / n);
    penalty (p / 2) ln n with p = (K - 1) + dK + 1 free parameters.
    Collapsed variance (all points on their centroids, or n == K) yields the
    -inf sentinel with the degenerate flag instead of an error.
    """
    n, d = points.shape
    if n <= K:
        return BicScore(float("-inf"), True)
    rss = float(((points - centroids[labels]) ** 2).sum())
    var = rss / (n - K)
    if var <= 0.0:
        return BicScore(float("-inf"), True)
    sizes = np.bincount(labels, minlength=K).astype(np.float64)
    ll = 0.0
    for nj in sizes:
        ll += (
            -(nj * d / 2.0) * math.log(2.0 * math.pi * var)
            - (nj - K) / 2.0
            + nj * math.log(nj / n)
        )
    p = (K - 1) + d * K + 1
    return BicScore(ll - (p / 2.0) * math.log(n), False)


def bic(partition: Partition, points) -> BicScore:
    points = _check_points(points)
    labels = np.array([partition.assignments[i] for i in range(len(points))])
    return _bic_from_labels(points, labels, np.asarray(partition.centroids, np.float64), partition.K)


def _split_pass(pts: np.ndarray, labels: np.ndarray, K: int, config: ClusterConfig, round_idx: int):
    changed = False
    for label in range(K):
        if K >= config.k_max:
            break
        idx = np.where(labels == label)[0]
        if len(idx) < 2:
            continue
        member_pts = pts[idx]
        parent = _bic_from_labels(
            member_pts, np.zeros(len(idx), dtype=int), member_pts.mean(axis=0)[None, :], 1
        )
        sub = kmeans(
            member_pts,
            2,
            seed=[config.seed, round_idx, label],
            max_iterations=config.max_iterations,
        )
        sub_labels = np.array([sub.assignments[i] for i in range(len(idx))])
        split = _bic_from_labels(member_pts, sub_labels, sub.centroids, 2)
        if split.value > parent.value + _BIC_TIE:
            labels[idx[sub_labels == 1]] = K
            K += 1
            changed = True
    return labels, K, changed


def _merge_pass(pts: np.ndarray, labels: np.ndarray, K: int):
    """Undo over-splitting: merge a cluster pair whenever the one-cluster
    model scores at least as well as the two-cluster model on their union.
    Pairs are visited nearest-centroids first; each cluster merges at most
    once per pass."""
    if K < 2:
        return labels, K, False
    centroids = np.stack([pts[labels == j].mean(axis=0) for j in range(K)])
    pairs = sorted(
        ((i, j) for i in range(K) for j in range(i + 1, K)),
        key=lambda p: (float(((centroids[p[0]] - centroids[p[1]]) ** 2).sum()), p),
    )
    consumed: set[int] = set()
    changed = False
    for i, j in pairs:
        if i in consumed or j in consumed:
            continue
        idx = np.where((labels == i) | (labels == j))[0]
        sub_pts = pts[idx]
        sub_labels = (labels[idx] == j).astype(int)
        pair_centroids = np.stack(
            [sub_pts[sub_labels == 0].mean(axis=0), sub_pts[sub_labels == 1].mean(axis=0)]
        )
        pair = _bic_from_labels(sub_pts, sub_labels, pair_centroids, 2)
        merged = _bic_from_labels(
            sub_pts, np.zeros(len(idx), dtype=int), sub_pts.mean(axis=0)[None, :], 1
        )
        if not (pair.value > merged.value + _BIC_TIE):
            labels[labels == j] = i
            consumed.update((i, j))
            changed = True
    if changed:
        _, labels = np.unique(labels, return_inverse=True)
        K = int(labels.max()) + 1
    return labels, K, changed


def xmeans(points, config: ClusterConfig) -> Partition:
    """BIC-driven model-size search around seeded k-means.

    Starts from kmeans(k0) and alternates split and merge passes, each gated
    by the local BIC comparison on the affected points, until the structure
    stops changing or K would exceed k_max; a final global Lloyd refinement
    polishes the surviving centroids. The merge pass lets K settle below k0
    when the criterion prefers fewer clusters than the starting guess.
    """
    points = _check_points(points)
    n = len(points)
    if n < config.k0:
        raise TooFewPoints(f"{n} points cannot seed {config.k0} clusters")
    order = np.lexsort(points[:, ::-1].T)
    pts = points[order]
    base = kmeans(pts, config.k0, seed=config.seed, max_iterations=config.max_iterations)
    labels = np.array([base.assignments[i] for i in range(n)])
    K = base.K
    for round_idx in range(_MAX_STRUCTURE_ROUNDS):
        labels, K, split_changed = _split_pass(pts, labels, K, config, round_idx)
        labels, K, merge_changed = _merge_pass(pts, labels, K)
        if not (split_changed or merge_changed):
            break
    centroids = np.stack([pts[labels == j].mean(axis=0) for j in range(K)])
    assign, centroids, inertia, _ = _lloyd(pts, centroids, config.max_iterations)
    original = np.empty(n, dtype=int)
    original[order] = assign
    original, centroids = _relabel_by_first_member(original, centroids)
    return Partition(
        assignments={int(i): int(a) for i, a in enumerate(original)},
        centroids=centroids,
        inertia=inertia,
        K=K,
    )


def filter_outliers(partition: Partition, points, outlier_percentile: float):
    """Drop the far tail of every cluster.

    An item is excluded when its distance to its centroid is strictly above
    the cluster's nearest-rank distance quantile at `outlier_percentile`;
    centroids and inertia are recomputed over the survivors.
    """
    if not 0 < outlier_percentile <= 100:
        raise ValueError("outlier_percentile must be in (0, 100]")
    points = _check_points(points)
    survivors: dict[Any, int] = {}
    excluded: list = []
    centroids = np.array(partition.centroids, dtype=np.float64, copy=True)
    for label in range(partition.K):
        rows = partition.members(label)
        dists = np.linalg.norm(points[rows] - centroids[label], axis=1)
        rank = max(1, math.ceil(outlier_percentile / 100.0 * len(rows)))
        threshold = np.sort(dists)[rank - 1]
        kept_rows = []
        for row, dist in zip(rows, dists):
            if dist > threshold:
                excluded.append(row)
            else:
                survivors[row] = label
                kept_rows.append(row)
        centroids[label] = points[kept_rows].mean(axis=0)
    inertia = 0.0
    for row, label in survivors.items():
        inertia += float(((points[row] - centroids[label]) ** 2).sum())
    filtered = Partition(assignments=survivors, centroids=centroids, inertia=inertia, K=partition.K)
    return filtered, sorted(excluded)


# -- cluster annotation ------------------------------------------------------


@dataclass(frozen=True)
class ClusterCard:
    cluster_id: str
    name: str
    description: str
    member_count: int
    per_brand: dict[str, tuple[int, float]]
    exemplar_ids: tuple[str, ...] = ()

    def __post_init__(self):
        total = sum(c for c, _ in self.per_brand.values())
        if total != self.member_count:
            raise ValueError(
                f"{self.cluster_id}: per-brand counts sum to {total}, member_count is {self.member_count}"
            )
        share_sum = sum(s for _, s in self.per_brand.values())
        if self.per_brand and abs(share_sum - 1.0) > 1e-9:
            raise ValueError(f"{self.cluster_id}: shares sum to {share_sum}")

    def brand_share(self, brand: str) -> float:
        return self.per_brand.get(brand, (0, 0.0))[1]

    def to_payload(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "name": self.name,
            "description": self.description,
            "member_count": self.member_count,
            "per_brand": {
                b: {"count": c, "share": s} for b, (c, s) in sorted(self.per_brand.items())
            },
            "exemplar_ids": list(self.exemplar_ids),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ClusterCard":
        return cls(
            cluster_id=payload["cluster_id"],
            name=payload["name"],
            description=payload["description"],
            member_count=payload["member_count"],
            per_brand={b: (v["count"], v["share"]) for b, v in payload["per_brand"].items()},
            exemplar_ids=tuple(payload.get("exemplar_ids", ())),
        )


def brand_shares(partition: Partition, brands: Mapping[Any, str]) -> dict[int, dict[str, tuple[int, float]]]:
    """Exact per-cluster brand counts and shares (share = count / cluster size)."""
    missing = [i for i in partition.assignments if i not in brands]
    if missing:
        raise ValueError(f"items without a brand: {missing[:5]}")
    shares: dict[int, dict[str, tuple[int, float]]] = {}
    for label in range(partition.K):
        members = partition.members(label)
        counts: dict[str, int] = {}
        for item in members:
            counts[brands[item]] = counts.get(brands[item], 0) + 1
        shares[label] = {b: (c, c / len(members)) for b, c in sorted(counts.items())}
    return shares


def annotate_cluster(
    cluster_id: str,
    member_pillars: Mapping[str, Any],
    kind: PillarKind,
    brands: Mapping[str, str],
    gateway: Gateway,
    backend_id: str,
    template: Optional[PromptTemplate] = None,
    exemplar_limit: int = 20,
) -> ClusterCard:
    """Name and describe one cluster via the gateway.

    Only the name and description come from the model; member counts and
    per-brand shares are computed locally and never delegated.
    """
    if not member_pillars:
        raise ValueError(f"{cluster_id}: cannot annotate an empty cluster")
    if template is None:
        template = load_template("cluster_card.v1")
    exemplar_ids = tuple(sorted(member_pillars))[:exemplar_limit]
    values = [getattr(member_pillars[i], kind.field) for i in exemplar_ids]
    prompt = render_prompt(
        template,
        {"pillar": kind.value, "exemplars": "\n".join(f"- {v}" for v in values)},
    )
    result = gateway.complete(
        CompletionRequest(system_prompt=SYSTEM_PROMPT, user_prompt=prompt, backend_id=backend_id)
    )
    found = parse_labeled_lines(result.text, ("name", "description"))
    missing = [f for f in ("name", "description") if f not in found]
    if missing:
        raise AnnotationParseError(f"{cluster_id}: response lacks {missing} lines")
    counts: dict[str, int] = {}
    for item in member_pillars:
        counts[brands[item]] = counts.get(brands[item], 0) + 1
    total = len(member_pillars)
    per_brand = {b: (c, c / total) for b, c in sorted(counts.items())}
    return ClusterCard(
        cluster_id=cluster_id,
        name=found["name"],
        description=found["description"],
        member_count=total,
        per_brand=per_brand,
        exemplar_ids=exemplar_ids,
    )
