"""Seeded synthetic corpora for demos, fixtures, and offline tests.

The demo corpus plants three audience themes and three insight themes whose
keywords line up with the offline rule backend's lexicons, plus a brand
imbalance per theme, so the full pipeline produces recognizable personas,
challenges, and one clearly underexploited persona x challenge cell.
"""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import numpy as np

from .domain import AdCreative, ContentKind, Objective

OWN_BRAND = "novaride"
COMPETITOR_BRAND = "swifttransit"

_AUDIENCE_SENTENCES = (
    (
        "Keep every delivery on time with one dispatch view.",
        "Your courier fleet deserves smarter routing.",
        "Logistics teams move faster when rides are one tap away.",
    ),
    (
        "Close the month without chasing a single expense line.",
        "One invoice for every business ride keeps finance calm.",
        "Stretch the travel budget further every quarter.",
    ),
    (
        "Give your staff a commute they stop complaining about.",
        "A shuttle plan your employees will actually use.",
        "A happier workforce starts with smoother mornings.",
    ),
)

_INSIGHT_SENTENCES = (
    (
        "No more shoebox receipts or weekend spreadsheet marathons.",
        "Manual paperwork steals hours from every week.",
        "Stop retyping receipts into a spreadsheet.",
    ),
    (
        "Late pickups drain morale faster than anything.",
        "Unreliable rides cost you more than minutes.",
        "Turnover starts with one missed pickup.",
    ),
    (
        "Scale rides as fast as you onboard new hires.",
        "Built for teams that grow city by city.",
        "Expansion should not mean more admin.",
    ),
)

_CLOSERS = (
    "Try it this week.",
    "Book a demo today!",
    "See why teams switch.",
    "Start in minutes.",
)

# Per-theme CTR centers: insight themes drive performance so relevance sets
# and grounding exemplars are meaningful downstream.
_THEME_CTR = (0.035, 0.022, 0.048)

_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def make_demo_corpus(n: int = 200, seed: int = 7) -> list[AdCreative]:
    rng = np.random.default_rng(seed)
    ads = []
    objectives = list(Objective)
    for i in range(n):
        audience_theme = int(rng.choice(3, p=[0.3, 0.3, 0.4]))
        insight_theme = int(rng.choice(3, p=[0.4, 0.3, 0.3]))
        p_competitor = 0.45
        if audience_theme == 0:
            p_competitor += 0.25
        if audience_theme == 2:
            p_competitor -= 0.20
        if insight_theme == 2:
            p_competitor += 0.25
        if insight_theme == 0:
            p_competitor -= 0.20
        brand = COMPETITOR_BRAND if rng.random() < min(max(p_competitor, 0.05), 0.95) else OWN_BRAND
        text = " ".join(
            (
                _AUDIENCE_SENTENCES[audience_theme][int(rng.integers(3))],
                _INSIGHT_SENTENCES[insight_theme][int(rng.integers(3))],
                _CLOSERS[int(rng.integers(len(_CLOSERS)))],
                f"Offer code NV-{i:04d}.",
            )
        )
        impressions = int(rng.integers(2000, 20001))
        ctr = float(np.clip(_THEME_CTR[insight_theme] + rng.normal(0.0, 0.008), 0.002, 0.12))
        ads.append(
            AdCreative(
                id=f"ad-{i:04d}",
                brand=brand,
                objective=objectives[int(rng.choice(4, p=[0.2, 0.25, 0.4, 0.15]))],
                kind=ContentKind.AD if rng.random() < 0.75 else ContentKind.ORGANIC,
                text=text,
                impressions=impressions,
                clicks=int(round(ctr * impressions)),
                published_at=_EPOCH + timedelta(days=int(rng.integers(0, 180)), hours=int(rng.integers(0, 24))),
                image_ref=f"img-{i:04d}" if rng.random() < 0.3 else None,
            )
        )
    return ads


def make_brand_split_corpus(
    count_a: int = 849,
    count_b: int = 271,
    brand_a: str = "brand-a",
    brand_b: str = "brand-b",
    seed: int = 11,
) -> list[AdCreative]:
    """Two-brand all-ads corpus with exact per-brand counts."""
    rng = np.random.default_rng(seed)
    ads = []
    for i in range(count_a + count_b):
        impressions = int(rng.integers(1000, 5001))
        ads.append(
            AdCreative(
                id=f"biz-{i:04d}",
                brand=brand_a if i < count_a else brand_b,
                objective=Objective.TRAFFIC,
                kind=ContentKind.AD,
                text=f"Business ride offer {i} for teams on the move.",
                impressions=impressions,
                clicks=int(impressions * 0.03),
                published_at=_EPOCH + timedelta(hours=i),
            )
        )
    return ads


def make_census_corpus(ads_count: int = 3703, organic_count: int = 2264, seed: int = 13) -> list[AdCreative]:
    """Minimal-content corpus with exact ad / organic counts."""
    rng = np.random.default_rng(seed)
    items = []
    total = ads_count + organic_count
    for i in range(total):
        impressions = int(rng.integers(500, 2001))
        items.append(
            AdCreative(
                id=f"item-{i:05d}",
                brand="brand-a" if i % 2 == 0 else "brand-b",
                objective=Objective.OTHER,
                kind=ContentKind.AD if i < ads_count else ContentKind.ORGANIC,
                text=f"Content piece {i}.",
                impressions=impressions,
                clicks=int(impressions * 0.02),
                published_at=_EPOCH + timedelta(minutes=i),
            )
        )
    return items
