from datetime import datetime, timezone

import pytest

from somonitor.domain import AdCreative, ContentKind, Objective
from somonitor.gateway import Gateway
from somonitor.store import Store

TS = datetime(2023, 10, 1, 8, 30, tzinfo=timezone.utc)


def make_ad(
    ad_id="ad-1",
    brand="acme",
    objective=Objective.TRAFFIC,
    kind=ContentKind.AD,
    text="Ride together, save together.",
    impressions=1000,
    clicks=40,
    published_at=TS,
    image_ref=None,
):
    return AdCreative(
        id=ad_id,
        brand=brand,
        objective=objective,
        kind=kind,
        text=text,
        impressions=impressions,
        clicks=clicks,
        published_at=published_at,
        image_ref=image_ref,
    )


@pytest.fixture
def store(tmp_path):
    return Store(tmp_path / "store")


@pytest.fixture
def gateway(store):
    return Gateway(store=store, sleeper=lambda _s: None)


@pytest.fixture
def ad_factory():
    return make_ad
