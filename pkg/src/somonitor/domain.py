"""Core value types shared by the whole pipeline, plus pure derivations on them.

Everything here is an immutable value object: safe to share across threads,
hashable where it makes sense, and serializable to the line-oriented record
format used by the store.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional

from .errors import SomonitorError


class ZeroImpressions(SomonitorError):
    pass


class ClicksExceedImpressions(SomonitorError):
    pass


class InvalidThresholds(SomonitorError):
    pass


class InvalidCreative(SomonitorError):
    pass


class Objective(enum.Enum):
    SALES = "sales"
    CONVERSION = "conversion"
    TRAFFIC = "traffic"
    OTHER = "other"


class ContentKind(enum.Enum):
    AD = "ad"
    ORGANIC = "organic"


class TercileLabel(enum.Enum):
    LOW = "low"
    AVERAGE = "average"
    HIGH = "high"


def parse_timestamp(raw: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = raw.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise InvalidCreative(f"bad timestamp {raw!r}: {exc}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    """Canonical UTC rendering: seconds precision, trailing Z."""
    ts = ts.astimezone(timezone.utc)
    if ts.microsecond:
        return ts.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class AdCreative:
    """One ad or organic post with its performance counters."""

    id: str
    brand: str
    objective: Objective
    kind: ContentKind
    text: str
    impressions: int
    clicks: int
    published_at: datetime
    image_ref: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise InvalidCreative("id must be non-empty")
        if not self.brand:
            raise InvalidCreative(f"{self.id}: brand must be non-empty")
        if self.impressions < 0 or self.clicks < 0:
            raise InvalidCreative(f"{self.id}: counters must be non-negative")
        if self.clicks > self.impressions:
            raise InvalidCreative(
                f"{self.id}: clicks ({self.clicks}) exceed impressions ({self.impressions})"
            )
        if not self.text and not self.image_ref:
            raise InvalidCreative(f"{self.id}: text may be empty only if image_ref is present")

    def ctr(self) -> "CtrObservation":
        return ctr(self.clicks, self.impressions)

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "brand": self.brand,
            "objective": self.objective.value,
            "kind": self.kind.value,
            "text": self.text,
            "impressions": self.impressions,
            "clicks": self.clicks,
            "published_at": format_timestamp(self.published_at),
        }
        if self.image_ref is not None:
            record["image_ref"] = self.image_ref
        return record

    @classmethod
    def from_record(cls, record: dict) -> "AdCreative":
        required = {"id", "brand", "objective", "kind", "text", "impressions", "clicks", "published_at"}
        missing = required - record.keys()
        if missing:
            raise InvalidCreative(f"missing fields: {sorted(missing)}")
        try:
            objective = Objective(str(record["objective"]).lower())
        except ValueError:
            raise InvalidCreative(f"{record['id']}: unknown objective {record['objective']!r}") from None
        try:
            kind = ContentKind(str(record["kind"]).lower())
        except ValueError:
            raise InvalidCreative(f"{record['id']}: unknown kind {record['kind']!r}") from None
        try:
            impressions = int(record["impressions"])
            clicks = int(record["clicks"])
        except (TypeError, ValueError):
            raise InvalidCreative(f"{record['id']}: counters must be integers") from None
        return cls(
            id=str(record["id"]),
            brand=str(record["brand"]),
            objective=objective,
            kind=kind,
            text=str(record["text"]),
            impressions=impressions,
            clicks=clicks,
            published_at=parse_timestamp(str(record["published_at"])),
            image_ref=record.get("image_ref"),
        )


@dataclass(frozen=True)
class CtrObservation:
    """A click-through rate in [0, 1]; `derived` marks values computed from counters."""

    value: float
    derived: bool = False

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise InvalidCreative(f"ctr value {self.value} outside [0, 1]")


def ctr(clicks: int, impressions: int) -> CtrObservation:
    """Observed CTR from raw counters."""
    if clicks < 0 or impressions < 0:
        raise InvalidCreative("counters must be non-negative")
    if impressions == 0:
        raise ZeroImpressions("cannot derive a CTR from zero impressions")
    if clicks > impressions:
        raise ClicksExceedImpressions(f"clicks ({clicks}) exceed impressions ({impressions})")
    return CtrObservation(value=clicks / impressions, derived=True)


def tercile_label(value: float, thresholds: tuple[float, float]) -> TercileLabel:
    """Bucket a CTR into Low / Average / High.

    Boundary convention: each boundary belongs to the upper interval, so
    value == t_lo is Average and value == t_hi is High.
    """
    t_lo, t_hi = thresholds
    if t_lo > t_hi:
        raise InvalidThresholds(f"t_lo ({t_lo}) > t_hi ({t_hi})")
    if not 0.0 <= value <= 1.0:
        raise InvalidCreative(f"ctr value {value} outside [0, 1]")
    if value < t_lo:
        return TercileLabel.LOW
    if value < t_hi:
        return TercileLabel.AVERAGE
    return TercileLabel.HIGH


PILLAR_FIELDS = ("audience", "need", "insight", "product", "archetype", "tone")


@dataclass(frozen=True)
class ContentPillars:
    """The six per-ad attributes extracted by the language model."""

    audience: str
    need: str
    insight: str
    product: str
    archetype: str
    tone: str
    raw_response: str = ""

    def __post_init__(self):
        empty = [f for f in PILLAR_FIELDS if not getattr(self, f)]
        if empty:
            raise InvalidCreative(f"pillar fields must be non-empty: {empty}")

    def to_record(self) -> dict:
        record = {f: getattr(self, f) for f in PILLAR_FIELDS}
        record["raw_response"] = self.raw_response
        return record

    @classmethod
    def from_record(cls, record: dict) -> "ContentPillars":
        return cls(**{f: record[f] for f in PILLAR_FIELDS}, raw_response=record.get("raw_response", ""))


@dataclass(frozen=True)
class CtrDistribution:
    """Classifier output over the High / Average / Low CTR labels."""

    p_high: float
    p_avg: float
    p_low: float

    def __post_init__(self):
        for name in ("p_high", "p_avg", "p_low"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise InvalidCreative(f"{name} = {p} outside [0, 1]")
        total = self.p_high + self.p_avg + self.p_low
        if abs(total - 1.0) > 1e-9:
            raise InvalidCreative(f"distribution sums to {total}, not 1")

    def to_record(self) -> dict:
        return {"p_high": self.p_high, "p_avg": self.p_avg, "p_low": self.p_low}

    @classmethod
    def from_record(cls, record: dict) -> "CtrDistribution":
        return cls(p_high=record["p_high"], p_avg=record["p_avg"], p_low=record["p_low"])


@dataclass(frozen=True)
class ScoreLayer:
    """Affine map from a CTR distribution to a ranking score.

    alpha == beta still scores (every item gets the same value) but yields a
    degenerate ranking; callers can check `degenerate` to warn.
    """

    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise InvalidCreative("score layer coefficients must be finite")

    @property
    def degenerate(self) -> bool:
        return self.alpha == self.beta

    def to_record(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}

    @classmethod
    def from_record(cls, record: dict) -> "ScoreLayer":
        return cls(alpha=record["alpha"], beta=record["beta"])
