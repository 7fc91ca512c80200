"""Per-ad content pillar extraction through the gateway.

Each creative is sent once through a prompt template that demands a
standardized "Field: value" response; the parser is tolerant of reordering,
case, and surrounding prose, but strict about the six required fields.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .domain import AdCreative, ContentPillars, PILLAR_FIELDS
from .errors import SomonitorError
from .gateway import CompletionRequest, Gateway, PromptTemplate, load_template, render_prompt
from .store import ArtifactKey, Store
from .util import parse_labeled_lines, short_digest

SYSTEM_PROMPT = (
    "You are a precise marketing analytics assistant. "
    "Follow the requested response format exactly."
)

_FIELD_LABELS = tuple(f.capitalize() for f in PILLAR_FIELDS)


class PillarKind(enum.Enum):
    AUDIENCE = "audience"
    INSIGHT = "insight"

    @property
    def field(self) -> str:
        return self.value


class ExtractionIncomplete(SomonitorError):
    def __init__(self, missing: list[str]):
        self.missing = missing
        super().__init__(f"response is missing pillar fields: {missing}")


class BatchFailureRateExceeded(SomonitorError):
    pass


@dataclass(frozen=True)
class PillarTable:
    dataset_id: str
    run_id: str
    rows: dict[str, ContentPillars]
    failures: dict[str, str] = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "run_id": self.run_id,
            "rows": {ad_id: p.to_record() for ad_id, p in sorted(self.rows.items())},
            "failures": dict(sorted(self.failures.items())),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "PillarTable":
        return cls(
            dataset_id=payload["dataset_id"],
            run_id=payload["run_id"],
            rows={k: ContentPillars.from_record(v) for k, v in payload["rows"].items()},
            failures=dict(payload.get("failures", {})),
        )


def format_pillar_response(pillars: ContentPillars) -> str:
    """Canonical six-line rendering; the inverse of parse_pillar_response."""
    return "\n".join(f"{label}: {getattr(pillars, f)}" for label, f in zip(_FIELD_LABELS, PILLAR_FIELDS))


def parse_pillar_response(text: str) -> ContentPillars:
    found = parse_labeled_lines(text, PILLAR_FIELDS)
    missing = [f for f in PILLAR_FIELDS if f not in found]
    if missing:
        raise ExtractionIncomplete(missing)
    return ContentPillars(**found, raw_response=text)


def _ad_text_binding(ad: AdCreative) -> str:
    # Images are out of scope for analysis; the reference is surfaced as a
    # plain context string so the prompt still acknowledges the creative.
    if ad.image_ref:
        return f"{ad.text}\n[image: {ad.image_ref}]" if ad.text else f"[image: {ad.image_ref}]"
    return ad.text


def extract_pillars(
    ad: AdCreative,
    template: PromptTemplate,
    gateway: Gateway,
    backend_id: str,
    temperature: float = 0.1,
) -> ContentPillars:
    prompt = render_prompt(template, {"ad_text": _ad_text_binding(ad), "brand": ad.brand})
    result = gateway.complete(
        CompletionRequest(
            system_prompt=SYSTEM_PROMPT,
            user_prompt=prompt,
            backend_id=backend_id,
            temperature=temperature,
        )
    )
    return parse_pillar_response(result.text)


def batch_extract(
    store: Store,
    dataset_id: str,
    gateway: Gateway,
    backend_id: str,
    template: PromptTemplate | None = None,
    failure_ceiling: float = 0.2,
    temperature: float = 0.1,
) -> PillarTable:
    """Extract pillars for every ad in a dataset and persist the table.

    Individual failures are tolerated and recorded; the whole batch aborts
    only when the failure rate exceeds `failure_ceiling`, which protects the
    clustering stages from sparse tables.
    """
    if template is None:
        template = load_template("pillars.v1")
    handle = store.get_handle(dataset_id)
    ads = store.get_ads(dataset_id)
    run_id = short_digest(["pillars", handle.checksum, template.template_id, backend_id])

    def one(ad: AdCreative):
        try:
            return ad.id, extract_pillars(ad, template, gateway, backend_id, temperature), None
        except SomonitorError as exc:
            return ad.id, None, str(exc)

    rows: dict[str, ContentPillars] = {}
    failures: dict[str, str] = {}
    with ThreadPoolExecutor(max_workers=gateway.max_parallel) as pool:
        for ad_id, pillars, error in pool.map(one, ads):
            if pillars is not None:
                rows[ad_id] = pillars
            else:
                failures[ad_id] = error
    if ads and len(failures) / len(ads) > failure_ceiling:
        raise BatchFailureRateExceeded(
            f"{len(failures)}/{len(ads)} extractions failed "
            f"(ceiling {failure_ceiling:.0%})"
        )
    table = PillarTable(dataset_id=dataset_id, run_id=run_id, rows=rows, failures=failures)
    store.put_artifact(ArtifactKey("pillars", dataset_id, run_id), table.to_payload())
    return table
