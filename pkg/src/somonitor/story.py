"""Opportunity mining and story generation.

Persona and challenge cards carry per-brand shares; comparing own vs
competitor share per card yields a gap matrix whose largest cell marks an
underexploited niche. The chosen pair then drives a two-step generation
chain: a fictitious character from the persona, then a narrative that pits
that character against the challenge, closed by an explicit insight.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .clustering import AnnotationParseError, ClusterCard
from .errors import SomonitorError
from .gateway import CompletionRequest, Gateway, PromptTemplate, load_template, render_prompt
from .util import parse_labeled_lines

SYSTEM_PROMPT = (
    "You are a brand storyteller working from cluster analytics. "
    "Follow the requested response format exactly."
)


class UnknownBrand(SomonitorError):
    pass


class EmptyMatrix(SomonitorError):
    pass


class BrandMissingFromNarrative(SomonitorError):
    pass


@dataclass(frozen=True)
class OpportunityCell:
    persona_id: str
    challenge_id: str
    own_share: float
    competitor_share: float
    gap: float
    volume: int


class SelectionPolicy(enum.Enum):
    MAX_GAP = "max_gap"
    MAX_GAP_VOLUME_WEIGHTED = "max_gap_volume_weighted"


@dataclass(frozen=True)
class Selection:
    cell: OpportunityCell
    policy: SelectionPolicy
    not_underexploited: bool


@dataclass(frozen=True)
class Character:
    name: str
    role: str
    background: str
    traits: tuple[str, ...]
    persona_id: str


@dataclass(frozen=True)
class Story:
    character: Character
    challenge_id: str
    brand: str
    narrative: str
    concluding_insight: str
    run_id: str

    def to_payload(self) -> dict:
        return {
            "character": {
                "name": self.character.name,
                "role": self.character.role,
                "background": self.character.background,
                "traits": list(self.character.traits),
                "persona_id": self.character.persona_id,
            },
            "challenge_id": self.challenge_id,
            "brand": self.brand,
            "narrative": self.narrative,
            "concluding_insight": self.concluding_insight,
            "run_id": self.run_id,
        }


def opportunity_matrix(
    persona_cards: Sequence[ClusterCard],
    challenge_cards: Sequence[ClusterCard],
    own_brand: str,
    competitor_brand: str,
) -> list[OpportunityCell]:
    """One cell per persona x challenge pair.

    A cell's gap is the mean of the persona gap and the challenge gap, where
    each gap is competitor share minus own share within that card; volume is
    the combined member count.
    """
    cards = list(persona_cards) + list(challenge_cards)
    for brand in (own_brand, competitor_brand):
        if not any(brand in card.per_brand for card in cards):
            raise UnknownBrand(f"brand {brand!r} appears in no cluster card")
    cells = []
    for persona in sorted(persona_cards, key=lambda c: c.cluster_id):
        for challenge in sorted(challenge_cards, key=lambda c: c.cluster_id):
            own = (persona.brand_share(own_brand) + challenge.brand_share(own_brand)) / 2.0
            competitor = (
                persona.brand_share(competitor_brand) + challenge.brand_share(competitor_brand)
            ) / 2.0
            cells.append(
                OpportunityCell(
                    persona_id=persona.cluster_id,
                    challenge_id=challenge.cluster_id,
                    own_share=own,
                    competitor_share=competitor,
                    gap=competitor - own,
                    volume=persona.member_count + challenge.member_count,
                )
            )
    return cells


def select_opportunity(
    matrix: Sequence[OpportunityCell],
    policy: SelectionPolicy = SelectionPolicy.MAX_GAP,
) -> Selection:
    """Deterministic pick: largest gap (optionally volume-weighted), ties by
    larger volume, then ascending (persona_id, challenge_id). A best cell
    with no positive gap is still returned but flagged not_underexploited."""
    if not matrix:
        raise EmptyMatrix("no opportunity cells to select from")

    def objective(cell: OpportunityCell) -> float:
        if policy == SelectionPolicy.MAX_GAP_VOLUME_WEIGHTED:
            return cell.gap * math.log1p(cell.volume)
        return cell.gap

    best = min(
        matrix,
        key=lambda c: (-objective(c), -c.volume, c.persona_id, c.challenge_id),
    )
    return Selection(cell=best, policy=policy, not_underexploited=best.gap <= 0.0)


def generate_character(
    persona: ClusterCard,
    gateway: Gateway,
    backend_id: str,
    template: Optional[PromptTemplate] = None,
) -> Character:
    if template is None:
        template = load_template("character.v1")
    prompt = render_prompt(
        template,
        {"persona_name": persona.name, "persona_description": persona.description},
    )
    result = gateway.complete(
        CompletionRequest(system_prompt=SYSTEM_PROMPT, user_prompt=prompt, backend_id=backend_id)
    )
    fields = ("name", "role", "background", "traits")
    found = parse_labeled_lines(result.text, fields)
    missing = [f for f in fields if f not in found]
    if missing:
        raise AnnotationParseError(f"character response lacks {missing} lines")
    traits = tuple(t.strip() for t in found["traits"].split(",") if t.strip())
    return Character(
        name=found["name"],
        role=found["role"],
        background=found["background"],
        traits=traits,
        persona_id=persona.cluster_id,
    )


def _split_story_response(text: str) -> tuple[str, str]:
    lines = text.splitlines()
    story_start = None
    insight_start = None
    for i, line in enumerate(lines):
        stripped = line.strip().lstrip("-*# ").strip()
        if story_start is None and stripped.lower().startswith("story:"):
            story_start = i
        if stripped.lower().startswith("insight:"):
            insight_start = i
    if story_start is None or insight_start is None or insight_start <= story_start:
        raise AnnotationParseError('story response needs a "Story:" section and a final "Insight:" line')
    first = lines[story_start]
    first_body = first[first.lower().index("story:") + len("story:") :].strip()
    narrative_lines = ([first_body] if first_body else []) + lines[story_start + 1 : insight_start]
    narrative = "\n".join(narrative_lines).strip()
    closer = "\n".join(lines[insight_start:])
    insight = closer[closer.lower().index("insight:") + len("insight:") :].strip()
    if not narrative or not insight:
        raise AnnotationParseError("story response has an empty narrative or insight")
    return narrative, insight


def generate_story(
    character: Character,
    challenge: ClusterCard,
    brand: str,
    gateway: Gateway,
    backend_id: str,
    template: Optional[PromptTemplate] = None,
) -> Story:
    """Second step of the chain: character + challenge -> narrative + insight.

    The prompt instructs the model to mention the brand; the post-check
    enforces it so no brief ships without its own brand in the narrative.
    """
    if template is None:
        template = load_template("story.v1")
    prompt = render_prompt(
        template,
        {
            "brand": brand,
            "character_name": character.name,
            "character_background": character.background,
            "challenge_name": challenge.name,
            "challenge_description": challenge.description,
        },
    )
    result = gateway.complete(
        CompletionRequest(system_prompt=SYSTEM_PROMPT, user_prompt=prompt, backend_id=backend_id)
    )
    narrative, insight = _split_story_response(result.text)
    if brand.lower() not in narrative.lower():
        raise BrandMissingFromNarrative(f"narrative never mentions {brand!r}")
    return Story(
        character=character,
        challenge_id=challenge.cluster_id,
        brand=brand,
        narrative=narrative,
        concluding_insight=insight,
        run_id=result.request_digest[:16],
    )


def export_brief(
    story: Story,
    persona_name: str = "",
    challenge_name: str = "",
    dataset_id: str = "",
    run_ids: Sequence[str] = (),
) -> str:
    """Deterministic markdown brief: header, character sketch, narrative,
    emphasized concluding insight, provenance footer."""
    character = story.character
    header = [
        f"# Content brief: {story.brand}",
        "",
        f"- brand: {story.brand}",
        f"- persona: {persona_name or character.persona_id} ({character.persona_id})",
        f"- challenge: {challenge_name or story.challenge_id} ({story.challenge_id})",
    ]
    sketch = [
        "",
        "## Character",
        "",
        f"**{character.name}**, {character.role}",
        "",
        character.background,
        "",
        f"Traits: {', '.join(character.traits) if character.traits else '(none)'}",
    ]
    narrative = ["", "## Story", "", story.narrative]
    insight = ["", "## Concluding insight", "", f"> **{story.concluding_insight}**"]
    provenance = [
        "",
        "---",
        f"dataset: {dataset_id or '(unspecified)'}",
        f"runs: {', '.join([story.run_id, *run_ids])}",
        "",
    ]
    return "\n".join(header + sketch + narrative + insight + provenance)
