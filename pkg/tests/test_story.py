import pytest
from hypothesis import given, strategies as st

from somonitor.backends import ScriptedCompletionBackend
from somonitor.clustering import AnnotationParseError, ClusterCard
from somonitor.story import (
    BrandMissingFromNarrative,
    Character,
    EmptyMatrix,
    SelectionPolicy,
    Story,
    UnknownBrand,
    export_brief,
    generate_character,
    generate_story,
    opportunity_matrix,
    select_opportunity,
)


def card(cluster_id, own_share, competitor_share, count=100, name=None):
    own = round(own_share * count)
    comp = count - own
    per_brand = {}
    if own:
        per_brand["gojek"] = (own, own / count)
    if comp:
        per_brand["grab"] = (comp, comp / count)
    return ClusterCard(
        cluster_id=cluster_id,
        name=name or cluster_id,
        description=f"description of {cluster_id}",
        member_count=count,
        per_brand=per_brand,
        exemplar_ids=(),
    )


class TestOpportunityMatrix:
    def test_gap_is_mean_of_component_gaps(self):
        personas = [card("p1", own_share=0.3, competitor_share=0.7)]  # persona gap 0.4
        challenges = [card("c1", own_share=0.4, competitor_share=0.6)]  # challenge gap 0.2
        cells = opportunity_matrix(personas, challenges, "gojek", "grab")
        assert len(cells) == 1
        assert cells[0].gap == pytest.approx(0.3)
        assert cells[0].volume == 200

    def test_equal_shares_zero_gap(self):
        personas = [card("p1", 0.5, 0.5), card("p2", 0.5, 0.5)]
        challenges = [card("c1", 0.5, 0.5)]
        cells = opportunity_matrix(personas, challenges, "gojek", "grab")
        assert all(c.gap == pytest.approx(0.0) for c in cells)

    def test_competitor_heavy_pair_has_max_gap(self):
        personas = [card("p1", 0.2, 0.8), card("p2", 0.6, 0.4), card("p3", 0.5, 0.5)]
        challenges = [card("c1", 0.5, 0.5), card("c2", 0.6, 0.4), card("c3", 0.1, 0.9)]
        cells = opportunity_matrix(personas, challenges, "gojek", "grab")
        best = max(cells, key=lambda c: c.gap)
        assert (best.persona_id, best.challenge_id) == ("p1", "c3")

    def test_unknown_brand(self):
        with pytest.raises(UnknownBrand):
            opportunity_matrix([card("p1", 0.5, 0.5)], [card("c1", 0.5, 0.5)], "gojek", "ghost")

    def test_one_cell_per_pair(self):
        personas = [card(f"p{i}", 0.5, 0.5) for i in range(3)]
        challenges = [card(f"c{i}", 0.5, 0.5) for i in range(2)]
        cells = opportunity_matrix(personas, challenges, "gojek", "grab")
        assert len(cells) == 6
        assert len({(c.persona_id, c.challenge_id) for c in cells}) == 6

    @given(
        own_p=st.floats(min_value=0.05, max_value=0.95, allow_nan=False),
        own_c=st.floats(min_value=0.05, max_value=0.95, allow_nan=False),
    )
    def test_gap_antisymmetric_under_brand_swap(self, own_p, own_c):
        personas = [card("p1", own_p, 1 - own_p)]
        challenges = [card("c1", own_c, 1 - own_c)]
        fwd = opportunity_matrix(personas, challenges, "gojek", "grab")[0]
        rev = opportunity_matrix(personas, challenges, "grab", "gojek")[0]
        assert fwd.gap == pytest.approx(-rev.gap)


def cell(gap, volume, pid="p", cid="c"):
    from somonitor.story import OpportunityCell

    return OpportunityCell(
        persona_id=pid,
        challenge_id=cid,
        own_share=0.5 - gap / 2,
        competitor_share=0.5 + gap / 2,
        gap=gap,
        volume=volume,
    )


class TestSelectOpportunity:
    def test_tie_broken_by_volume(self):
        matrix = [cell(0.3, 100, "p1", "c1"), cell(0.1, 50, "p2", "c2"), cell(0.3, 200, "p3", "c3")]
        selection = select_opportunity(matrix)
        assert selection.cell.persona_id == "p3"
        assert not selection.not_underexploited

    def test_single_cell(self):
        selection = select_opportunity([cell(0.2, 10)])
        assert selection.cell.gap == pytest.approx(0.2)

    def test_all_negative_flagged(self):
        matrix = [cell(-0.4, 10, "p1", "c1"), cell(-0.1, 10, "p2", "c2")]
        selection = select_opportunity(matrix)
        assert selection.cell.persona_id == "p2"
        assert selection.not_underexploited

    def test_final_tie_by_ids(self):
        matrix = [cell(0.3, 100, "p2", "c2"), cell(0.3, 100, "p1", "c9"), cell(0.3, 100, "p1", "c1")]
        assert select_opportunity(matrix).cell.challenge_id == "c1"

    def test_volume_weighted_policy(self):
        matrix = [cell(0.5, 10, "p1", "c1"), cell(0.4, 2000, "p2", "c2")]
        plain = select_opportunity(matrix, SelectionPolicy.MAX_GAP)
        weighted = select_opportunity(matrix, SelectionPolicy.MAX_GAP_VOLUME_WEIGHTED)
        assert plain.cell.persona_id == "p1"
        assert weighted.cell.persona_id == "p2"

    def test_empty_matrix(self):
        with pytest.raises(EmptyMatrix):
            select_opportunity([])

    def test_deterministic(self):
        matrix = [cell(0.3, 100, "p1", "c1"), cell(0.3, 100, "p2", "c2")]
        assert select_opportunity(matrix) == select_opportunity(matrix)


SAMUEL = (
    "Name: Samuel Tan\n"
    "Role: a business owner in Singapore\n"
    "Background: Samuel runs a growing logistics firm and prioritizes efficiency.\n"
    "Traits: driven, efficiency-minded, loyal"
)

SAMUEL_STORY = (
    "Story: Samuel prioritized business efficiency but neglected employee satisfaction, "
    "and turnover crept up.\n\n"
    "Recognizing the issue, Samuel adopted Gojek not merely as an efficiency solution but "
    "as a way to reengage with employees.\n"
    "Insight: Engaging with Gojek helped Samuel enhance their efficiency and improve overall job satisfaction."
)


class TestGenerateCharacter:
    def _gateway(self, gateway, response):
        gateway.register_completion("scripted", ScriptedCompletionBackend(fallback=lambda _r: response))
        return gateway

    def test_samuel_tan_fixture(self, gateway):
        self._gateway(gateway, SAMUEL)
        persona = card("audience-0", 0.3, 0.7, name="Efficiency Enthusiasts")
        character = generate_character(persona, gateway, "scripted")
        assert character.name == "Samuel Tan"
        assert character.role == "a business owner in Singapore"
        assert character.persona_id == "audience-0"
        assert character.traits == ("driven", "efficiency-minded", "loyal")

    def test_missing_background(self, gateway):
        self._gateway(gateway, SAMUEL.replace("Background: Samuel runs a growing logistics firm and prioritizes efficiency.\n", ""))
        with pytest.raises(AnnotationParseError):
            generate_character(card("p", 0.5, 0.5), gateway, "scripted")

    def test_deterministic(self, gateway):
        self._gateway(gateway, SAMUEL)
        persona = card("p", 0.5, 0.5)
        assert generate_character(persona, gateway, "scripted") == generate_character(
            persona, gateway, "scripted"
        )


class TestGenerateStory:
    def _character(self):
        return Character(
            name="Samuel Tan",
            role="a business owner in Singapore",
            background="Runs a logistics firm.",
            traits=("driven",),
            persona_id="audience-0",
        )

    def _gateway(self, gateway, response):
        gateway.register_completion("scripted", ScriptedCompletionBackend(fallback=lambda _r: response))
        return gateway

    def test_fixture_story(self, gateway):
        self._gateway(gateway, SAMUEL_STORY)
        challenge = card("insight-2", 0.2, 0.8, name="Streamlining Work Transport Processes")
        story = generate_story(self._character(), challenge, "Gojek", gateway, "scripted")
        assert "efficiency" in story.concluding_insight
        assert "job satisfaction" in story.concluding_insight
        assert story.challenge_id == "insight-2"
        assert "Gojek" in story.narrative

    def test_multi_paragraph_narrative_preserved(self, gateway):
        self._gateway(gateway, SAMUEL_STORY)
        story = generate_story(self._character(), card("c", 0.5, 0.5), "Gojek", gateway, "scripted")
        assert "\n\n" in story.narrative

    def test_brand_missing(self, gateway):
        self._gateway(gateway, SAMUEL_STORY.replace("Gojek", "SomeApp"))
        with pytest.raises(BrandMissingFromNarrative):
            generate_story(self._character(), card("c", 0.5, 0.5), "Gojek", gateway, "scripted")

    def test_empty_insight(self, gateway):
        self._gateway(gateway, "Story: Something with Gojek happened.\nInsight:")
        with pytest.raises(AnnotationParseError):
            generate_story(self._character(), card("c", 0.5, 0.5), "Gojek", gateway, "scripted")

    def test_missing_story_section(self, gateway):
        self._gateway(gateway, "Insight: no story came before this line")
        with pytest.raises(AnnotationParseError):
            generate_story(self._character(), card("c", 0.5, 0.5), "Gojek", gateway, "scripted")


class TestExportBrief:
    def _story(self):
        return Story(
            character=Character(
                name="Samuel Tan",
                role="a business owner in Singapore",
                background="Runs a logistics firm.",
                traits=("driven", "loyal"),
                persona_id="audience-0",
            ),
            challenge_id="insight-2",
            brand="Gojek",
            narrative="First paragraph with Gojek.\n\nSecond paragraph.",
            concluding_insight="Efficiency and satisfaction can rise together.",
            run_id="feedc0de00000000",
        )

    def test_sections_in_order(self):
        brief = export_brief(self._story(), "Efficiency Enthusiasts", "Streamlining", "ds1", ["r1"])
        positions = [
            brief.index("# Content brief: Gojek"),
            brief.index("## Character"),
            brief.index("## Story"),
            brief.index("## Concluding insight"),
            brief.index("dataset: ds1"),
        ]
        assert positions == sorted(positions)

    def test_byte_identical_exports(self):
        story = self._story()
        assert export_brief(story, "p", "c", "ds", ["r"]) == export_brief(story, "p", "c", "ds", ["r"])

    def test_narrative_verbatim(self):
        brief = export_brief(self._story())
        assert "First paragraph with Gojek.\n\nSecond paragraph." in brief

    def test_insight_emphasized(self):
        brief = export_brief(self._story())
        assert "> **Efficiency and satisfaction can rise together.**" in brief

    def test_provenance_footer(self):
        brief = export_brief(self._story(), dataset_id="ds9", run_ids=["runA", "runB"])
        assert "dataset: ds9" in brief
        assert "feedc0de00000000, runA, runB" in brief
