import pytest
from hypothesis import given, strategies as st

from somonitor.backends import RuleCompletionBackend, ScriptedCompletionBackend
from somonitor.domain import ContentPillars, PILLAR_FIELDS
from somonitor.gateway import load_template
from somonitor.pillars import (
    BatchFailureRateExceeded,
    ExtractionIncomplete,
    PillarTable,
    batch_extract,
    extract_pillars,
    format_pillar_response,
    parse_pillar_response,
)
from somonitor.store import ArtifactKey

from conftest import make_ad

WELL_FORMED = (
    "Audience: SMEs\nNeed: savings\nInsight: time is money\n"
    "Product: rides\nArchetype: Ruler\nTone: confident"
)


class TestParsePillarResponse:
    def test_well_formed(self):
        pillars = parse_pillar_response(WELL_FORMED)
        assert pillars.audience == "SMEs"
        assert pillars.need == "savings"
        assert pillars.insight == "time is money"
        assert pillars.product == "rides"
        assert pillars.archetype == "Ruler"
        assert pillars.tone == "confident"
        assert pillars.raw_response == WELL_FORMED

    def test_reordered_and_lowercased(self):
        shuffled = "\n".join(reversed(WELL_FORMED.lower().splitlines()))
        reparsed = parse_pillar_response(shuffled)
        baseline = parse_pillar_response(WELL_FORMED.lower())
        assert reparsed.to_record() | {"raw_response": ""} == baseline.to_record() | {"raw_response": ""}

    def test_single_field_reports_all_missing(self):
        with pytest.raises(ExtractionIncomplete) as err:
            parse_pillar_response("Audience: SMEs")
        assert err.value.missing == ["need", "insight", "product", "archetype", "tone"]

    def test_surrounding_prose_tolerated(self):
        noisy = "Sure! Here is the analysis:\n\n" + WELL_FORMED + "\n\nHope that helps."
        assert parse_pillar_response(noisy).audience == "SMEs"

    def test_markdown_decorations_tolerated(self):
        decorated = "\n".join(f"- **{line}**".replace(":", ":**", 1) for line in WELL_FORMED.splitlines())
        # e.g. "- **Audience:** SMEs**" still yields the value
        parsed = parse_pillar_response(decorated)
        assert parsed.audience.startswith("SMEs")

    def test_first_occurrence_wins(self):
        doubled = WELL_FORMED + "\nAudience: somebody else"
        assert parse_pillar_response(doubled).audience == "SMEs"

    def test_extra_fields_ignored(self):
        extra = WELL_FORMED + "\nMood: upbeat"
        parse_pillar_response(extra)


clean_values = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz ABC'?!.,0123456789", min_size=1, max_size=40
).map(lambda s: s.strip()).filter(bool)


class TestFormatParseRoundTrip:
    @given(values=st.lists(clean_values, min_size=6, max_size=6))
    def test_round_trip_identity(self, values):
        pillars = ContentPillars(*values)
        reparsed = parse_pillar_response(format_pillar_response(pillars))
        for field in PILLAR_FIELDS:
            assert getattr(reparsed, field) == getattr(pillars, field)


class TestExtractPillars:
    def test_scripted_extraction(self, gateway):
        gateway.register_completion("scripted", ScriptedCompletionBackend({"AD-1": WELL_FORMED}))
        ad = make_ad(ad_id="ad-1", text="AD-1 telecom plan for families")
        pillars = extract_pillars(ad, load_template("pillars.v1"), gateway, "scripted")
        assert pillars.need and pillars.archetype

    def test_missing_insight_line(self, gateway):
        partial = WELL_FORMED.replace("Insight: time is money\n", "")
        gateway.register_completion("scripted", ScriptedCompletionBackend({"AD-1": partial}))
        ad = make_ad(text="AD-1 something")
        with pytest.raises(ExtractionIncomplete) as err:
            extract_pillars(ad, load_template("pillars.v1"), gateway, "scripted")
        assert err.value.missing == ["insight"]

    def test_image_ref_mentioned_as_context(self, gateway):
        captured = {}

        class Capture:
            def complete(self, req):
                captured["prompt"] = req.user_prompt
                return WELL_FORMED

        gateway.register_completion("cap", Capture())
        ad = make_ad(text="", image_ref="img-9")
        extract_pillars(ad, load_template("pillars.v1"), gateway, "cap")
        assert "[image: img-9]" in captured["prompt"]


def seeded_dataset(store, n=10):
    ads = [make_ad(ad_id=f"ad-{i:02d}", text=f"KEY-{i:02d} ride offer") for i in range(n)]
    return store.save_ads(ads), ads


class TestBatchExtract:
    def test_all_success(self, store, gateway):
        handle, ads = seeded_dataset(store)
        gateway.register_completion(
            "scripted",
            ScriptedCompletionBackend({f"KEY-{i:02d}": WELL_FORMED for i in range(10)}),
        )
        table = batch_extract(store, handle.dataset_id, gateway, "scripted")
        assert len(table.rows) == 10 and not table.failures
        assert set(table.rows) == {a.id for a in ads}

    def test_one_failure_tolerated(self, store, gateway):
        handle, _ = seeded_dataset(store)
        responses = {f"KEY-{i:02d}": WELL_FORMED for i in range(10)}
        responses["KEY-03"] = "Audience: only"
        gateway.register_completion("scripted", ScriptedCompletionBackend(responses))
        table = batch_extract(store, handle.dataset_id, gateway, "scripted")
        assert len(table.rows) == 9
        assert list(table.failures) == ["ad-03"]

    def test_failure_ceiling(self, store, gateway):
        handle, _ = seeded_dataset(store)
        responses = {f"KEY-{i:02d}": (WELL_FORMED if i >= 5 else "junk") for i in range(10)}
        gateway.register_completion("scripted", ScriptedCompletionBackend(responses))
        with pytest.raises(BatchFailureRateExceeded):
            batch_extract(store, handle.dataset_id, gateway, "scripted")

    def test_rows_and_failures_partition_input(self, store, gateway):
        handle, ads = seeded_dataset(store, n=6)
        responses = {f"KEY-{i:02d}": WELL_FORMED for i in range(6)}
        responses["KEY-01"] = "nope"
        gateway.register_completion("scripted", ScriptedCompletionBackend(responses))
        table = batch_extract(store, handle.dataset_id, gateway, "scripted")
        assert set(table.rows) | set(table.failures) == {a.id for a in ads}
        assert not set(table.rows) & set(table.failures)

    def test_persisted_and_reproducible(self, store, gateway):
        handle, _ = seeded_dataset(store)
        gateway.register_completion("offline", RuleCompletionBackend())
        first = batch_extract(store, handle.dataset_id, gateway, "offline")
        key = ArtifactKey("pillars", handle.dataset_id, first.run_id)
        blob_one = store.artifact_bytes(key)
        second = batch_extract(store, handle.dataset_id, gateway, "offline")
        assert second.run_id == first.run_id
        assert store.artifact_bytes(key) == blob_one
        assert PillarTable.from_payload(store.get_artifact(key)).rows == first.rows

    def test_table_independent_of_source_order(self, store, gateway, tmp_path):
        import json

        ads = [make_ad(ad_id=f"ad-{i:02d}", text=f"KEY-{i:02d} ride offer") for i in range(8)]
        fwd, rev = tmp_path / "f.jsonl", tmp_path / "r.jsonl"
        fwd.write_text("".join(json.dumps(a.to_record()) + "\n" for a in ads))
        rev.write_text("".join(json.dumps(a.to_record()) + "\n" for a in reversed(ads)))
        gateway.register_completion("offline", RuleCompletionBackend())
        t1 = batch_extract(store, store.load_dataset(fwd).dataset_id, gateway, "offline")
        t2 = batch_extract(store, store.load_dataset(rev).dataset_id, gateway, "offline")
        assert t1.to_payload() == t2.to_payload()
