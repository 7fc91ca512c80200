import json

import pytest

from somonitor.domain import ContentKind, Objective
from somonitor.store import (
    ArtifactKey,
    DuplicateId,
    NotFound,
    ParseError,
    Store,
    SubsetFilter,
    UnknownDataset,
    ValidationError,
)
from somonitor.util import canonical_json

from conftest import make_ad


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


def records(n, **overrides):
    return [make_ad(ad_id=f"ad-{i:03d}", **overrides).to_record() for i in range(n)]


class TestLoadDataset:
    def test_load_and_reload(self, store, tmp_path):
        path = tmp_path / "ads.jsonl"
        write_jsonl(path, records(12))
        handle = store.load_dataset(path)
        assert handle.item_count == 12
        assert [a.id for a in store.get_ads(handle.dataset_id)] == [f"ad-{i:03d}" for i in range(12)]

    def test_empty_file(self, store, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert store.load_dataset(path).item_count == 0

    def test_idempotent_by_content(self, store, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        recs = records(5)
        write_jsonl(a, recs)
        write_jsonl(b, list(reversed(recs)))
        first = store.load_dataset(a)
        second = store.load_dataset(b)
        assert first.dataset_id == second.dataset_id
        assert first.checksum == second.checksum

    def test_parse_error_carries_line(self, store, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "x"}\nnot json\n', encoding="utf-8")
        with pytest.raises(ParseError) as err:
            store.load_dataset(path)
        assert err.value.line == 2

    def test_validation_error_lists_line(self, store, tmp_path):
        recs = records(10)
        recs[6]["clicks"] = recs[6]["impressions"] + 1
        path = tmp_path / "invalid.jsonl"
        write_jsonl(path, recs)
        with pytest.raises(ValidationError) as err:
            store.load_dataset(path)
        assert err.value.lines == [7]

    def test_duplicate_id(self, store, tmp_path):
        recs = records(3)
        recs[2]["id"] = recs[0]["id"]
        path = tmp_path / "dupes.jsonl"
        write_jsonl(path, recs)
        with pytest.raises(DuplicateId):
            store.load_dataset(path)

    def test_csv_matches_jsonl(self, store, tmp_path):
        import csv

        recs = records(4)
        jsonl = tmp_path / "ads.jsonl"
        write_jsonl(jsonl, recs)
        header = ["id", "brand", "objective", "kind", "text", "impressions", "clicks", "published_at", "image_ref"]
        csv_path = tmp_path / "ads.csv"
        with csv_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=header)
            writer.writeheader()
            for r in recs:
                writer.writerow({c: r.get(c, "") for c in header})
        assert store.load_dataset(csv_path, format="csv").dataset_id == store.load_dataset(jsonl).dataset_id


class TestStatsAndFilters:
    def test_stats_counts_and_shares(self, store):
        ads = [make_ad(ad_id=f"a{i}", brand="alpha") for i in range(3)]
        ads += [make_ad(ad_id=f"b{i}", brand="beta", kind=ContentKind.ORGANIC) for i in range(1)]
        handle = store.save_ads(ads)
        stats = store.dataset_stats(handle.dataset_id)
        assert stats.total == 4 and stats.ads == 3 and stats.organic == 1
        assert stats.per_brand["alpha"] == (3, 0.75)
        assert stats.per_brand["beta"] == (1, 0.25)
        assert abs(sum(s for _, s in stats.per_brand.values()) - 1.0) < 1e-9

    def test_singleton_share(self, store):
        handle = store.save_ads([make_ad()])
        assert store.dataset_stats(handle.dataset_id).per_brand["acme"] == (1, 1.0)

    def test_unknown_dataset(self, store):
        with pytest.raises(UnknownDataset):
            store.dataset_stats("missing")

    def test_kind_filter(self, store):
        ads = [make_ad(ad_id=f"a{i}") for i in range(5)]
        ads += [make_ad(ad_id=f"o{i}", kind=ContentKind.ORGANIC) for i in range(2)]
        handle = store.save_ads(ads)
        filtered = store.filter_subset(handle.dataset_id, SubsetFilter(kind=ContentKind.AD))
        assert filtered.item_count == 5

    def test_empty_filter_is_identity(self, store):
        handle = store.save_ads([make_ad(ad_id=f"a{i}") for i in range(4)])
        same = store.filter_subset(handle.dataset_id, SubsetFilter())
        assert same.dataset_id == handle.dataset_id
        assert same.item_count == 4

    def test_nonexistent_brand_empty(self, store):
        handle = store.save_ads([make_ad()])
        empty = store.filter_subset(handle.dataset_id, SubsetFilter(brands=frozenset({"ghost"})))
        assert empty.item_count == 0

    def test_filter_composition(self, store):
        ads = [
            make_ad(ad_id=f"x{i}", brand="alpha" if i % 2 else "beta",
                    objective=Objective.SALES if i % 3 else Objective.TRAFFIC)
            for i in range(12)
        ]
        handle = store.save_ads(ads)
        f1 = SubsetFilter(brands=frozenset({"alpha"}))
        f2 = SubsetFilter(objective=Objective.SALES)
        combined = SubsetFilter(brands=frozenset({"alpha"}), objective=Objective.SALES)
        chained = store.filter_subset(store.filter_subset(handle.dataset_id, f1).dataset_id, f2)
        direct = store.filter_subset(handle.dataset_id, combined)
        assert chained.dataset_id == direct.dataset_id


class TestArtifacts:
    def test_round_trip(self, store):
        key = ArtifactKey("pillars", "ds1", "run1")
        payload = {"rows": {"a": 1}, "nested": [1, 2, 3]}
        store.put_artifact(key, payload)
        assert store.get_artifact(key) == payload

    def test_not_found(self, store):
        with pytest.raises(NotFound):
            store.get_artifact(ArtifactKey("pillars", "ds1", "nope"))

    def test_last_writer_wins(self, store):
        key = ArtifactKey("ranking", "ds1", "run1")
        store.put_artifact(key, {"v": 1})
        store.put_artifact(key, {"v": 2})
        assert store.get_artifact(key) == {"v": 2}

    def test_latest_pointer(self, store):
        store.put_artifact(ArtifactKey("ranking", "ds1", "run1"), {"v": 1})
        store.put_artifact(ArtifactKey("ranking", "ds1", "run2"), {"v": 2})
        assert store.latest_run_id("ranking", "ds1") == "run2"
        assert store.get_latest_artifact("ranking", "ds1") == {"v": 2}

    def test_malformed_key_rejected(self, store):
        with pytest.raises(ValueError):
            ArtifactKey("bad/kind", "ds", "run")

    def test_survives_restart(self, store, tmp_path):
        handle = store.save_ads([make_ad(ad_id=f"a{i}") for i in range(6)])
        key = ArtifactKey("evaluation", handle.dataset_id, "run9")
        store.put_artifact(key, {"report": "table"})
        reopened = Store(store.root)
        assert reopened.get_handle(handle.dataset_id).checksum == handle.checksum
        assert reopened.get_artifact(key) == {"report": "table"}
        assert reopened.artifact_bytes(key) == store.artifact_bytes(key)

    def test_schema_version_stamped(self, store):
        key = ArtifactKey("story", "ds1", "run1")
        store.put_artifact(key, {"x": 1})
        raw = json.loads(store.artifact_bytes(key))
        assert raw["schema_version"] == 1
        assert raw["kind"] == "story"

    def test_canonical_json_is_stable(self):
        assert canonical_json({"b": 1, "a": [1.5, 2]}) == '{"a":[1.5,2],"b":1}'
