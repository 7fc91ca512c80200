"""Disk-backed store for ad datasets and every downstream pipeline artifact.

Layout is content-addressed and database-free:

    <root>/datasets/<dataset_id>/records.jsonl   one canonical record per line
    <root>/datasets/<dataset_id>/meta.json       handle metadata
    <root>/artifacts/<kind>/<dataset_id>/<run_id>.json
    <root>/artifacts/<kind>/<dataset_id>/LATEST  pointer to the newest run

A dataset's id is derived from a checksum of its canonicalized content, so
re-ingesting identical content is a no-op and reloads are verifiable. Writes
go through an atomic rename, which gives concurrent readers either a fully
written document or NotFound, never a partial file.
"""

from __future__ import annotations

import csv
import json
import os
import re
import tempfile
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional

from .domain import AdCreative, ContentKind, InvalidCreative, Objective
from .errors import SomonitorError
from .util import canonical_json, sha256_text

SCHEMA_VERSION = 1

_KEY_PART = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class ParseError(SomonitorError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(SomonitorError):
    """One or more records violated AdCreative invariants."""

    def __init__(self, offenders: list[tuple[int, str]]):
        self.offenders = offenders
        lines = ", ".join(f"line {ln}: {msg}" for ln, msg in offenders[:5])
        more = "" if len(offenders) <= 5 else f" (+{len(offenders) - 5} more)"
        super().__init__(f"{len(offenders)} invalid record(s): {lines}{more}")

    @property
    def lines(self) -> list[int]:
        return [ln for ln, _ in self.offenders]


class DuplicateId(SomonitorError):
    pass


class UnknownDataset(SomonitorError):
    pass


class NotFound(SomonitorError):
    pass


@dataclass(frozen=True)
class DatasetHandle:
    dataset_id: str
    item_count: int
    source_path: str
    checksum: str


@dataclass(frozen=True)
class DatasetStats:
    total: int
    ads: int
    organic: int
    per_brand: dict[str, tuple[int, float]]

    def to_payload(self) -> dict:
        return {
            "total": self.total,
            "ads": self.ads,
            "organic": self.organic,
            "per_brand": {
                b: {"count": c, "share": s} for b, (c, s) in sorted(self.per_brand.items())
            },
        }


@dataclass(frozen=True)
class SubsetFilter:
    """Conjunction of optional constraints; the empty filter matches everything."""

    brands: Optional[frozenset[str]] = None
    kind: Optional[ContentKind] = None
    objective: Optional[Objective] = None
    date_range: Optional[tuple[Optional[datetime], Optional[datetime]]] = None

    def matches(self, ad: AdCreative) -> bool:
        if self.brands is not None and ad.brand not in self.brands:
            return False
        if self.kind is not None and ad.kind != self.kind:
            return False
        if self.objective is not None and ad.objective != self.objective:
            return False
        if self.date_range is not None:
            lo, hi = self.date_range
            if lo is not None and ad.published_at < lo:
                return False
            if hi is not None and ad.published_at > hi:
                return False
        return True

    def describe(self) -> str:
        parts = []
        if self.brands is not None:
            parts.append(f"brand in {sorted(self.brands)}")
        if self.kind is not None:
            parts.append(f"kind = {self.kind.value}")
        if self.objective is not None:
            parts.append(f"objective = {self.objective.value}")
        if self.date_range is not None:
            parts.append(f"published in {self.date_range}")
        return " and ".join(parts) if parts else "all records"


@dataclass(frozen=True)
class ArtifactKey:
    kind: str
    dataset_id: str
    run_id: str

    def __post_init__(self):
        for part in (self.kind, self.dataset_id, self.run_id):
            if not _KEY_PART.match(part):
                raise ValueError(f"malformed artifact key part: {part!r}")


@dataclass(frozen=True)
class PutReceipt:
    key: ArtifactKey
    path: str
    digest: str


def _checksum_ads(ads: Iterable[AdCreative]) -> tuple[str, list[AdCreative]]:
    """Checksum over the id-sorted canonical records; order on disk is canonical."""
    ordered = sorted(ads, key=lambda a: a.id)
    body = "\n".join(canonical_json(a.to_record()) for a in ordered)
    return sha256_text(body), ordered


def _atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Store:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # -- datasets ---------------------------------------------------------

    def load_dataset(self, path: str | Path, format: str = "jsonl") -> DatasetHandle:
        """Parse, validate, and persist a dataset file; idempotent by content."""
        path = Path(path)
        if format == "jsonl":
            rows = list(_read_jsonl(path))
        elif format == "csv":
            rows = list(_read_csv(path))
        else:
            raise ValueError(f"unsupported format: {format}")
        ads: list[AdCreative] = []
        offenders: list[tuple[int, str]] = []
        for line_no, record in rows:
            try:
                ads.append(AdCreative.from_record(record))
            except InvalidCreative as exc:
                offenders.append((line_no, str(exc)))
        if offenders:
            raise ValidationError(offenders)
        seen: dict[str, int] = {}
        for line_no, record in rows:
            rid = str(record.get("id"))
            if rid in seen:
                raise DuplicateId(f"id {rid!r} on line {line_no} already seen on line {seen[rid]}")
            seen[rid] = line_no
        return self.save_ads(ads, source_path=str(path))

    def save_ads(self, ads: list[AdCreative], source_path: str = "<memory>") -> DatasetHandle:
        checksum, ordered = _checksum_ads(ads)
        dataset_id = checksum[:16]
        handle = DatasetHandle(
            dataset_id=dataset_id,
            item_count=len(ordered),
            source_path=source_path,
            checksum=checksum,
        )
        ds_dir = self.root / "datasets" / dataset_id
        if not (ds_dir / "meta.json").exists():
            body = "\n".join(canonical_json(a.to_record()) for a in ordered)
            _atomic_write(ds_dir / "records.jsonl", body + ("\n" if body else ""))
            meta = {
                "schema_version": SCHEMA_VERSION,
                "dataset_id": dataset_id,
                "item_count": len(ordered),
                "source_path": source_path,
                "checksum": checksum,
            }
            _atomic_write(ds_dir / "meta.json", canonical_json(meta))
        return handle

    def get_handle(self, dataset_id: str) -> DatasetHandle:
        meta_path = self.root / "datasets" / dataset_id / "meta.json"
        if not meta_path.exists():
            raise UnknownDataset(dataset_id)
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        return DatasetHandle(
            dataset_id=meta["dataset_id"],
            item_count=meta["item_count"],
            source_path=meta["source_path"],
            checksum=meta["checksum"],
        )

    def get_ads(self, dataset_id: str) -> list[AdCreative]:
        records_path = self.root / "datasets" / dataset_id / "records.jsonl"
        if not records_path.exists():
            raise UnknownDataset(dataset_id)
        ads = []
        for line in records_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                ads.append(AdCreative.from_record(json.loads(line)))
        return ads

    def dataset_stats(self, dataset_id: str) -> DatasetStats:
        ads = self.get_ads(dataset_id)
        total = len(ads)
        n_ads = sum(1 for a in ads if a.kind == ContentKind.AD)
        per_brand: dict[str, int] = {}
        for a in ads:
            per_brand[a.brand] = per_brand.get(a.brand, 0) + 1
        shares = {b: (c, c / total if total else 0.0) for b, c in per_brand.items()}
        return DatasetStats(total=total, ads=n_ads, organic=total - n_ads, per_brand=shares)

    def filter_subset(self, dataset_id: str, subset: SubsetFilter) -> DatasetHandle:
        ads = self.get_ads(dataset_id)
        kept = [a for a in ads if subset.matches(a)]
        return self.save_ads(kept, source_path=f"filter({subset.describe()}) of {dataset_id}")

    # -- artifacts --------------------------------------------------------

    def _artifact_path(self, key: ArtifactKey) -> Path:
        return self.root / "artifacts" / key.kind / key.dataset_id / f"{key.run_id}.json"

    def put_artifact(self, key: ArtifactKey, payload: dict) -> PutReceipt:
        document = {
            "schema_version": SCHEMA_VERSION,
            "kind": key.kind,
            "dataset_id": key.dataset_id,
            "run_id": key.run_id,
            "payload": payload,
        }
        body = canonical_json(document)
        path = self._artifact_path(key)
        _atomic_write(path, body)
        _atomic_write(path.parent / "LATEST", key.run_id)
        return PutReceipt(key=key, path=str(path), digest=sha256_text(body))

    def get_artifact(self, key: ArtifactKey) -> dict:
        path = self._artifact_path(key)
        if not path.exists():
            raise NotFound(f"{key.kind}/{key.dataset_id}/{key.run_id}")
        return json.loads(path.read_text(encoding="utf-8"))["payload"]

    def has_artifact(self, key: ArtifactKey) -> bool:
        return self._artifact_path(key).exists()

    def latest_run_id(self, kind: str, dataset_id: str) -> str:
        pointer = self.root / "artifacts" / kind / dataset_id / "LATEST"
        if not pointer.exists():
            raise NotFound(f"{kind}/{dataset_id}")
        return pointer.read_text(encoding="utf-8").strip()

    def get_latest_artifact(self, kind: str, dataset_id: str) -> dict:
        run_id = self.latest_run_id(kind, dataset_id)
        return self.get_artifact(ArtifactKey(kind, dataset_id, run_id))

    def artifact_bytes(self, key: ArtifactKey) -> bytes:
        path = self._artifact_path(key)
        if not path.exists():
            raise NotFound(f"{key.kind}/{key.dataset_id}/{key.run_id}")
        return path.read_bytes()

    def list_runs(self, kind: str, dataset_id: str) -> list[str]:
        directory = self.root / "artifacts" / kind / dataset_id
        if not directory.exists():
            return []
        return sorted(p.stem for p in directory.glob("*.json"))


def _read_jsonl(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(0, f"cannot read {path}: {exc}") from None
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc.msg}") from None
        if not isinstance(record, dict):
            raise ParseError(line_no, "record must be a JSON object")
        yield line_no, record


# CSV header mapping: columns named exactly as the JSON-lines fields
# (id, brand, objective, kind, text, image_ref, impressions, clicks,
# published_at); an empty image_ref cell means "absent".
def _read_csv(path: Path):
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(0, f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        for record in reader:
            line_no = reader.line_num
            if None in record:
                raise ParseError(line_no, "row has more cells than the header")
            cleaned = {k: v for k, v in record.items() if v is not None}
            if not cleaned.get("image_ref"):
                cleaned.pop("image_ref", None)
            yield line_no, cleaned
