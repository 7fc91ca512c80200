"""Canonical serialization and digest helpers used across the pipeline.

Artifacts must be byte-stable across runs and platforms, so every JSON
document is emitted with sorted keys and compact separators, and every
identifier derived from content goes through sha256 of that canonical form.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Any


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def digest_hex(value: Any) -> str:
    """sha256 of the canonical JSON rendering of `value`."""
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


def short_digest(value: Any, length: int = 16) -> str:
    return digest_hex(value)[:length]


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


_LABELED_LINE = re.compile(
    r"^[\s\-\*\#>]*([A-Za-z][A-Za-z _]*?)\s*\*{0,2}\s*[:：]\s*\*{0,2}\s*(.+?)\s*$"
)


def parse_labeled_lines(text: str, fields: tuple[str, ...]) -> dict[str, str]:
    """Collect "Field: value" lines for the requested fields.

    Field names match case-insensitively, lines may appear in any order and
    amid surrounding prose, list markers and markdown bold are tolerated,
    and the first occurrence of a field wins.
    """
    wanted = {f.lower(): f for f in fields}
    found: dict[str, str] = {}
    for raw in text.splitlines():
        m = _LABELED_LINE.match(raw)
        if not m:
            continue
        canonical = wanted.get(m.group(1).strip().lower())
        if canonical is not None and canonical not in found:
            value = m.group(2).rstrip("*").strip()
            if value:
                found[canonical] = value
    return found
