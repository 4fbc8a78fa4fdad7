"""Canonical domain types shared by every huntdeck module.

Pure value types with validation helpers and the canonical v=1 text
serialization (see docs/canonical-format.md). No I/O lives here.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Optional

SOURCE_KINDS = frozenset({"log", "siem", "cti", "edr", "ndr", "deception"})
CATEGORIES = frozenset(
    {"alert", "session", "process", "metric", "observable", "indicator", "relationship", "raw"}
)
ASSET_KINDS = frozenset({"host", "network_device", "switch", "honeypot", "platform"})
STIX_GROUPS = frozenset({"cyber_observable", "domain_object", "relationship"})

SESSION_ACTIONS = frozenset({"login", "logout"})

MAX_TITLE_LEN = 512

AttrValue = "str | int | float | bool"

_HEX64_RE = re.compile(r"^[0-9a-f]{64}$")
_STIX_ID_RE = re.compile(
    r"^[a-z0-9][a-z0-9-]*--[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}"
    r"-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$"
)


def _dumps(obj: Any) -> str:
    # Canonical JSON rendering: UTF-8, no insignificant whitespace, no NaN/Inf.
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _sorted_attributes(attributes: dict[str, Any]) -> dict[str, Any]:
    return {k: attributes[k] for k in sorted(attributes)}


# ---------------------------------------------------------------------------
# SecurityEvent
# ---------------------------------------------------------------------------


@dataclass
class SecurityEvent:
    """The normalized record every converter emits and every query returns."""

    event_id: str
    ts: int
    ingested_at: int
    source_kind: str
    source_id: str
    asset_id: str
    category: str
    severity: int
    title: str
    attributes: dict[str, Any] = field(default_factory=dict)
    raw_ref: Optional[str] = None

    def with_id(self) -> "SecurityEvent":
        """Return a copy whose event_id is the content-derived digest."""
        return replace(self, event_id=compute_event_id(self))


def compute_event_id(ev: SecurityEvent) -> str:
    """SHA-256 hex of the id payload: (v, ts, source_id, category, title, attributes).

    Attributes are key-sorted; ingestion metadata (ingested_at, raw_ref) and
    display fields outside the payload never influence the id.
    """
    payload = {
        "v": 1,
        "ts": ev.ts,
        "source_id": ev.source_id,
        "category": ev.category,
        "title": ev.title,
        "attributes": _sorted_attributes(ev.attributes),
    }
    return hashlib.sha256(_dumps(payload).encode("utf-8")).hexdigest()


def _check_attr_value(value: Any) -> bool:
    if isinstance(value, bool):
        return True
    if isinstance(value, (int, str)):
        return True
    if isinstance(value, float):
        return value == value and value not in (float("inf"), float("-inf"))
    return False


def validate_event(ev: SecurityEvent) -> list[str]:
    """Return every violated invariant; an empty list means valid."""
    v: list[str] = []
    if not isinstance(ev.event_id, str) or not _HEX64_RE.match(ev.event_id):
        v.append("event_id is not 64 lowercase hex chars")
    elif ev.event_id != compute_event_id(ev):
        v.append("event_id does not match content digest")
    if not isinstance(ev.ts, int) or isinstance(ev.ts, bool) or ev.ts <= 0:
        v.append("ts must be a positive integer")
    if not isinstance(ev.ingested_at, int) or isinstance(ev.ingested_at, bool) or ev.ingested_at < 0:
        v.append("ingested_at must be a non-negative integer")
    if ev.source_kind not in SOURCE_KINDS:
        v.append(f"unknown source_kind {ev.source_kind!r}")
    if not isinstance(ev.source_id, str) or not ev.source_id:
        v.append("source_id must be non-empty text")
    if not isinstance(ev.asset_id, str):
        v.append("asset_id must be text")
    if ev.category not in CATEGORIES:
        v.append(f"unknown category {ev.category!r}")
    if not isinstance(ev.severity, int) or isinstance(ev.severity, bool) or not 0 <= ev.severity <= 10:
        v.append("severity out of range")
    if not isinstance(ev.title, str) or not ev.title:
        v.append("title must be non-empty")
    elif len(ev.title) > MAX_TITLE_LEN:
        v.append(f"title longer than {MAX_TITLE_LEN} chars")
    if not isinstance(ev.attributes, dict):
        v.append("attributes must be a key-value collection")
    else:
        for key, value in ev.attributes.items():
            if not isinstance(key, str):
                v.append(f"attribute key {key!r} is not text")
            elif not _check_attr_value(value):
                v.append(f'attribute "{key}" has non-scalar or non-finite value')
        v.extend(_category_violations(ev))
    if ev.raw_ref is not None and not isinstance(ev.raw_ref, str):
        v.append("raw_ref must be text or absent")
    return v


def _category_violations(ev: SecurityEvent) -> list[str]:
    v: list[str] = []
    attrs = ev.attributes
    if ev.category == "session":
        if "user" not in attrs:
            v.append('session event missing attribute "user"')
        if attrs.get("session_action") not in SESSION_ACTIONS:
            v.append('session event missing attribute "session_action" (login|logout)')
    elif ev.category == "process":
        for key in ("pid", "process_name"):
            if key not in attrs:
                v.append(f'process event missing attribute "{key}"')
    elif ev.category == "metric":
        if "metric_name" not in attrs:
            v.append('metric event missing attribute "metric_name"')
        value = attrs.get("value")
        if value is None or isinstance(value, (bool, str)):
            v.append('metric event missing numeric attribute "value"')
    return v


def encode_event(ev: SecurityEvent) -> str:
    """Canonical v=1 line for NDJSON interchange and segment storage."""
    doc = {
        "v": 1,
        "event_id": ev.event_id,
        "ts": ev.ts,
        "ingested_at": ev.ingested_at,
        "source_kind": ev.source_kind,
        "source_id": ev.source_id,
        "asset_id": ev.asset_id,
        "category": ev.category,
        "severity": ev.severity,
        "title": ev.title,
        "attributes": _sorted_attributes(ev.attributes),
        "raw_ref": ev.raw_ref,
    }
    return _dumps(doc)


def decode_event(line: str) -> SecurityEvent:
    doc = json.loads(line)
    if doc.get("v") != 1:
        raise ValueError(f"unsupported serialization version {doc.get('v')!r}")
    return SecurityEvent(
        event_id=doc["event_id"],
        ts=doc["ts"],
        ingested_at=doc["ingested_at"],
        source_kind=doc["source_kind"],
        source_id=doc["source_id"],
        asset_id=doc["asset_id"],
        category=doc["category"],
        severity=doc["severity"],
        title=doc["title"],
        attributes=dict(doc["attributes"]),
        raw_ref=doc.get("raw_ref"),
    )


# ---------------------------------------------------------------------------
# AlertRecord
# ---------------------------------------------------------------------------

EXTERNAL_RULE_ID = "external"


@dataclass
class AlertRecord:
    """An alert emitted by a correlation rule, or mirrored from an upstream source."""

    alert_id: str
    ts: int
    asset_id: str
    rule_id: str
    severity: int
    message: str
    contributing_event_ids: list[str] = field(default_factory=list)

    def with_id(self) -> "AlertRecord":
        return replace(self, alert_id=compute_alert_id(self))


def compute_alert_id(alert: AlertRecord) -> str:
    payload = {
        "v": 1,
        "ts": alert.ts,
        "rule_id": alert.rule_id,
        "asset_id": alert.asset_id,
        "severity": alert.severity,
        "message": alert.message,
        "contributing_event_ids": list(alert.contributing_event_ids),
    }
    return hashlib.sha256(_dumps(payload).encode("utf-8")).hexdigest()


def validate_alert(alert: AlertRecord) -> list[str]:
    v: list[str] = []
    if not isinstance(alert.alert_id, str) or not _HEX64_RE.match(alert.alert_id):
        v.append("alert_id is not 64 lowercase hex chars")
    if not isinstance(alert.ts, int) or alert.ts <= 0:
        v.append("ts must be a positive integer")
    if alert.rule_id != EXTERNAL_RULE_ID and not alert.contributing_event_ids:
        v.append("contributing_event_ids empty for a rule-produced alert")
    if not isinstance(alert.severity, int) or not 0 <= alert.severity <= 10:
        v.append("severity out of range")
    if not alert.message:
        v.append("message must be non-empty")
    return v


def encode_alert(alert: AlertRecord) -> str:
    doc = {
        "v": 1,
        "alert_id": alert.alert_id,
        "ts": alert.ts,
        "asset_id": alert.asset_id,
        "rule_id": alert.rule_id,
        "severity": alert.severity,
        "message": alert.message,
        "contributing_event_ids": list(alert.contributing_event_ids),
    }
    return _dumps(doc)


def decode_alert(line: str) -> AlertRecord:
    doc = json.loads(line)
    if doc.get("v") != 1:
        raise ValueError(f"unsupported serialization version {doc.get('v')!r}")
    return AlertRecord(
        alert_id=doc["alert_id"],
        ts=doc["ts"],
        asset_id=doc["asset_id"],
        rule_id=doc["rule_id"],
        severity=doc["severity"],
        message=doc["message"],
        contributing_event_ids=list(doc["contributing_event_ids"]),
    )


# ---------------------------------------------------------------------------
# Asset
# ---------------------------------------------------------------------------


@dataclass
class Asset:
    asset_id: str
    kind: str
    display_name: str
    first_seen: int
    last_seen: int


def validate_asset(asset: Asset) -> list[str]:
    v: list[str] = []
    if not asset.asset_id:
        v.append("asset_id must be non-empty")
    if asset.kind not in ASSET_KINDS:
        v.append(f"unknown asset kind {asset.kind!r}")
    if asset.first_seen > asset.last_seen:
        v.append("first_seen after last_seen")
    return v


def encode_asset(asset: Asset) -> str:
    doc = {
        "v": 1,
        "asset_id": asset.asset_id,
        "kind": asset.kind,
        "display_name": asset.display_name,
        "first_seen": asset.first_seen,
        "last_seen": asset.last_seen,
    }
    return _dumps(doc)


def decode_asset(line: str) -> Asset:
    doc = json.loads(line)
    return Asset(
        asset_id=doc["asset_id"],
        kind=doc["kind"],
        display_name=doc["display_name"],
        first_seen=doc["first_seen"],
        last_seen=doc["last_seen"],
    )


# ---------------------------------------------------------------------------
# StixObjectRecord
# ---------------------------------------------------------------------------


@dataclass
class StixObjectRecord:
    """A parsed STIX 2.1 object kept verbatim alongside its event projection."""

    stix_id: str
    stix_type: str
    group: str
    created: int
    raw_document: str
    summary: dict[str, Any] = field(default_factory=dict)


def validate_stix_record(rec: StixObjectRecord) -> list[str]:
    v: list[str] = []
    if not _STIX_ID_RE.match(rec.stix_id):
        v.append(f"stix_id {rec.stix_id!r} does not match <type>--<uuid>")
    if not rec.stix_type:
        v.append("stix_type must be non-empty")
    if rec.group not in STIX_GROUPS:
        v.append(f"unknown stix group {rec.group!r}")
    if not isinstance(rec.created, int) or rec.created <= 0:
        v.append("created must be a positive integer")
    if not rec.raw_document:
        v.append("raw_document must be non-empty")
    return v


def encode_stix_record(rec: StixObjectRecord) -> str:
    doc = {
        "v": 1,
        "stix_id": rec.stix_id,
        "stix_type": rec.stix_type,
        "group": rec.group,
        "created": rec.created,
        "raw_document": rec.raw_document,
        "summary": rec.summary,
    }
    return _dumps(doc)


def decode_stix_record(line: str) -> StixObjectRecord:
    doc = json.loads(line)
    return StixObjectRecord(
        stix_id=doc["stix_id"],
        stix_type=doc["stix_type"],
        group=doc["group"],
        created=doc["created"],
        raw_document=doc["raw_document"],
        summary=dict(doc["summary"]),
    )


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------


@dataclass
class EventPredicate:
    """Time-free match predicate, reused by correlation rules and saved views."""

    source_kinds: Optional[frozenset[str]] = None
    categories: Optional[frozenset[str]] = None
    asset_ids: Optional[frozenset[str]] = None
    severity_min: Optional[int] = None
    text_query: Optional[str] = None

    def matches(self, ev: SecurityEvent) -> bool:
        if self.source_kinds is not None and ev.source_kind not in self.source_kinds:
            return False
        if self.categories is not None and ev.category not in self.categories:
            return False
        if self.asset_ids is not None and ev.asset_id not in self.asset_ids:
            return False
        if self.severity_min is not None and ev.severity < self.severity_min:
            return False
        if self.text_query is not None and self.text_query.lower() not in ev.title.lower():
            return False
        return True

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {}
        if self.source_kinds is not None:
            doc["source_kinds"] = sorted(self.source_kinds)
        if self.categories is not None:
            doc["categories"] = sorted(self.categories)
        if self.asset_ids is not None:
            doc["asset_ids"] = sorted(self.asset_ids)
        if self.severity_min is not None:
            doc["severity_min"] = self.severity_min
        if self.text_query is not None:
            doc["text_query"] = self.text_query
        return doc

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "EventPredicate":
        def fs(key: str) -> Optional[frozenset[str]]:
            return frozenset(doc[key]) if key in doc and doc[key] is not None else None

        return cls(
            source_kinds=fs("source_kinds"),
            categories=fs("categories"),
            asset_ids=fs("asset_ids"),
            severity_min=doc.get("severity_min"),
            text_query=doc.get("text_query"),
        )


@dataclass
class EventFilter(EventPredicate):
    """Predicate plus a mandatory half-open time range [time_from, time_to)."""

    time_from: int = 0
    time_to: int = 0

    def matches(self, ev: SecurityEvent) -> bool:
        if not self.time_from <= ev.ts < self.time_to:
            return False
        return EventPredicate.matches(self, ev)

    def validate(self) -> list[str]:
        v: list[str] = []
        if not isinstance(self.time_from, int) or not isinstance(self.time_to, int):
            v.append("time bounds must be integers")
        elif self.time_from >= self.time_to:
            v.append("time_from must be before time_to")
        if self.severity_min is not None and not 0 <= self.severity_min <= 10:
            v.append("severity_min out of range")
        if self.source_kinds is not None and not self.source_kinds <= SOURCE_KINDS:
            v.append("unknown source_kind in filter")
        if self.categories is not None and not self.categories <= CATEGORIES:
            v.append("unknown category in filter")
        return v

    def to_doc(self) -> dict[str, Any]:
        doc = {"time_from": self.time_from, "time_to": self.time_to}
        doc.update(EventPredicate.to_doc(self))
        return doc

    @classmethod
    def from_doc(cls, doc: dict[str, Any]) -> "EventFilter":
        pred = EventPredicate.from_doc(doc)
        return cls(
            time_from=doc["time_from"],
            time_to=doc["time_to"],
            source_kinds=pred.source_kinds,
            categories=pred.categories,
            asset_ids=pred.asset_ids,
            severity_min=pred.severity_min,
            text_query=pred.text_query,
        )


def filter_digest(flt: EventFilter, order: str = "ts_asc") -> str:
    """Digest binding a page cursor to the exact filter + ordering it came from."""
    doc = flt.to_doc()
    doc["order"] = order
    return hashlib.sha256(_dumps(doc).encode("utf-8")).hexdigest()


def event_sort_key(ev: SecurityEvent) -> tuple[int, str]:
    """The store-wide strict total order: ts, then event_id ascending."""
    return (ev.ts, ev.event_id)


def events_equal(a: Iterable[SecurityEvent], b: Iterable[SecurityEvent]) -> bool:
    return [event_sort_key(e) for e in a] == [event_sort_key(e) for e in b]
