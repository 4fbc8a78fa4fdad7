"""Per-format parsers turning raw source payloads into canonical records.

Grammars are documented in docs/formats.md. Every parser is total: malformed
fragments become rejects, never exceptions, and every emitted event passes
``model.validate_event``.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Optional

from .model import _STIX_ID_RE, SecurityEvent, StixObjectRecord, validate_event

FORMAT_HINTS = frozenset(
    {
        "syslog",
        "auth_log",
        "process_snapshot",
        "metric_csv",
        "stix_bundle",
        "honeypot_json",
        "siem_alert_json",
    }
)

# The 18 STIX 2.1 cyber-observable (SCO) types.
STIX_OBSERVABLE_TYPES = frozenset(
    {
        "artifact",
        "autonomous-system",
        "directory",
        "domain-name",
        "email-addr",
        "email-message",
        "file",
        "ipv4-addr",
        "ipv6-addr",
        "mac-addr",
        "mutex",
        "network-traffic",
        "process",
        "software",
        "url",
        "user-account",
        "windows-registry-key",
        "x509-certificate",
    }
)
STIX_RELATIONSHIP_TYPES = frozenset({"relationship", "sighting"})

DEFAULT_SEVERITY_TABLES: dict[str, dict[str, int]] = {
    "siem": {"critical": 9, "high": 7, "medium": 5, "low": 3, "info": 1, "informational": 1},
    "deception": {"ssh_attempt": 6, "credential_use": 7, "malware_drop": 8, "default": 6},
    "cti": {"observable": 0, "indicator": 2, "relationship": 0},
}

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MS = timedelta(milliseconds=1)


class UnsupportedFormatError(ValueError):
    pass


@dataclass
class RawRecord:
    """One unit of raw input as fetched from a source."""

    source_id: str
    received_at: int
    payload: bytes
    format_hint: str


def encode_raw_record(rec: RawRecord) -> str:
    doc = {
        "source_id": rec.source_id,
        "received_at": rec.received_at,
        "format_hint": rec.format_hint,
        "payload_b64": base64.b64encode(rec.payload).decode("ascii"),
    }
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def decode_raw_record(line: str) -> RawRecord:
    doc = json.loads(line)
    return RawRecord(
        source_id=doc["source_id"],
        received_at=doc["received_at"],
        payload=base64.b64decode(doc["payload_b64"]),
        format_hint=doc["format_hint"],
    )


Reject = "tuple[tuple[int, int], str]"


@dataclass
class ConversionOutcome:
    events: list[SecurityEvent] = field(default_factory=list)
    stix_objects: list[StixObjectRecord] = field(default_factory=list)
    rejects: list[tuple[tuple[int, int], str]] = field(default_factory=list)

    def merge(self, other: "ConversionOutcome") -> None:
        self.events.extend(other.events)
        self.stix_objects.extend(other.stix_objects)
        self.rejects.extend(other.rejects)


def parse_rfc3339_ms(text: str) -> Optional[int]:
    """RFC 3339 timestamp → UTC epoch-milliseconds; None when unparseable."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return (dt - _EPOCH) // _MS


def _flatten(prefix: str, value: Any, out: dict[str, Any]) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, out)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _flatten(f"{prefix}.{i}", v, out)
    elif isinstance(value, (str, int, float, bool)) and value is not None:
        if isinstance(value, float) and not math.isfinite(value):
            return
        out[prefix] = value


def _byte_lines(payload: bytes) -> list[tuple[tuple[int, int], bytes]]:
    """Split payload on newlines, keeping each line's byte range."""
    lines = []
    start = 0
    for chunk in payload.split(b"\n"):
        lines.append(((start, start + len(chunk)), chunk))
        start += len(chunk) + 1
    return lines


@dataclass
class Converter:
    """Format dispatch with per-source severity tables (config-overridable)."""

    severity_tables: dict[str, dict[str, int]] = field(default_factory=lambda: DEFAULT_SEVERITY_TABLES)

    def convert(self, rec: RawRecord) -> ConversionOutcome:
        if rec.format_hint not in FORMAT_HINTS:
            raise UnsupportedFormatError(f"unsupported format {rec.format_hint!r}")
        handler = getattr(self, f"_convert_{rec.format_hint}")
        outcome: ConversionOutcome = handler(rec.payload, rec.source_id, rec.received_at)
        return outcome

    # -- line-oriented text formats -------------------------------------

    def _convert_auth_log(self, payload: bytes, source_id: str, received_at: int) -> ConversionOutcome:
        out = ConversionOutcome()
        for rng, raw in _byte_lines(payload):
            if not raw.strip():
                continue
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                out.rejects.append((rng, "line not utf-8"))
                continue
            fields = line.strip().split(" ")
            if len(fields) != 5:
                out.rejects.append((rng, "malformed auth line"))
                continue
            ts_text, host, verb, user, session_id = fields
            ts = parse_rfc3339_ms(ts_text)
            if ts is None or ts <= 0:
                out.rejects.append((rng, "bad timestamp"))
                continue
            if verb not in ("LOGIN", "LOGOUT"):
                out.rejects.append((rng, "unknown session verb"))
                continue
            action = verb.lower()
            out.events.append(
                SecurityEvent(
                    event_id="",
                    ts=ts,
                    ingested_at=received_at,
                    source_kind="log",
                    source_id=source_id,
                    asset_id=host,
                    category="session",
                    severity=0,
                    title=f"{user} {action}",
                    attributes={
                        "user": user,
                        "session_action": action,
                        "session_id": session_id,
                        "host": host,
                    },
                ).with_id()
            )
        return out

    def _convert_syslog(self, payload: bytes, source_id: str, received_at: int) -> ConversionOutcome:
        out = ConversionOutcome()
        for rng, raw in _byte_lines(payload):
            if not raw.strip():
                continue
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                out.rejects.append((rng, "line not utf-8"))
                continue
            head, sep, message = line.partition(": ")
            if not sep:
                out.rejects.append((rng, "malformed syslog line"))
                continue
            fields = head.strip().split(" ")
            if len(fields) != 3:
                out.rejects.append((rng, "malformed syslog line"))
                continue
            ts_text, host, app = fields
            ts = parse_rfc3339_ms(ts_text)
            if ts is None or ts <= 0:
                out.rejects.append((rng, "bad timestamp"))
                continue
            attrs: dict[str, Any] = {"host": host}
            if app.endswith("]") and "[" in app:
                program, _, pid_text = app[:-1].partition("[")
                attrs["program"] = program
                try:
                    attrs["pid"] = int(pid_text)
                except ValueError:
                    out.rejects.append((rng, "malformed syslog line"))
                    continue
            else:
                attrs["program"] = app
            title = message.strip()
            if not title:
                out.rejects.append((rng, "empty syslog message"))
                continue
            out.events.append(
                SecurityEvent(
                    event_id="",
                    ts=ts,
                    ingested_at=received_at,
                    source_kind="log",
                    source_id=source_id,
                    asset_id=host,
                    category="raw",
                    severity=0,
                    title=title[:512],
                    attributes=attrs,
                ).with_id()
            )
        return out

    def _convert_metric_csv(self, payload: bytes, source_id: str, received_at: int) -> ConversionOutcome:
        out = ConversionOutcome()
        lines = _byte_lines(payload)
        content = [(rng, raw) for rng, raw in lines if raw.strip()]
        if not content:
            return out
        header_rng, header_raw = content[0]
        if header_raw.decode("utf-8", "replace").strip() != "ts,host,metric_name,value":
            out.rejects.append(((0, len(payload)), "bad csv header"))
            return out
        for rng, raw in content[1:]:
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                out.rejects.append((rng, "line not utf-8"))
                continue
            cols = line.strip().split(",")
            if len(cols) != 4:
                out.rejects.append((rng, "malformed csv row"))
                continue
            ts_text, host, metric_name, value_text = cols
            try:
                ts = int(ts_text)
            except ValueError:
                out.rejects.append((rng, "bad timestamp"))
                continue
            if ts <= 0:
                out.rejects.append((rng, "bad timestamp"))
                continue
            try:
                value = float(value_text)
            except ValueError:
                out.rejects.append((rng, "non-numeric metric value"))
                continue
            if not math.isfinite(value):
                out.rejects.append((rng, "non-finite metric value"))
                continue
            out.events.append(
                SecurityEvent(
                    event_id="",
                    ts=ts,
                    ingested_at=received_at,
                    source_kind="log",
                    source_id=source_id,
                    asset_id=host,
                    category="metric",
                    severity=0,
                    title=f"{metric_name}={value_text}",
                    attributes={"metric_name": metric_name, "value": value, "host": host},
                ).with_id()
            )
        return out

    # -- JSON document formats ------------------------------------------

    def _load_json_doc(self, payload: bytes, out: ConversionOutcome) -> Optional[Any]:
        whole = (0, len(payload))
        try:
            text = payload.decode("utf-8")
        except UnicodeDecodeError:
            out.rejects.append((whole, "payload not utf-8"))
            return None
        if not text.strip():
            out.rejects.append((whole, "empty document"))
            return None
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            out.rejects.append((whole, "invalid json"))
            return None

    def _convert_process_snapshot(self, payload: bytes, source_id: str, received_at: int) -> ConversionOutcome:
        out = ConversionOutcome()
        doc = self._load_json_doc(payload, out)
        if doc is None:
            return out
        whole = (0, len(payload))
        if not isinstance(doc, dict):
            out.rejects.append((whole, "malformed snapshot document"))
            return out
        host = doc.get("host")
        if not isinstance(host, str) or not host:
            out.rejects.append((whole, "missing host"))
            return out
        ts = doc.get("ts")
        if not isinstance(ts, int) or isinstance(ts, bool) or ts <= 0:
            out.rejects.append((whole, "missing ts"))
            return out
        processes = doc.get("processes", [])
        if not isinstance(processes, list):
            out.rejects.append((whole, "malformed snapshot document"))
            return out
        for i, entry in enumerate(processes):
            if (
                not isinstance(entry, dict)
                or not isinstance(entry.get("pid"), int)
                or isinstance(entry.get("pid"), bool)
                or not isinstance(entry.get("name"), str)
                or not entry.get("name")
            ):
                out.rejects.append(((i, i + 1), "malformed process entry"))
                continue
            pid = entry["pid"]
            name = entry["name"]
            attrs: dict[str, Any] = {"pid": pid, "process_name": name, "host": host}
            if isinstance(entry.get("user"), str):
                attrs["user"] = entry["user"]
            cpu = entry.get("cpu_pct")
            if isinstance(cpu, (int, float)) and not isinstance(cpu, bool) and math.isfinite(cpu):
                attrs["cpu_pct"] = cpu
            event = SecurityEvent(
                event_id="",
                ts=ts,
                ingested_at=received_at,
                source_kind="log",
                source_id=source_id,
                asset_id=host,
                category="process",
                severity=0,
                title=f"{name} (pid {pid})"[:512],
                attributes=attrs,
            ).with_id()
            # Fully identical duplicate entries collapse to one event.
            if not any(e.event_id == event.event_id for e in out.events):
                out.events.append(event)
        return out

    def _convert_siem_alert_json(self, payload: bytes, source_id: str, received_at: int) -> ConversionOutcome:
        out = ConversionOutcome()
        doc = self._load_json_doc(payload, out)
        if doc is None:
            return out
        whole = (0, len(payload))
        if not isinstance(doc, dict):
            out.rejects.append((whole, "malformed alert document"))
            return out
        ts = doc.get("ts")
        if not isinstance(ts, int) or isinstance(ts, bool) or ts <= 0:
            out.rejects.append((whole, "missing ts"))
            return out
        if "severity" not in doc:
            out.rejects.append((whole, "missing severity"))
            return out
        severity = self._map_siem_severity(doc["severity"])
        if severity is None:
            out.rejects.append((whole, "unmapped severity"))
            return out
        message = doc.get("message")
        if not isinstance(message, str) or not message:
            out.rejects.append((whole, "missing message"))
            return out
        source_kind = doc.get("source_kind", "siem")
        if source_kind not in ("siem", "edr", "ndr"):
            source_kind = "siem"
        asset = doc.get("asset_id") or doc.get("host") or ""
        if not isinstance(asset, str):
            asset = ""
        attrs: dict[str, Any] = {}
        if isinstance(doc.get("rule"), str):
            attrs["rule"] = doc["rule"]
        if asset:
            attrs["host"] = asset
        consumed = {"ts", "severity", "message", "asset_id", "host", "source_kind", "rule"}
        extra: dict[str, Any] = {}
        for key, value in doc.items():
            if key not in consumed:
                _flatten(key, value, extra)
        attrs.update(extra)
        out.events.append(
            SecurityEvent(
                event_id="",
                ts=ts,
                ingested_at=received_at,
                source_kind=source_kind,
                source_id=source_id,
                asset_id=asset,
                category="alert",
                severity=severity,
                title=message[:512],
                attributes=attrs,
            ).with_id()
        )
        return out

    def _map_siem_severity(self, value: Any) -> Optional[int]:
        if isinstance(value, bool):
            return None
        if isinstance(value, int):
            return value if 0 <= value <= 10 else None
        if isinstance(value, str):
            return self.severity_tables.get("siem", {}).get(value.lower())
        return None

    def _convert_honeypot_json(self, payload: bytes, source_id: str, received_at: int) -> ConversionOutcome:
        out = ConversionOutcome()
        doc = self._load_json_doc(payload, out)
        if doc is None:
            return out
        whole = (0, len(payload))
        if not isinstance(doc, dict):
            out.rejects.append((whole, "malformed honeypot document"))
            return out
        ts = doc.get("ts")
        if not isinstance(ts, int) or isinstance(ts, bool) or ts <= 0:
            out.rejects.append((whole, "missing ts"))
            return out
        decoy = doc.get("decoy_id")
        if not isinstance(decoy, str) or not decoy:
            out.rejects.append((whole, "missing decoy_id"))
            return out
        action = doc.get("action") if isinstance(doc.get("action"), str) else "hit"
        src_ip = doc.get("src_ip") if isinstance(doc.get("src_ip"), str) else ""
        table = self.severity_tables.get("deception", {})
        severity = table.get(action, table.get("default", 6))
        attrs: dict[str, Any] = {"decoy_id": decoy, "action": action}
        if src_ip:
            attrs["src_ip"] = src_ip
        out.events.append(
            SecurityEvent(
                event_id="",
                ts=ts,
                ingested_at=received_at,
                source_kind="deception",
                source_id=source_id,
                asset_id=decoy,
                category="alert",
                severity=severity,
                title=f"honeypot {action} from {src_ip}"[:512] if src_ip else f"honeypot {action}"[:512],
                attributes=attrs,
            ).with_id()
        )
        return out

    # -- STIX 2.1 bundles -------------------------------------------------

    def _convert_stix_bundle(self, payload: bytes, source_id: str, received_at: int) -> ConversionOutcome:
        out = ConversionOutcome()
        whole = (0, len(payload))
        try:
            text = payload.decode("utf-8")
        except UnicodeDecodeError:
            out.rejects.append((whole, "payload not utf-8"))
            return out
        if not text.strip():
            out.rejects.append((whole, "empty document"))
            return out
        try:
            doc = json.loads(text)
        except json.JSONDecodeError:
            out.rejects.append((whole, "invalid json"))
            return out
        if not isinstance(doc, dict) or doc.get("type") != "bundle" or not isinstance(doc.get("objects"), list):
            out.rejects.append((whole, "not a stix bundle"))
            return out
        spans = _object_spans(text)
        for i, obj in enumerate(doc["objects"]):
            rng = (i, i + 1)
            if not isinstance(obj, dict):
                out.rejects.append((rng, "malformed stix object"))
                continue
            stix_type = obj.get("type")
            if not isinstance(stix_type, str) or not stix_type:
                out.rejects.append((rng, "missing stix type"))
                continue
            stix_id = obj.get("id")
            if not isinstance(stix_id, str) or not stix_id:
                out.rejects.append((rng, "missing stix id"))
                continue
            if not _STIX_ID_RE.match(stix_id):
                out.rejects.append((rng, "bad stix id"))
                continue
            if stix_id.split("--", 1)[0] != stix_type:
                out.rejects.append((rng, "stix id/type mismatch"))
                continue
            created = _stix_timestamp(obj)
            if created is None:
                out.rejects.append((rng, "missing timestamp"))
                continue
            group = stix_group_for(stix_type)
            category = STIX_GROUP_CATEGORY[group]
            primary = _stix_primary_value(obj)
            raw_document = (
                text[spans[i][0]: spans[i][1]]
                if spans is not None and i < len(spans)
                else json.dumps(obj, separators=(",", ":"), ensure_ascii=False)
            )
            summary: dict[str, Any] = {"type": stix_type, "value": primary, "created": created}
            if isinstance(obj.get("pattern"), str):
                summary["pattern"] = obj["pattern"]
            out.stix_objects.append(
                StixObjectRecord(
                    stix_id=stix_id,
                    stix_type=stix_type,
                    group=group,
                    created=created,
                    raw_document=raw_document,
                    summary=summary,
                )
            )
            severity = self.severity_tables.get("cti", {}).get(category, 0)
            out.events.append(
                SecurityEvent(
                    event_id="",
                    ts=created,
                    ingested_at=received_at,
                    source_kind="cti",
                    source_id=source_id,
                    asset_id="",
                    category=category,
                    severity=severity,
                    title=f"{stix_type} {primary}"[:512],
                    attributes={"stix_id": stix_id, "stix_type": stix_type, "stix_group": group},
                    raw_ref=stix_id,
                ).with_id()
            )
        return out


STIX_GROUP_CATEGORY = {
    "cyber_observable": "observable",
    "domain_object": "indicator",
    "relationship": "relationship",
}


def stix_group_for(stix_type: str) -> str:
    """Group classification: SCOs, relationship kinds, everything else SDO/SMO."""
    if stix_type in STIX_OBSERVABLE_TYPES:
        return "cyber_observable"
    if stix_type in STIX_RELATIONSHIP_TYPES:
        return "relationship"
    return "domain_object"


def _stix_timestamp(obj: dict[str, Any]) -> Optional[int]:
    for key in ("created", "modified", "valid_from", "first_observed"):
        value = obj.get(key)
        if isinstance(value, str):
            ms = parse_rfc3339_ms(value)
            if ms is not None and ms > 0:
                return ms
    return None


def _stix_primary_value(obj: dict[str, Any]) -> str:
    for key in ("name", "value", "pattern"):
        value = obj.get(key)
        if isinstance(value, str) and value:
            return value
    if obj.get("type") in STIX_RELATIONSHIP_TYPES:
        rel = obj.get("relationship_type", "sighting")
        src = obj.get("source_ref") or obj.get("sighting_of_ref")
        dst = obj.get("target_ref")
        if isinstance(src, str) and isinstance(dst, str):
            return f"{rel} {src} -> {dst}"
        if isinstance(src, str):
            return f"{rel} {src}"
    return str(obj.get("id", ""))


# -- verbatim object slicing -------------------------------------------------


def _object_spans(text: str) -> Optional[list[tuple[int, int]]]:
    """Character spans of each element of the top-level "objects" array.

    Walks the JSON text directly so raw_document can be the verbatim source
    slice even for pretty-printed bundles. Returns None when scanning fails
    (caller falls back to a compact re-dump).
    """
    try:
        i = _skip_ws(text, 0)
        if text[i] != "{":
            return None
        i += 1
        while True:
            i = _skip_ws(text, i)
            if text[i] == "}":
                return None
            key, i = _scan_string(text, i)
            i = _skip_ws(text, i)
            if text[i] != ":":
                return None
            i = _skip_ws(text, i + 1)
            if key == "objects" and text[i] == "[":
                return _scan_array_spans(text, i)
            i = _scan_value(text, i)
            i = _skip_ws(text, i)
            if text[i] == ",":
                i += 1
            elif text[i] == "}":
                return None
    except (IndexError, ValueError):
        return None


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    return i


def _scan_string(text: str, i: int) -> tuple[str, int]:
    if text[i] != '"':
        raise ValueError("expected string")
    j = i + 1
    while True:
        c = text[j]
        if c == "\\":
            j += 2
        elif c == '"':
            return json.loads(text[i: j + 1]), j + 1
        else:
            j += 1


def _scan_value(text: str, i: int) -> int:
    c = text[i]
    if c == '"':
        _, j = _scan_string(text, i)
        return j
    if c in "{[":
        open_c, close_c = c, "}" if c == "{" else "]"
        depth = 0
        j = i
        while True:
            c = text[j]
            if c == '"':
                _, j = _scan_string(text, j)
                continue
            if c == open_c:
                depth += 1
            elif c == close_c:
                depth -= 1
                if depth == 0:
                    return j + 1
            j += 1
    j = i
    while j < len(text) and text[j] not in ",]} \t\r\n":
        j += 1
    return j


def _scan_array_spans(text: str, i: int) -> list[tuple[int, int]]:
    spans: list[tuple[int, int]] = []
    i = _skip_ws(text, i + 1)
    if text[i] == "]":
        return spans
    while True:
        start = i
        i = _scan_value(text, i)
        spans.append((start, i))
        i = _skip_ws(text, i)
        if text[i] == ",":
            i = _skip_ws(text, i + 1)
        elif text[i] == "]":
            return spans
        else:
            raise ValueError("malformed array")


# -- module-level convenience wrappers ---------------------------------------

_DEFAULT = Converter()


def convert(rec: RawRecord) -> ConversionOutcome:
    return _DEFAULT.convert(rec)


def parse_auth_log(text: str, *, source_id: str = "auth", received_at: int = 0) -> ConversionOutcome:
    return _DEFAULT.convert(RawRecord(source_id, received_at, text.encode("utf-8"), "auth_log"))


def parse_syslog(text: str, *, source_id: str = "syslog", received_at: int = 0) -> ConversionOutcome:
    return _DEFAULT.convert(RawRecord(source_id, received_at, text.encode("utf-8"), "syslog"))


def parse_process_snapshot(doc: str, *, source_id: str = "procmon", received_at: int = 0) -> ConversionOutcome:
    return _DEFAULT.convert(RawRecord(source_id, received_at, doc.encode("utf-8"), "process_snapshot"))


def parse_metric_csv(doc: str, *, source_id: str = "metrics", received_at: int = 0) -> ConversionOutcome:
    return _DEFAULT.convert(RawRecord(source_id, received_at, doc.encode("utf-8"), "metric_csv"))


def parse_stix_bundle(doc: str, *, source_id: str = "cti", received_at: int = 0) -> ConversionOutcome:
    return _DEFAULT.convert(RawRecord(source_id, received_at, doc.encode("utf-8"), "stix_bundle"))


def parse_siem_alert(doc: str, *, source_id: str = "siem", received_at: int = 0) -> ConversionOutcome:
    return _DEFAULT.convert(RawRecord(source_id, received_at, doc.encode("utf-8"), "siem_alert_json"))


def parse_honeypot_event(doc: str, *, source_id: str = "honeypot", received_at: int = 0) -> ConversionOutcome:
    return _DEFAULT.convert(RawRecord(source_id, received_at, doc.encode("utf-8"), "honeypot_json"))


def assert_outcome_valid(outcome: ConversionOutcome) -> None:
    """Internal consistency check used by tests: emitted events must validate."""
    for ev in outcome.events:
        violations = validate_event(ev)
        if violations:
            raise AssertionError(f"converter emitted invalid event: {violations}")
    for rng, reason in outcome.rejects:
        if not reason:
            raise AssertionError(f"reject {rng} with empty reason")
