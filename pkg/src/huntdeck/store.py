"""Append-only, time-indexed persistence with filtered queries and pagination.

Storage layout (under one data directory):

    segments/events-000001.ndjson   canonical event lines, append-only
    segments/alerts-000001.ndjson   alert lines
    segments/stix-000001.ndjson     STIX object records
    segments/assets-000001.ndjson   asset observations (latest wins)
    segments/views-000001.ndjson    view put/delete operations (latest wins)
    event_ids.idx                   persisted existence index, repaired on open

Appends are durable (flush + fsync) before returning and serialized through
one writer lock; readers see an append atomically. The in-memory (ts,
event_id) index is rebuilt from the segments on open, which also repairs a
torn trailing line left by a crash mid-write.
"""

from __future__ import annotations

import base64
import bisect
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .model import (
    AlertRecord,
    Asset,
    EventFilter,
    SecurityEvent,
    StixObjectRecord,
    decode_alert,
    decode_asset,
    decode_event,
    decode_stix_record,
    encode_alert,
    encode_asset,
    encode_event,
    encode_stix_record,
    filter_digest,
    validate_alert,
    validate_asset,
    validate_event,
    validate_stix_record,
)

logger = logging.getLogger(__name__)

DEFAULT_GRACE_MS = 60_000
SEGMENT_ROLL_BYTES = 4 * 1024 * 1024
MAX_PAGE_SIZE = 1000


class StoreError(Exception):
    pass


class CursorMismatchError(StoreError):
    pass


class NotFoundError(StoreError):
    pass


class WindowNotStableError(StoreError):
    pass


@dataclass
class PageCursor:
    last_ts: int
    last_event_id: str
    digest: str

    def encode(self) -> str:
        doc = {"t": self.last_ts, "i": self.last_event_id, "f": self.digest}
        raw = json.dumps(doc, separators=(",", ":")).encode("utf-8")
        return base64.urlsafe_b64encode(raw).decode("ascii")

    @classmethod
    def decode(cls, token: str) -> "PageCursor":
        try:
            doc = json.loads(base64.urlsafe_b64decode(token.encode("ascii")))
            return cls(last_ts=doc["t"], last_event_id=doc["i"], digest=doc["f"])
        except Exception as exc:
            raise CursorMismatchError(f"undecodable cursor: {exc}") from exc


@dataclass
class Page:
    items: list[SecurityEvent]
    next_cursor: Optional[str]
    total_estimate: int


@dataclass
class AlertPage:
    items: list[AlertRecord]
    next_cursor: Optional[str]
    total_estimate: int


@dataclass
class SessionRow:
    user: str
    login_ts: int
    logout_ts: Optional[int]  # None = still open
    asset_id: str
    session_id: str


class _Segment:
    """One rolling append-only NDJSON file family."""

    def __init__(self, directory: Path, prefix: str):
        self.directory = directory
        self.prefix = prefix
        self._fh = None
        self._current: Optional[Path] = None

    def files(self) -> list[Path]:
        return sorted(self.directory.glob(f"{self.prefix}-*.ndjson"))

    def _open_for_append(self) -> None:
        files = self.files()
        if files and files[-1].stat().st_size < SEGMENT_ROLL_BYTES:
            self._current = files[-1]
        else:
            n = int(files[-1].stem.split("-")[-1]) + 1 if files else 1
            self._current = self.directory / f"{self.prefix}-{n:06d}.ndjson"
        self._fh = open(self._current, "ab")

    def append_lines(self, lines: Iterable[str]) -> None:
        if self._fh is None:
            self._open_for_append()
        assert self._fh is not None and self._current is not None
        data = "".join(line + "\n" for line in lines).encode("utf-8")
        if not data:
            return
        self._fh.write(data)
        self._fh.flush()
        os.fsync(self._fh.fileno())
        if self._current.stat().st_size >= SEGMENT_ROLL_BYTES:
            self._fh.close()
            self._fh = None

    def read_lines(self) -> Iterable[str]:
        for path in self.files():
            data = path.read_bytes()
            if not data:
                continue
            # Repair a torn tail: drop bytes after the last newline.
            if not data.endswith(b"\n"):
                cut = data.rfind(b"\n") + 1
                logger.warning("truncating torn tail of %s at byte %d", path, cut)
                with open(path, "r+b") as fh:
                    fh.truncate(cut)
                data = data[:cut]
            for line in data.decode("utf-8").splitlines():
                if line:
                    yield line

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class EventStore:
    """Single-writer, many-reader store for events, alerts, assets, and STIX records."""

    def __init__(
        self,
        data_dir: "str | Path",
        clock: Callable[[], int] = lambda: int(time.time() * 1000),
        grace_ms: int = DEFAULT_GRACE_MS,
    ):
        self.data_dir = Path(data_dir)
        self.clock = clock
        self.grace_ms = grace_ms
        seg_dir = self.data_dir / "segments"
        seg_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._segments = {
            name: _Segment(seg_dir, name) for name in ("events", "alerts", "stix", "assets", "views")
        }
        # in-memory indexes, rebuilt on open
        self._events: list[tuple[int, str, SecurityEvent]] = []
        self._event_ids: set[str] = set()
        self._alerts: list[tuple[int, str, AlertRecord]] = []
        self._alert_ids: set[str] = set()
        self._alert_log: list[AlertRecord] = []  # append order, drives the live stream
        self._stix: dict[str, StixObjectRecord] = {}
        self._assets: dict[str, Asset] = {}
        self._views: dict[str, dict[str, Any]] = {}
        self._alert_listeners: list[Callable[[AlertRecord, int], None]] = []
        self._load()
        self._repair_id_index()

    # -- open / recovery ----------------------------------------------------

    def _load(self) -> None:
        for line in self._segments["events"].read_lines():
            ev = decode_event(line)
            if ev.event_id not in self._event_ids:
                self._event_ids.add(ev.event_id)
                bisect.insort(self._events, (ev.ts, ev.event_id, ev))
        for line in self._segments["alerts"].read_lines():
            alert = decode_alert(line)
            if alert.alert_id not in self._alert_ids:
                self._alert_ids.add(alert.alert_id)
                bisect.insort(self._alerts, (alert.ts, alert.alert_id, alert))
                self._alert_log.append(alert)
        for line in self._segments["stix"].read_lines():
            rec = decode_stix_record(line)
            self._stix.setdefault(rec.stix_id, rec)
        for line in self._segments["assets"].read_lines():
            asset = decode_asset(line)
            self._assets[asset.asset_id] = asset  # latest observation wins
        for line in self._segments["views"].read_lines():
            doc = json.loads(line)
            if doc.get("op") == "delete":
                self._views.pop(doc["view_id"], None)
            else:
                self._views[doc["view"]["view_id"]] = doc["view"]

    def _repair_id_index(self) -> None:
        idx = self.data_dir / "event_ids.idx"
        on_disk: set[str] = set()
        if idx.exists():
            on_disk = {line for line in idx.read_text().splitlines() if line}
        if on_disk != self._event_ids:
            idx.write_text("".join(eid + "\n" for eid in sorted(self._event_ids)))

    def _append_id_index(self, new_ids: Iterable[str]) -> None:
        with open(self.data_dir / "event_ids.idx", "a") as fh:
            fh.write("".join(eid + "\n" for eid in new_ids))

    def close(self) -> None:
        with self._lock:
            for seg in self._segments.values():
                seg.close()

    # -- appends --------------------------------------------------------------

    def append_events(self, events: Iterable[SecurityEvent]) -> int:
        with self._lock:
            fresh: list[SecurityEvent] = []
            seen_batch: set[str] = set()
            for ev in events:
                violations = validate_event(ev)
                if violations:
                    raise StoreError(f"invalid event: {violations}")
                if ev.event_id in self._event_ids or ev.event_id in seen_batch:
                    continue
                seen_batch.add(ev.event_id)
                fresh.append(ev)
            if not fresh:
                return 0
            self._segments["events"].append_lines(encode_event(ev) for ev in fresh)
            for ev in fresh:
                self._event_ids.add(ev.event_id)
                bisect.insort(self._events, (ev.ts, ev.event_id, ev))
            self._append_id_index(ev.event_id for ev in fresh)
            return len(fresh)

    def append_alerts(self, alerts: Iterable[AlertRecord]) -> int:
        with self._lock:
            fresh: list[AlertRecord] = []
            for alert in alerts:
                violations = validate_alert(alert)
                if violations:
                    raise StoreError(f"invalid alert: {violations}")
                if alert.alert_id in self._alert_ids:
                    continue
                self._alert_ids.add(alert.alert_id)
                fresh.append(alert)
            if not fresh:
                return 0
            self._segments["alerts"].append_lines(encode_alert(a) for a in fresh)
            emitted: list[tuple[AlertRecord, int]] = []
            for alert in fresh:
                bisect.insort(self._alerts, (alert.ts, alert.alert_id, alert))
                self._alert_log.append(alert)
                emitted.append((alert, len(self._alert_log)))
            listeners = list(self._alert_listeners)
        for alert, seq in emitted:
            for listener in listeners:
                listener(alert, seq)
        return len(fresh)

    def append_stix(self, records: Iterable[StixObjectRecord]) -> int:
        with self._lock:
            fresh = []
            for rec in records:
                violations = validate_stix_record(rec)
                if violations:
                    raise StoreError(f"invalid stix record: {violations}")
                if rec.stix_id in self._stix:
                    continue
                self._stix[rec.stix_id] = rec
                fresh.append(rec)
            if fresh:
                self._segments["stix"].append_lines(encode_stix_record(r) for r in fresh)
            return len(fresh)

    def upsert_assets(self, assets: Iterable[Asset]) -> int:
        with self._lock:
            changed = []
            for asset in assets:
                violations = validate_asset(asset)
                if violations:
                    raise StoreError(f"invalid asset: {violations}")
                cur = self._assets.get(asset.asset_id)
                if cur is not None:
                    merged = Asset(
                        asset_id=asset.asset_id,
                        kind=cur.kind,
                        display_name=cur.display_name or asset.display_name,
                        first_seen=min(cur.first_seen, asset.first_seen),
                        last_seen=max(cur.last_seen, asset.last_seen),
                    )
                    if merged == cur:
                        continue
                    asset = merged
                self._assets[asset.asset_id] = asset
                changed.append(asset)
            if changed:
                self._segments["assets"].append_lines(encode_asset(a) for a in changed)
            return len(changed)

    # -- view persistence (validation lives in the views module) ---------------

    def put_view(self, view_doc: dict[str, Any]) -> None:
        with self._lock:
            self._segments["views"].append_lines([json.dumps({"op": "put", "view": view_doc}, separators=(",", ":"))])
            self._views[view_doc["view_id"]] = view_doc

    def delete_view(self, view_id: str) -> None:
        with self._lock:
            self._segments["views"].append_lines([json.dumps({"op": "delete", "view_id": view_id}, separators=(",", ":"))])
            self._views.pop(view_id, None)

    def get_view_docs(self) -> dict[str, dict[str, Any]]:
        with self._lock:
            return dict(self._views)

    # -- queries ----------------------------------------------------------------

    def _window(self, time_from: int, time_to: int) -> list[tuple[int, str, SecurityEvent]]:
        lo = bisect.bisect_left(self._events, (time_from, "", None)) if self._events else 0
        hi = bisect.bisect_left(self._events, (time_to, "", None)) if self._events else 0
        return self._events[lo:hi]

    def query(
        self,
        flt: EventFilter,
        order: str = "ts_asc",
        page_size: int = 100,
        cursor: Optional[str] = None,
    ) -> Page:
        violations = flt.validate()
        if violations:
            raise StoreError(f"invalid filter: {violations}")
        if order not in ("ts_asc", "ts_desc"):
            raise StoreError(f"invalid order {order!r}")
        if not isinstance(page_size, int) or not 1 <= page_size <= MAX_PAGE_SIZE:
            raise StoreError("page_size out of range")
        digest = filter_digest(flt, order)[:16]
        after: Optional[tuple[int, str]] = None
        if cursor is not None:
            cur = PageCursor.decode(cursor)
            if cur.digest != digest:
                raise CursorMismatchError("cursor filter mismatch")
            after = (cur.last_ts, cur.last_event_id)
        with self._lock:
            window = self._window(flt.time_from, flt.time_to)
            matched = [ev for (_, _, ev) in window if flt.matches(ev)]
        if order == "ts_desc":
            matched.reverse()
        total = len(matched)
        if after is not None:
            if order == "ts_asc":
                start = bisect.bisect_right([(e.ts, e.event_id) for e in matched], after)
            else:
                keys = [(-e.ts, _inv_id(e.event_id)) for e in matched]
                start = bisect.bisect_right(keys, (-after[0], _inv_id(after[1])))
            matched = matched[start:]
        items = matched[:page_size]
        next_cursor = None
        if len(matched) > page_size and items:
            last = items[-1]
            next_cursor = PageCursor(last.ts, last.event_id, digest).encode()
        return Page(items=items, next_cursor=next_cursor, total_estimate=total)

    def events_matching(self, flt: EventFilter) -> list[SecurityEvent]:
        """All matching events in (ts, event_id) order; snapshot copy."""
        violations = flt.validate()
        if violations:
            raise StoreError(f"invalid filter: {violations}")
        with self._lock:
            return [ev for (_, _, ev) in self._window(flt.time_from, flt.time_to) if flt.matches(ev)]

    def count_by(self, flt: EventFilter, dimension: str) -> list[tuple[Any, int]]:
        extractors: dict[str, Callable[[SecurityEvent], Any]] = {
            "category": lambda e: e.category,
            "source_kind": lambda e: e.source_kind,
            "asset_id": lambda e: e.asset_id,
            "stix_type": lambda e: e.attributes.get("stix_type", ""),
            "severity": lambda e: e.severity,
        }
        if dimension not in extractors:
            raise StoreError(f"unknown dimension {dimension!r}")
        violations = flt.validate()
        if violations:
            raise StoreError(f"invalid filter: {violations}")
        extract = extractors[dimension]
        counts: dict[Any, int] = {}
        with self._lock:
            for _, _, ev in self._window(flt.time_from, flt.time_to):
                if flt.matches(ev):
                    key = extract(ev)
                    counts[key] = counts.get(key, 0) + 1
        return sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))

    def get_stix(self, stix_id: str) -> StixObjectRecord:
        with self._lock:
            rec = self._stix.get(stix_id)
        if rec is None:
            raise NotFoundError(f"unknown stix id {stix_id!r}")
        return rec

    def stix_count(self) -> int:
        with self._lock:
            return len(self._stix)

    def stable_window_digest(self, flt: EventFilter) -> str:
        """Digest over ordered event ids in the window; the testable core of time travel."""
        now = self.clock()
        if flt.time_to > now - self.grace_ms:
            raise WindowNotStableError(
                f"window ends at {flt.time_to}, inside the late-arrival grace period (now={now}, grace={self.grace_ms})"
            )
        violations = flt.validate()
        if violations:
            raise StoreError(f"invalid filter: {violations}")
        h = hashlib.sha256()
        with self._lock:
            for _, _, ev in self._window(flt.time_from, flt.time_to):
                if flt.matches(ev):
                    h.update(ev.event_id.encode("ascii"))
                    h.update(b"\n")
        return h.hexdigest()

    def sessions_view(self, flt: EventFilter) -> list[SessionRow]:
        """Pair login/logout session events by session_id; unmatched logins stay open."""
        with self._lock:
            events = [ev for (_, _, ev) in self._window(flt.time_from, flt.time_to) if flt.matches(ev)]
        rows: list[SessionRow] = []
        open_by_session: dict[str, list[SessionRow]] = {}
        for ev in events:
            if ev.category != "session":
                continue
            sid = str(ev.attributes.get("session_id", ""))
            action = ev.attributes.get("session_action")
            if action == "login":
                row = SessionRow(
                    user=str(ev.attributes.get("user", "")),
                    login_ts=ev.ts,
                    logout_ts=None,
                    asset_id=ev.asset_id,
                    session_id=sid,
                )
                rows.append(row)
                open_by_session.setdefault(sid, []).append(row)
            elif action == "logout":
                pending = open_by_session.get(sid)
                if pending:
                    pending.pop(0).logout_ts = ev.ts
                # logout without a visible login is dropped (outside the window)
        rows.sort(key=lambda r: (r.login_ts, r.session_id))
        return rows

    # -- alerts -------------------------------------------------------------------

    def query_alerts(
        self,
        time_from: int,
        time_to: int,
        rule_id: Optional[str] = None,
        severity_min: Optional[int] = None,
        order: str = "ts_desc",
        page_size: int = 100,
        cursor: Optional[str] = None,
    ) -> AlertPage:
        if time_from >= time_to:
            raise StoreError("invalid filter: time_from must be before time_to")
        if order not in ("ts_asc", "ts_desc"):
            raise StoreError(f"invalid order {order!r}")
        if not isinstance(page_size, int) or not 1 <= page_size <= MAX_PAGE_SIZE:
            raise StoreError("page_size out of range")
        digest_doc = {"alerts": True, "from": time_from, "to": time_to, "rule": rule_id, "sev": severity_min, "order": order}
        digest = hashlib.sha256(json.dumps(digest_doc, separators=(",", ":")).encode()).hexdigest()[:16]
        after: Optional[tuple[int, str]] = None
        if cursor is not None:
            cur = PageCursor.decode(cursor)
            if cur.digest != digest:
                raise CursorMismatchError("cursor filter mismatch")
            after = (cur.last_ts, cur.last_event_id)
        with self._lock:
            lo = bisect.bisect_left(self._alerts, (time_from, "", None)) if self._alerts else 0
            hi = bisect.bisect_left(self._alerts, (time_to, "", None)) if self._alerts else 0
            matched = [
                a
                for (_, _, a) in self._alerts[lo:hi]
                if (rule_id is None or a.rule_id == rule_id)
                and (severity_min is None or a.severity >= severity_min)
            ]
        if order == "ts_desc":
            matched.reverse()
        total = len(matched)
        if after is not None:
            if order == "ts_asc":
                start = bisect.bisect_right([(a.ts, a.alert_id) for a in matched], after)
            else:
                keys = [(-a.ts, _inv_id(a.alert_id)) for a in matched]
                start = bisect.bisect_right(keys, (-after[0], _inv_id(after[1])))
            matched = matched[start:]
        items = matched[:page_size]
        next_cursor = None
        if len(matched) > page_size and items:
            last = items[-1]
            next_cursor = PageCursor(last.ts, last.alert_id, digest).encode()
        return AlertPage(items=items, next_cursor=next_cursor, total_estimate=total)

    def alerts_after(self, seq: int) -> list[tuple[AlertRecord, int]]:
        """Alerts in append order with sequence numbers > seq (stream replay)."""
        with self._lock:
            return [(a, i + 1) for i, a in enumerate(self._alert_log) if i + 1 > seq]

    def add_alert_listener(self, listener: Callable[[AlertRecord, int], None]) -> None:
        with self._lock:
            self._alert_listeners.append(listener)

    def remove_alert_listener(self, listener: Callable[[AlertRecord, int], None]) -> None:
        with self._lock:
            if listener in self._alert_listeners:
                self._alert_listeners.remove(listener)

    # -- stats / maintenance ----------------------------------------------------

    def event_count(self) -> int:
        with self._lock:
            return len(self._events)

    def alert_count(self) -> int:
        with self._lock:
            return len(self._alerts)

    def has_event(self, event_id: str) -> bool:
        with self._lock:
            return event_id in self._event_ids

    def event_id_set(self) -> set[str]:
        with self._lock:
            return set(self._event_ids)

    def assets(self) -> list[Asset]:
        with self._lock:
            return sorted(self._assets.values(), key=lambda a: a.asset_id)

    def source_stats(self, now: int, horizon_ms: int = 24 * 3_600_000) -> dict[str, dict[str, int]]:
        """Per-source last_event_ts, event count, and max severity over [now-horizon, now)."""
        stats: dict[str, dict[str, int]] = {}
        with self._lock:
            for _, _, ev in self._events:
                s = stats.setdefault(ev.source_id, {"last_event_ts": 0, "count_24h": 0, "severity_max_24h": 0})
                if ev.ts > s["last_event_ts"]:
                    s["last_event_ts"] = ev.ts
                if now - horizon_ms <= ev.ts < now:
                    s["count_24h"] += 1
                    if ev.severity > s["severity_max_24h"]:
                        s["severity_max_24h"] = ev.severity
        return stats

    def export_events(self, time_from: int, time_to: int) -> Iterable[str]:
        with self._lock:
            snapshot = list(self._window(time_from, time_to))
        for _, _, ev in snapshot:
            yield encode_event(ev)

    def verify(self) -> list[str]:
        """Recompute content digests for every stored record; return mismatches."""
        from .model import compute_alert_id, compute_event_id

        problems = []
        with self._lock:
            for _, _, ev in self._events:
                if compute_event_id(ev) != ev.event_id:
                    problems.append(f"event {ev.event_id} digest mismatch")
            for _, _, alert in self._alerts:
                if compute_alert_id(alert) != alert.alert_id:
                    problems.append(f"alert {alert.alert_id} digest mismatch")
        return problems


def _inv_id(event_id: str) -> str:
    """Map a hex id to its order-reversing complement (for descending bisect)."""
    return "".join("%x" % (15 - int(c, 16)) for c in event_id)
