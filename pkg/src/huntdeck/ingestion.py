"""Moving raw records from sources into the store: poll, batch, stream.

All three modes share one pipeline: convert → dedup (content-addressed ids)
→ append → advance checkpoint. The checkpoint moves only after a successful
append, so at-least-once delivery plus idempotent appends gives exactly-once
store contents. Alert-category events are additionally mirrored into
AlertRecords with rule_id="external" so upstream alerts land in the alerts
table alongside correlation output.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Optional

import httpx

from .converters import FORMAT_HINTS, Converter, RawRecord, decode_raw_record
from .model import EXTERNAL_RULE_ID, AlertRecord, Asset, SecurityEvent

logger = logging.getLogger(__name__)

MODES = frozenset({"poll", "batch", "stream"})
DEGRADED_AFTER_FAILURES = 3
POLL_PAGE_LIMIT = 500

ASSET_KIND_BY_SOURCE = {
    "log": "host",
    "siem": "host",
    "edr": "host",
    "ndr": "network_device",
    "deception": "honeypot",
    "cti": "platform",
}


class IngestError(Exception):
    pass


@dataclass
class SourceConfig:
    source_id: str
    mode: str
    format_hint: str
    endpoint: str
    poll_interval_ms: int = 60_000


def validate_source(cfg: SourceConfig) -> list[str]:
    v: list[str] = []
    if not cfg.source_id:
        v.append("source_id must be non-empty")
    if cfg.mode not in MODES:
        v.append(f"unknown mode {cfg.mode!r}")
    if cfg.format_hint not in FORMAT_HINTS:
        v.append(f"unknown format_hint {cfg.format_hint!r}")
    if not cfg.endpoint:
        v.append("endpoint must be non-empty")
    if cfg.mode == "poll" and cfg.poll_interval_ms <= 0:
        v.append("invalid interval")
    return v


@dataclass
class Checkpoint:
    source_id: str
    position: str
    updated_at: int


@dataclass
class IngestReport:
    fetched: int = 0  # conversion units entering dedup/append: events + rejects
    stored: int = 0
    duplicates: int = 0
    rejects: int = 0
    records: int = 0  # raw records processed, informational

    def add(self, other: "IngestReport") -> None:
        self.fetched += other.fetched
        self.stored += other.stored
        self.duplicates += other.duplicates
        self.rejects += other.rejects
        self.records += other.records


# -- broker simulator -----------------------------------------------------------


def frame_encode(payload: bytes) -> bytes:
    return struct.pack(">I", len(payload)) + payload


def frame_decode(frame: bytes) -> bytes:
    if len(frame) < 4:
        raise ValueError("short frame")
    (n,) = struct.unpack(">I", frame[:4])
    if len(frame) != 4 + n:
        raise ValueError("frame length mismatch")
    return frame[4:]


class BrokerSim:
    """In-process publish/subscribe broker honoring the stream contract:

    ordered per topic, at-least-once delivery of length-prefixed frames,
    resumable from any sequence number. ``duplicate_every`` makes the
    simulator re-deliver frames to exercise consumer idempotency.
    """

    def __init__(self, duplicate_every: int = 0):
        self._topics: dict[str, list[bytes]] = {}
        self._lock = threading.Lock()
        self.duplicate_every = duplicate_every

    def publish(self, topic: str, payload: bytes) -> int:
        with self._lock:
            frames = self._topics.setdefault(topic, [])
            frames.append(frame_encode(payload))
            return len(frames)

    def publish_corrupt(self, topic: str, junk: bytes) -> int:
        with self._lock:
            frames = self._topics.setdefault(topic, [])
            frames.append(junk)
            return len(frames)

    def topic_end(self, topic: str) -> int:
        with self._lock:
            return len(self._topics.get(topic, []))

    def subscribe(self, topic: str, from_seq: int) -> Iterator[tuple[int, bytes]]:
        """Yield (seq, frame) for every frame after from_seq, possibly twice."""
        with self._lock:
            frames = list(self._topics.get(topic, []))
        for i, frame in enumerate(frames, start=1):
            if i <= from_seq:
                continue
            yield (i, frame)
            if self.duplicate_every and i % self.duplicate_every == 0:
                yield (i, frame)


# -- service -----------------------------------------------------------------------


class IngestionService:
    """Source registry plus the shared convert→dedup→append pipeline."""

    def __init__(
        self,
        store,
        data_dir: "str | Path",
        converter: Optional[Converter] = None,
        clock: Callable[[], int] = lambda: int(time.time() * 1000),
        http_client: Optional[httpx.Client] = None,
        broker: Optional[BrokerSim] = None,
    ):
        self.store = store
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.converter = converter or Converter()
        self.clock = clock
        self.http = http_client or httpx.Client(timeout=10.0)
        self.broker = broker
        self.sources: dict[str, SourceConfig] = {}
        self.failures: dict[str, int] = {}
        self._last_poll: dict[str, int] = {}
        self._engine_feed: Optional[Callable[[SecurityEvent], None]] = None
        self._checkpoints: dict[str, Checkpoint] = {}
        self._processed_files: dict[str, dict[str, Any]] = {}
        self._load_state()

    # -- state files ---------------------------------------------------------

    def _load_state(self) -> None:
        cp_path = self.data_dir / "checkpoints.json"
        if cp_path.exists():
            doc = json.loads(cp_path.read_text())
            for source_id, entry in doc.items():
                self._checkpoints[source_id] = Checkpoint(source_id, entry["position"], entry["updated_at"])
        pf_path = self.data_dir / "processed_files.json"
        if pf_path.exists():
            self._processed_files = json.loads(pf_path.read_text())

    def _save_checkpoint(self, cp: Checkpoint) -> None:
        self._checkpoints[cp.source_id] = cp
        path = self.data_dir / "checkpoints.json"
        doc = {c.source_id: {"position": c.position, "updated_at": c.updated_at} for c in self._checkpoints.values()}
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True))
        tmp.replace(path)

    def _save_processed_files(self) -> None:
        path = self.data_dir / "processed_files.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self._processed_files, indent=2, sort_keys=True))
        tmp.replace(path)

    def checkpoint(self, source_id: str) -> Optional[Checkpoint]:
        return self._checkpoints.get(source_id)

    # -- registry ---------------------------------------------------------------

    def register_source(self, cfg: SourceConfig) -> None:
        violations = validate_source(cfg)
        if violations:
            raise IngestError(f"invalid source: {violations}")
        if cfg.source_id in self.sources:
            raise IngestError("source exists")
        self.sources[cfg.source_id] = cfg
        self.failures.setdefault(cfg.source_id, 0)

    def list_sources(self) -> list[SourceConfig]:
        return [self.sources[k] for k in sorted(self.sources)]

    def source_health(self, source_id: str) -> str:
        return "degraded" if self.failures.get(source_id, 0) >= DEGRADED_AFTER_FAILURES else "ok"

    def attach_engine(self, feed: Callable[[SecurityEvent], None]) -> None:
        """Newly stored events flow into the correlation engine's feed."""
        self._engine_feed = feed

    # -- shared pipeline -----------------------------------------------------------

    def _process_records(self, records: Iterable[RawRecord]) -> IngestReport:
        report = IngestReport()
        events: list[SecurityEvent] = []
        stix = []
        for rec in records:
            report.records += 1
            out = self.converter.convert(rec)
            events.extend(out.events)
            stix.extend(out.stix_objects)
            report.rejects += len(out.rejects)
            for rng, reason in out.rejects:
                logger.debug("reject from %s %s: %s", rec.source_id, rng, reason)
        report.fetched = len(events) + report.rejects
        fresh = [ev for ev in events if not self.store.has_event(ev.event_id)]
        stored = self.store.append_events(fresh) if fresh else 0
        report.stored = stored
        report.duplicates = len(events) - stored
        if stix:
            self.store.append_stix(stix)
        self._mirror_external_alerts(events)
        self._observe_assets(events)
        if self._engine_feed is not None:
            seen: set[str] = set()
            for ev in fresh:
                if ev.event_id not in seen:
                    seen.add(ev.event_id)
                    self._engine_feed(ev)
        return report

    def _mirror_external_alerts(self, events: Iterable[SecurityEvent]) -> None:
        mirrors = [
            AlertRecord(
                alert_id="",
                ts=ev.ts,
                asset_id=ev.asset_id,
                rule_id=EXTERNAL_RULE_ID,
                severity=ev.severity,
                message=ev.title,
                contributing_event_ids=[ev.event_id],
            ).with_id()
            for ev in events
            if ev.category == "alert"
        ]
        if mirrors:
            self.store.append_alerts(mirrors)

    def _observe_assets(self, events: Iterable[SecurityEvent]) -> None:
        observations: dict[str, Asset] = {}
        for ev in events:
            if not ev.asset_id:
                continue
            kind = ASSET_KIND_BY_SOURCE.get(ev.source_kind, "host")
            cur = observations.get(ev.asset_id)
            if cur is None:
                observations[ev.asset_id] = Asset(ev.asset_id, kind, ev.asset_id, ev.ts, ev.ts)
            else:
                cur.first_seen = min(cur.first_seen, ev.ts)
                cur.last_seen = max(cur.last_seen, ev.ts)
        if observations:
            self.store.upsert_assets(observations.values())

    # -- poll mode ---------------------------------------------------------------------

    def poll_once(self, source_id: str) -> IngestReport:
        cfg = self.sources.get(source_id)
        if cfg is None or cfg.mode != "poll":
            raise IngestError(f"unknown poll source {source_id!r}")
        position = self._checkpoints.get(source_id, Checkpoint(source_id, "", 0)).position
        report = IngestReport()
        while True:
            try:
                resp = self.http.get(cfg.endpoint, params={"since": position, "limit": POLL_PAGE_LIMIT})
                resp.raise_for_status()
            except httpx.HTTPError as exc:
                self.failures[source_id] = self.failures.get(source_id, 0) + 1
                logger.warning("poll failure for %s (%d consecutive): %s", source_id, self.failures[source_id], exc)
                return report
            lines = [line for line in resp.text.splitlines() if line.strip()]
            if not lines:
                break
            records = [decode_raw_record(line) for line in lines]
            batch = self._process_records(records)
            report.add(batch)
            next_position = resp.headers.get("x-next-position", position)
            self._save_checkpoint(Checkpoint(source_id, next_position, self.clock()))
            position = next_position
        self.failures[source_id] = 0
        self._last_poll[source_id] = self.clock()
        return report

    def poll_due_sources(self) -> dict[str, IngestReport]:
        """Poll every poll-mode source whose interval has elapsed."""
        now = self.clock()
        reports = {}
        for cfg in self.list_sources():
            if cfg.mode != "poll":
                continue
            last = self._last_poll.get(cfg.source_id, 0)
            if now - last >= cfg.poll_interval_ms:
                reports[cfg.source_id] = self.poll_once(cfg.source_id)
        return reports

    # -- batch mode -----------------------------------------------------------------------

    def load_batch_file(self, source_id: str, path: "str | Path") -> IngestReport:
        cfg = self.sources.get(source_id)
        if cfg is None:
            raise IngestError(f"unknown source {source_id!r}")
        data = Path(path).read_bytes()
        digest = hashlib.sha256(data).hexdigest()
        lines = [line for line in data.decode("utf-8").splitlines() if line.strip()]
        records = [decode_raw_record(line) for line in lines]
        report = self._process_records(records)
        self._processed_files[digest] = {
            "path": str(path),
            "source_id": source_id,
            "records": len(records),
            "loaded_at": self.clock(),
        }
        self._save_processed_files()
        self._save_checkpoint(Checkpoint(source_id, f"file:{digest}", self.clock()))
        return report

    def is_file_processed(self, path: "str | Path") -> bool:
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        return digest in self._processed_files

    # -- stream mode ------------------------------------------------------------------------

    def consume_stream(self, source_id: str, max_frames: Optional[int] = None) -> IngestReport:
        """Consume frames after the checkpoint; resumable and duplicate-safe.

        Returns when the topic is exhausted (or max_frames processed); a
        long-running deployment calls this in a loop.
        """
        cfg = self.sources.get(source_id)
        if cfg is None or cfg.mode != "stream":
            raise IngestError(f"unknown stream source {source_id!r}")
        if self.broker is None:
            raise IngestError("no broker attached")
        cp = self._checkpoints.get(source_id)
        from_seq = int(cp.position) if cp and cp.position else 0
        report = IngestReport()
        processed = 0
        for seq, frame in self.broker.subscribe(cfg.endpoint, from_seq):
            if seq <= from_seq:
                continue  # simulator re-delivery of an already-checkpointed frame
            try:
                payload = frame_decode(frame)
                rec = decode_raw_record(payload.decode("utf-8"))
            except (ValueError, KeyError, UnicodeDecodeError) as exc:
                logger.warning("malformed frame %d on %s: %s", seq, cfg.endpoint, exc)
                report.rejects += 1
                report.fetched += 1
                self._save_checkpoint(Checkpoint(source_id, str(seq), self.clock()))
                from_seq = seq
                continue
            batch = self._process_records([rec])
            report.add(batch)
            self._save_checkpoint(Checkpoint(source_id, str(seq), self.clock()))
            from_seq = seq
            processed += 1
            if max_frames is not None and processed >= max_frames:
                break
        return report

    # -- run everything once (CLI) ---------------------------------------------------------

    def run_all_once(self) -> dict[str, IngestReport]:
        reports: dict[str, IngestReport] = {}
        for cfg in self.list_sources():
            if cfg.mode == "poll":
                reports[cfg.source_id] = self.poll_once(cfg.source_id)
            elif cfg.mode == "batch":
                target = Path(cfg.endpoint)
                report = IngestReport()
                paths = sorted(target.glob("*.ndjson")) if target.is_dir() else [target]
                for p in paths:
                    if p.exists():
                        report.add(self.load_batch_file(cfg.source_id, p))
                reports[cfg.source_id] = report
            elif cfg.mode == "stream":
                reports[cfg.source_id] = self.consume_stream(cfg.source_id)
        return reports
