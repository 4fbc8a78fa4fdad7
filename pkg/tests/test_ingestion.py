from __future__ import annotations

import json
import random

import httpx
import pytest

from huntdeck.converters import RawRecord, encode_raw_record
from huntdeck.ingestion import (
    BrokerSim,
    Checkpoint,
    IngestError,
    IngestionService,
    SourceConfig,
    frame_encode,
)
from huntdeck.model import EventFilter
from huntdeck.store import EventStore

WIDE = EventFilter(time_from=1, time_to=10**15)


def siem_record(i, ts=None):
    doc = {"ts": ts or (1_000_000 + i * 1000), "asset_id": f"h{i % 3}", "rule": "R-1",
           "severity": "low", "message": f"upstream alert {i}"}
    return encode_raw_record(RawRecord("siem-1", 500, json.dumps(doc).encode(), "siem_alert_json"))


class PagedUpstream:
    """Fake poll endpoint: integer positions, NDJSON pages, X-Next-Position."""

    def __init__(self):
        self.lines: list[str] = []
        self.fail_next = 0

    def handler(self, request: httpx.Request) -> httpx.Response:
        if self.fail_next > 0:
            self.fail_next -= 1
            return httpx.Response(503, text="unavailable")
        since = request.url.params.get("since") or "0"
        limit = int(request.url.params.get("limit"))
        start = int(since) if since else 0
        chunk = self.lines[start: start + limit]
        return httpx.Response(
            200,
            text="".join(line + "\n" for line in chunk),
            headers={"X-Next-Position": str(start + len(chunk))},
        )


def make_service(tmp_path, upstream=None, broker=None, name="svc"):
    store = EventStore(tmp_path / f"{name}-store", clock=lambda: 10**14)
    client = httpx.Client(transport=httpx.MockTransport(upstream.handler)) if upstream else None
    svc = IngestionService(store, tmp_path / f"{name}-ingest", http_client=client, broker=broker,
                           clock=lambda: 10**14)
    return store, svc


def poll_cfg(endpoint="http://upstream/events"):
    return SourceConfig("siem-1", "poll", "siem_alert_json", endpoint, poll_interval_ms=60_000)


def test_register_source_rules(tmp_path):
    _, svc = make_service(tmp_path)
    svc.register_source(poll_cfg())
    assert [c.source_id for c in svc.list_sources()] == ["siem-1"]
    with pytest.raises(IngestError, match="source exists"):
        svc.register_source(poll_cfg())
    bad = SourceConfig("x", "poll", "siem_alert_json", "http://u", poll_interval_ms=0)
    with pytest.raises(IngestError, match="invalid interval"):
        svc.register_source(bad)


def test_poll_twice_no_new_data(tmp_path):
    upstream = PagedUpstream()
    upstream.lines = [siem_record(i) for i in range(10)]
    store, svc = make_service(tmp_path, upstream)
    svc.register_source(poll_cfg())
    r1 = svc.poll_once("siem-1")
    assert (r1.stored, r1.duplicates, r1.rejects) == (10, 0, 0)
    assert r1.fetched == r1.stored + r1.duplicates + r1.rejects
    r2 = svc.poll_once("siem-1")
    assert (r2.fetched, r2.stored) == (0, 0)
    assert store.event_count() == 10


def test_upstream_replays_same_records(tmp_path):
    upstream = PagedUpstream()
    upstream.lines = [siem_record(i) for i in range(10)]
    store, svc = make_service(tmp_path, upstream)
    svc.register_source(poll_cfg())
    assert svc.poll_once("siem-1").stored == 10
    # upstream forgets our position: same 10 records appear again as new lines
    upstream.lines = upstream.lines + upstream.lines
    r2 = svc.poll_once("siem-1")
    assert (r2.stored, r2.duplicates) == (0, 10)
    assert store.event_count() == 10


def test_crash_between_append_and_checkpoint(tmp_path, monkeypatch):
    upstream = PagedUpstream()
    upstream.lines = [siem_record(i) for i in range(10)]
    store, svc = make_service(tmp_path, upstream)
    svc.register_source(poll_cfg())

    real_save = svc._save_checkpoint

    def explode(cp):
        raise RuntimeError("injected crash")

    monkeypatch.setattr(svc, "_save_checkpoint", explode)
    with pytest.raises(RuntimeError, match="injected crash"):
        svc.poll_once("siem-1")
    assert store.event_count() == 10  # append landed
    assert svc.checkpoint("siem-1") is None  # checkpoint did not
    monkeypatch.setattr(svc, "_save_checkpoint", real_save)
    r = svc.poll_once("siem-1")
    assert (r.stored, r.duplicates) == (0, 10)
    assert store.event_count() == 10
    assert len(store.event_id_set()) == 10


def test_unreachable_endpoint_records_failure(tmp_path):
    upstream = PagedUpstream()
    upstream.lines = [siem_record(0)]
    upstream.fail_next = 5
    store, svc = make_service(tmp_path, upstream)
    svc.register_source(poll_cfg())
    for i in range(3):
        report = svc.poll_once("siem-1")
        assert report.fetched == 0
    assert svc.source_health("siem-1") == "degraded"
    assert svc.checkpoint("siem-1") is None
    upstream.fail_next = 0
    assert svc.poll_once("siem-1").stored == 1
    assert svc.source_health("siem-1") == "ok"


def test_poll_due_sources_uses_clock(tmp_path):
    upstream = PagedUpstream()
    upstream.lines = [siem_record(i) for i in range(3)]
    store = EventStore(tmp_path / "s", clock=lambda: 10**14)
    now = {"t": 1_000_000}
    svc = IngestionService(
        store, tmp_path / "i",
        http_client=httpx.Client(transport=httpx.MockTransport(upstream.handler)),
        clock=lambda: now["t"],
    )
    svc.register_source(poll_cfg())
    assert set(svc.poll_due_sources()) == {"siem-1"}
    assert svc.poll_due_sources() == {}  # interval not yet elapsed
    now["t"] += 60_001
    assert set(svc.poll_due_sources()) == {"siem-1"}


def test_batch_file_idempotent(tmp_path):
    store, svc = make_service(tmp_path)
    svc.register_source(SourceConfig("batch-1", "batch", "siem_alert_json", str(tmp_path / "in")))
    path = tmp_path / "in" / "dump.ndjson"
    path.parent.mkdir()
    path.write_text("".join(siem_record(i) + "\n" for i in range(1000)))
    r1 = svc.load_batch_file("batch-1", path)
    assert r1.stored == 1000
    assert r1.stored == len(path.read_text().splitlines())  # line-count oracle
    assert svc.is_file_processed(path)
    r2 = svc.load_batch_file("batch-1", path)
    assert (r2.stored, r2.duplicates) == (0, 1000)
    assert store.event_count() == 1000


def test_batch_empty_file(tmp_path):
    store, svc = make_service(tmp_path)
    svc.register_source(SourceConfig("batch-1", "batch", "siem_alert_json", str(tmp_path)))
    path = tmp_path / "empty.ndjson"
    path.write_text("")
    r = svc.load_batch_file("batch-1", path)
    assert (r.fetched, r.stored, r.duplicates, r.rejects) == (0, 0, 0, 0)


def test_stream_double_delivery(tmp_path):
    broker = BrokerSim(duplicate_every=1)  # every frame delivered twice
    store, svc = make_service(tmp_path, broker=broker)
    svc.register_source(SourceConfig("stream-1", "stream", "siem_alert_json", "topic-a"))
    for i in range(100):
        broker.publish("topic-a", siem_record(i).encode())
    report = svc.consume_stream("stream-1")
    assert store.event_count() == 100
    assert report.stored == 100
    assert report.fetched == report.stored + report.duplicates + report.rejects


def test_stream_kill_restart_equals_uninterrupted(tmp_path):
    records = [siem_record(i) for i in range(60)]

    broker1 = BrokerSim()
    store_a, svc_a = make_service(tmp_path, broker=broker1, name="a")
    svc_a.register_source(SourceConfig("stream-1", "stream", "siem_alert_json", "t"))
    for line in records:
        broker1.publish("t", line.encode())
    svc_a.consume_stream("stream-1")
    uninterrupted = store_a.event_id_set()

    broker2 = BrokerSim()
    store_b, svc_b = make_service(tmp_path, broker=broker2, name="b")
    svc_b.register_source(SourceConfig("stream-1", "stream", "siem_alert_json", "t"))
    for line in records:
        broker2.publish("t", line.encode())
    svc_b.consume_stream("stream-1", max_frames=23)  # "killed" mid-stream
    # restart: new service instance over the same store + ingest state dir
    svc_b2 = IngestionService(store_b, tmp_path / "b-ingest", broker=broker2, clock=lambda: 10**14)
    svc_b2.register_source(SourceConfig("stream-1", "stream", "siem_alert_json", "t"))
    assert svc_b2.checkpoint("stream-1").position == "23"
    svc_b2.consume_stream("stream-1")
    assert store_b.event_id_set() == uninterrupted


def test_stream_malformed_frame_continues(tmp_path):
    broker = BrokerSim()
    store, svc = make_service(tmp_path, broker=broker)
    svc.register_source(SourceConfig("stream-1", "stream", "siem_alert_json", "t"))
    broker.publish("t", siem_record(1).encode())
    broker.publish_corrupt("t", b"\x00\x00")  # short frame
    broker.publish_corrupt("t", frame_encode(b"not json"))
    broker.publish("t", siem_record(2).encode())
    report = svc.consume_stream("stream-1")
    assert report.rejects == 2
    assert store.event_count() == 2


def test_stream_out_of_order_ts_still_visible_by_ts(tmp_path):
    broker = BrokerSim()
    store, svc = make_service(tmp_path, broker=broker)
    svc.register_source(SourceConfig("stream-1", "stream", "siem_alert_json", "t"))
    ts_values = [5_000_000, 1_000_000, 3_000_000]
    for i, ts in enumerate(ts_values):
        broker.publish("t", siem_record(i, ts=ts).encode())
    svc.consume_stream("stream-1")
    page = store.query(WIDE, page_size=10)
    assert [e.ts for e in page.items] == sorted(ts_values)


def test_checkpoint_monotonic_and_persisted(tmp_path):
    broker = BrokerSim()
    store, svc = make_service(tmp_path, broker=broker)
    svc.register_source(SourceConfig("stream-1", "stream", "siem_alert_json", "t"))
    positions = []
    for i in range(5):
        broker.publish("t", siem_record(i).encode())
        svc.consume_stream("stream-1")
        positions.append(int(svc.checkpoint("stream-1").position))
    assert positions == sorted(positions) == [1, 2, 3, 4, 5]
    svc2 = IngestionService(store, tmp_path / "svc-ingest", broker=broker, clock=lambda: 10**14)
    assert svc2.checkpoint("stream-1").position == "5"


def test_replaying_everything_leaves_store_unchanged(tmp_path):
    # idempotency across the whole ingest surface
    upstream = PagedUpstream()
    upstream.lines = [siem_record(i) for i in range(20)]
    broker = BrokerSim(duplicate_every=2)
    store, svc = make_service(tmp_path, upstream, broker=broker)
    svc.register_source(poll_cfg())
    svc.register_source(SourceConfig("stream-1", "stream", "siem_alert_json", "t"))
    batch_path = tmp_path / "batch.ndjson"
    batch_path.write_text("".join(siem_record(100 + i) + "\n" for i in range(20)))
    svc.register_source(SourceConfig("batch-1", "batch", "siem_alert_json", str(batch_path)))
    for i in range(20):
        broker.publish("t", siem_record(200 + i).encode())

    svc.poll_once("siem-1")
    svc.load_batch_file("batch-1", batch_path)
    svc.consume_stream("stream-1")
    baseline = store.event_id_set()
    # replay: fresh ingest state (lost checkpoints), same upstream content
    svc2 = IngestionService(
        store, tmp_path / "fresh-ingest",
        http_client=httpx.Client(transport=httpx.MockTransport(upstream.handler)),
        broker=broker, clock=lambda: 10**14,
    )
    svc2.register_source(poll_cfg())
    svc2.register_source(SourceConfig("stream-1", "stream", "siem_alert_json", "t"))
    svc2.register_source(SourceConfig("batch-1", "batch", "siem_alert_json", str(batch_path)))
    svc2.poll_once("siem-1")
    svc2.load_batch_file("batch-1", batch_path)
    svc2.consume_stream("stream-1")
    assert store.event_id_set() == baseline


def test_upstream_alerts_mirrored_as_external(tmp_path):
    store, svc = make_service(tmp_path)
    svc.register_source(SourceConfig("batch-1", "batch", "siem_alert_json", "x"))
    path = tmp_path / "one.ndjson"
    path.write_text(siem_record(1) + "\n")
    svc.load_batch_file("batch-1", path)
    alerts = store.query_alerts(1, 10**15).items
    assert len(alerts) == 1
    assert alerts[0].rule_id == "external"
    assert alerts[0].message == "upstream alert 1"
    # reload does not duplicate the mirror
    svc.load_batch_file("batch-1", path)
    assert len(store.query_alerts(1, 10**15).items) == 1


def test_assets_observed_from_events(tmp_path):
    store, svc = make_service(tmp_path)
    svc.register_source(SourceConfig("batch-1", "batch", "siem_alert_json", "x"))
    path = tmp_path / "a.ndjson"
    path.write_text("".join(siem_record(i) + "\n" for i in range(6)))
    svc.load_batch_file("batch-1", path)
    assets = store.assets()
    assert {a.asset_id for a in assets} == {"h0", "h1", "h2"}
    assert all(a.kind == "host" and a.first_seen <= a.last_seen for a in assets)
