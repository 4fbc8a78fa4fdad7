from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from huntdeck.converters import (
    FORMAT_HINTS,
    STIX_OBSERVABLE_TYPES,
    Converter,
    RawRecord,
    UnsupportedFormatError,
    convert,
    decode_raw_record,
    parse_auth_log,
    parse_honeypot_event,
    parse_metric_csv,
    parse_process_snapshot,
    parse_siem_alert,
    parse_stix_bundle,
    parse_syslog,
    stix_group_for,
)
from huntdeck.model import encode_event, encode_stix_record, validate_event


def load_corpus(fixtures_dir, name):
    lines = (fixtures_dir / "corpora" / f"{name}.ndjson").read_text(encoding="utf-8").splitlines()
    return [decode_raw_record(line) for line in lines]


@pytest.mark.parametrize(
    "name",
    ["auth_log", "syslog", "process_snapshot", "metric_csv", "stix_bundle", "siem_alert_json", "honeypot_json"],
)
def test_golden_corpus(fixtures_dir, name):
    records = load_corpus(fixtures_dir, name)
    assert len(records) >= 50
    event_lines, stix_lines, rejects = [], [], []
    for i, rec in enumerate(records):
        out = convert(rec)
        for ev in out.events:
            assert validate_event(ev) == [], f"invalid event from record {i}"
            event_lines.append(encode_event(ev))
        for rec_stix in out.stix_objects:
            stix_lines.append(encode_stix_record(rec_stix))
        for rng, reason in out.rejects:
            rejects.append([i, list(rng), reason])
    expected_events = (fixtures_dir / "expected" / f"{name}.events.ndjson").read_text(encoding="utf-8")
    assert "".join(line + "\n" for line in event_lines) == expected_events
    expected_rejects = json.loads((fixtures_dir / "expected" / f"{name}.rejects.json").read_text())
    assert rejects == expected_rejects
    stix_path = fixtures_dir / "expected" / f"{name}.stix.ndjson"
    if stix_path.exists():
        assert "".join(line + "\n" for line in stix_lines) == stix_path.read_text(encoding="utf-8")


def test_golden_corpus1_mixed(fixtures_dir):
    lines = (fixtures_dir / "corpus1.ndjson").read_text(encoding="utf-8").splitlines()
    out_lines = []
    for line in lines:
        out = convert(decode_raw_record(line))
        out_lines.extend(encode_event(ev) for ev in out.events)
    expected = (fixtures_dir / "corpus1.expected.ndjson").read_text(encoding="utf-8")
    assert "".join(line + "\n" for line in out_lines) == expected


def test_unknown_format_hint():
    with pytest.raises(UnsupportedFormatError, match="unsupported format"):
        convert(RawRecord("s", 0, b"x", "carrier_pigeon"))


# -- auth log ---------------------------------------------------------------


def test_auth_login_line():
    out = parse_auth_log("2024-01-05T10:00:00Z host1 LOGIN alice s-17\n")
    assert len(out.events) == 1 and not out.rejects
    ev = out.events[0]
    assert ev.category == "session"
    assert ev.asset_id == "host1"
    assert ev.attributes["user"] == "alice"
    assert ev.attributes["session_action"] == "login"
    assert ev.attributes["session_id"] == "s-17"


def test_auth_logout_line():
    out = parse_auth_log("2024-01-05T11:00:00Z host1 LOGOUT alice s-17\n")
    assert out.events[0].attributes["session_action"] == "logout"


def test_auth_unknown_verb_rejected():
    out = parse_auth_log("2024-01-05T10:00:00Z host1 LOCK alice s-17\n")
    assert not out.events
    assert out.rejects[0][1] == "unknown session verb"


def test_mixed_valid_and_garbage_lines():
    text = (
        "2024-01-05T10:00:00Z host1 sshd: ok one\n"
        "2024-01-05T10:00:01Z host1 sshd: ok two\n"
        "complete garbage\n"
        "2024-01-05T10:00:02Z host1 sshd: ok three\n"
    )
    out = parse_syslog(text)
    assert len(out.events) == 3
    assert len(out.rejects) == 1


# -- process snapshot ---------------------------------------------------------


def test_snapshot_zero_processes():
    out = parse_process_snapshot(json.dumps({"host": "h1", "ts": 5, "processes": []}))
    assert not out.events and not out.rejects


def test_snapshot_two_processes_share_ts_and_asset():
    doc = {
        "host": "h1",
        "ts": 1700000000000,
        "processes": [{"pid": 1, "name": "init"}, {"pid": 2, "name": "kthreadd"}],
    }
    out = parse_process_snapshot(json.dumps(doc))
    assert len(out.events) == 2
    assert {e.ts for e in out.events} == {1700000000000}
    assert {e.asset_id for e in out.events} == {"h1"}


def test_snapshot_identical_duplicate_collapses():
    entry = {"pid": 9, "name": "sshd", "user": "root", "cpu_pct": 1.5}
    doc = {"host": "h1", "ts": 77, "processes": [entry, dict(entry)]}
    out = parse_process_snapshot(json.dumps(doc))
    assert len(out.events) == 1
    # same pid but different name stays distinct via content address
    doc2 = {"host": "h1", "ts": 77, "processes": [entry, {**entry, "name": "sshd2"}]}
    out2 = parse_process_snapshot(json.dumps(doc2))
    assert len(out2.events) == 2
    assert out2.events[0].event_id != out2.events[1].event_id


def test_snapshot_missing_host_rejects_document():
    out = parse_process_snapshot(json.dumps({"ts": 5, "processes": [{"pid": 1, "name": "x"}]}))
    assert not out.events
    assert out.rejects[0][1] == "missing host"


# -- metric csv ----------------------------------------------------------------


def test_metric_row():
    out = parse_metric_csv("ts,host,metric_name,value\n1700000000000,host1,cpu_pct,37.5\n")
    ev = out.events[0]
    assert ev.category == "metric"
    assert ev.attributes["value"] == 37.5
    assert ev.title == "cpu_pct=37.5"


def test_metric_header_only():
    out = parse_metric_csv("ts,host,metric_name,value\n")
    assert not out.events and not out.rejects


def test_metric_nan_rejected():
    out = parse_metric_csv("ts,host,metric_name,value\n1,host1,cpu,NaN\n")
    assert out.rejects[0][1] == "non-finite metric value"


# -- stix ----------------------------------------------------------------------


def bundle(*objects) -> str:
    return json.dumps({"type": "bundle", "id": "bundle--9c479fd5-9036-4a31-9cb4-2f3b1dd3b1f5", "objects": list(objects)})


def test_empty_bundle():
    out = parse_stix_bundle(bundle())
    assert not out.events and not out.stix_objects and not out.rejects


def test_ipv4_observable():
    out = parse_stix_bundle(
        bundle({"type": "ipv4-addr", "id": "ipv4-addr--9c479fd5-9036-4a31-9cb4-2f3b1dd3b1f5", "value": "10.0.0.7", "created": "2024-01-05T10:00:00Z"})
    )
    assert len(out.stix_objects) == 1 and len(out.events) == 1
    assert out.stix_objects[0].group == "cyber_observable"
    ev = out.events[0]
    assert ev.category == "observable"
    assert ev.title == "ipv4-addr 10.0.0.7"
    assert ev.source_kind == "cti"
    assert ev.asset_id == ""


def test_relationship_object():
    out = parse_stix_bundle(
        bundle(
            {
                "type": "relationship",
                "id": "relationship--9c479fd5-9036-4a31-9cb4-2f3b1dd3b1f5",
                "relationship_type": "indicates",
                "source_ref": "indicator--9c479fd5-9036-4a31-9cb4-2f3b1dd3b1f5",
                "target_ref": "malware--9c479fd5-9036-4a31-9cb4-2f3b1dd3b1f5",
                "created": "2024-01-05T10:00:00Z",
            }
        )
    )
    assert out.stix_objects[0].group == "relationship"
    assert out.events[0].category == "relationship"


def test_object_missing_id_rejected():
    out = parse_stix_bundle(bundle({"type": "ipv4-addr", "value": "1.2.3.4", "created": "2024-01-05T10:00:00Z"}))
    assert not out.events
    assert out.rejects[0][1] == "missing stix id"


def test_non_bundle_document_rejected_whole():
    out = parse_stix_bundle(json.dumps({"type": "report", "id": "report--x"}))
    assert not out.events and not out.stix_objects
    assert out.rejects == [((0, len(json.dumps({"type": "report", "id": "report--x"}))), "not a stix bundle")]


def test_raw_document_is_verbatim_slice_of_pretty_bundle():
    obj = {
        "type": "indicator",
        "id": "indicator--9c479fd5-9036-4a31-9cb4-2f3b1dd3b1f5",
        "name": "beacon watch",
        "pattern": "[ipv4-addr:value = '10.0.0.7']",
        "created": "2024-01-05T10:00:00Z",
    }
    doc = json.dumps({"type": "bundle", "id": "bundle--9c479fd5-9036-4a31-9cb4-2f3b1dd3b1f5", "objects": [obj]}, indent=2)
    out = parse_stix_bundle(doc)
    raw = out.stix_objects[0].raw_document
    assert raw in doc
    assert json.loads(raw) == obj


def test_stix_group_table():
    # all 18 published cyber-observable types classify as observables
    assert len(STIX_OBSERVABLE_TYPES) == 18
    for t in STIX_OBSERVABLE_TYPES:
        assert stix_group_for(t) == "cyber_observable"
    for t in ("relationship", "sighting"):
        assert stix_group_for(t) == "relationship"
    for t in ("indicator", "malware", "attack-pattern", "threat-actor", "report", "identity", "tool", "campaign"):
        assert stix_group_for(t) == "domain_object"


# -- siem / honeypot -----------------------------------------------------------


def test_honeypot_severity_table():
    out = parse_honeypot_event(json.dumps({"ts": 5, "decoy_id": "hp-1", "src_ip": "10.0.0.7", "action": "ssh_attempt"}))
    ev = out.events[0]
    assert ev.severity == 6
    assert ev.asset_id == "hp-1"
    assert ev.source_kind == "deception"


def test_siem_critical_maps_to_9():
    out = parse_siem_alert(json.dumps({"ts": 5, "asset_id": "h", "severity": "critical", "message": "boom"}))
    assert out.events[0].severity == 9


def test_alert_without_ts_rejected():
    out = parse_siem_alert(json.dumps({"asset_id": "h", "severity": "low", "message": "m"}))
    assert not out.events
    assert out.rejects[0][1] == "missing ts"


def test_custom_severity_table():
    conv = Converter(severity_tables={"siem": {"critical": 10}, "deception": {"default": 2}, "cti": {}})
    out = conv.convert(RawRecord("s", 0, json.dumps({"ts": 5, "severity": "critical", "message": "m"}).encode(), "siem_alert_json"))
    assert out.events[0].severity == 10


# -- totality / determinism properties ------------------------------------------


@given(payload=st.binary(max_size=400), hint=st.sampled_from(sorted(FORMAT_HINTS)))
@settings(max_examples=300, deadline=None)
def test_convert_is_total_and_emits_valid_events(payload, hint):
    out = convert(RawRecord("fuzz", 123, payload, hint))
    for ev in out.events:
        assert validate_event(ev) == []
        assert ev.ingested_at == 123
    for _, reason in out.rejects:
        assert reason


@given(payload=st.binary(max_size=300), hint=st.sampled_from(sorted(FORMAT_HINTS)))
@settings(max_examples=150, deadline=None)
def test_convert_deterministic_and_received_at_only_sets_ingested_at(payload, hint):
    a = convert(RawRecord("s", 1, payload, hint))
    b = convert(RawRecord("s", 2, payload, hint))
    assert [e.event_id for e in a.events] == [e.event_id for e in b.events]
    assert a.rejects == b.rejects
    assert all(e.ingested_at == 1 for e in a.events)
    assert all(e.ingested_at == 2 for e in b.events)


def test_non_blank_line_formats_always_produce_something():
    for hint in ("auth_log", "syslog"):
        out = convert(RawRecord("s", 0, b"garbage line\n", hint))
        assert len(out.events) + len(out.rejects) >= 1
