#!/usr/bin/env python3
"""Generate the fixture corpora and their golden expected outputs.

Run once; outputs under fixtures/ are committed. This script deliberately
does NOT import the huntdeck package: expected events are assembled by
hand-tracing the grammars in docs/formats.md and hand-building the canonical
byte layout from docs/canonical-format.md, so the goldens are an independent
oracle for the converter and serialization code paths.
"""

from __future__ import annotations

import base64
import hashlib
import json
import random
from datetime import datetime, timezone
from pathlib import Path

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

BASE_TS = 1704448800000  # 2024-01-05T10:00:00Z


def epoch_ms(iso: str) -> int:
    s = iso[:-1] + "+00:00" if iso.endswith("Z") else iso
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def iso_of(ms: int) -> str:
    dt = datetime.fromtimestamp(ms / 1000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ") if ms % 1000 == 0 else dt.strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"


# --- canonical byte layout, hand-assembled ---------------------------------


def canon_str(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\b":
            out.append("\\b")
        elif ch == "\f":
            out.append("\\f")
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def canon_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return canon_str(v)
    if v is None:
        return "null"
    raise TypeError(f"non-scalar attribute value {v!r}")


def canon_attrs(attrs: dict) -> str:
    return "{" + ",".join(f"{canon_str(k)}:{canon_value(attrs[k])}" for k in sorted(attrs)) + "}"


def event_id_for(ts: int, source_id: str, category: str, title: str, attrs: dict) -> str:
    payload = '{"v":1,"ts":%d,"source_id":%s,"category":%s,"title":%s,"attributes":%s}' % (
        ts,
        canon_str(source_id),
        canon_str(category),
        canon_str(title),
        canon_attrs(attrs),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def event_line(
    ts: int,
    ingested_at: int,
    source_kind: str,
    source_id: str,
    asset_id: str,
    category: str,
    severity: int,
    title: str,
    attrs: dict,
    raw_ref: str | None = None,
) -> str:
    eid = event_id_for(ts, source_id, category, title, attrs)
    return (
        '{"v":1,"event_id":%s,"ts":%d,"ingested_at":%d,"source_kind":%s,"source_id":%s,'
        '"asset_id":%s,"category":%s,"severity":%d,"title":%s,"attributes":%s,"raw_ref":%s}'
        % (
            canon_str(eid),
            ts,
            ingested_at,
            canon_str(source_kind),
            canon_str(source_id),
            canon_str(asset_id),
            canon_str(category),
            severity,
            canon_str(title),
            canon_attrs(attrs),
            canon_str(raw_ref) if raw_ref is not None else "null",
        )
    )


def stix_line(stix_id: str, stix_type: str, group: str, created: int, raw_document: str, summary: dict) -> str:
    summary_s = "{" + ",".join(f"{canon_str(k)}:{canon_value(v)}" for k, v in summary.items()) + "}"
    return (
        '{"v":1,"stix_id":%s,"stix_type":%s,"group":%s,"created":%d,"raw_document":%s,"summary":%s}'
        % (canon_str(stix_id), canon_str(stix_type), canon_str(group), created, canon_str(raw_document), summary_s)
    )


def raw_record_line(source_id: str, received_at: int, format_hint: str, payload: bytes) -> str:
    return json.dumps(
        {
            "source_id": source_id,
            "received_at": received_at,
            "format_hint": format_hint,
            "payload_b64": base64.b64encode(payload).decode("ascii"),
        },
        separators=(",", ":"),
    )


# --- per-format corpora ------------------------------------------------------

HOSTS = ["host01", "host02", "host03", "host04", "host05"]
USERS = ["alice", "bob", "carol", "dave", "eve"]


class Rec:
    """One RawRecord plus its hand-traced expected outputs."""

    def __init__(self, source_id, received_at, format_hint, payload: bytes):
        self.source_id = source_id
        self.received_at = received_at
        self.format_hint = format_hint
        self.payload = payload
        self.events: list[str] = []
        self.stix: list[str] = []
        self.rejects: list[list] = []  # [[start, end], reason]

    def line(self) -> str:
        return raw_record_line(self.source_id, self.received_at, self.format_hint, self.payload)


def line_spans(payload: bytes) -> list[tuple[int, int]]:
    spans, start = [], 0
    for chunk in payload.split(b"\n"):
        spans.append((start, start + len(chunk)))
        start += len(chunk) + 1
    return spans


def gen_auth_log(rng: random.Random) -> list[Rec]:
    recs = []
    session_n = 100
    for i in range(50):
        received = BASE_TS + 3_600_000 + i * 1000
        lines, traced = [], []
        for j in range(rng.randint(1, 3)):
            ts = BASE_TS + i * 60_000 + j * 7_000
            host = rng.choice(HOSTS)
            user = rng.choice(USERS)
            roll = rng.random()
            if roll < 0.78:
                verb = rng.choice(["LOGIN", "LOGOUT"])
                sid = f"s-{session_n}"
                session_n += 1
                lines.append(f"{iso_of(ts)} {host} {verb} {user} {sid}")
                traced.append(("ok", ts, host, verb.lower(), user, sid))
            elif roll < 0.86:
                lines.append(f"{iso_of(ts)} {host} LOCK {user} s-x")
                traced.append(("reject", "unknown session verb"))
            elif roll < 0.93:
                lines.append(f"{iso_of(ts)} {host} LOGIN {user}")
                traced.append(("reject", "malformed auth line"))
            else:
                lines.append(f"not-a-time {host} LOGIN {user} s-y")
                traced.append(("reject", "bad timestamp"))
        payload = ("\n".join(lines) + "\n").encode()
        rec = Rec(f"auth-{HOSTS[i % len(HOSTS)]}", received, "auth_log", payload)
        spans = line_spans(payload)
        for k, t in enumerate(traced):
            if t[0] == "ok":
                _, ts, host, action, user, sid = t
                attrs = {"user": user, "session_action": action, "session_id": sid, "host": host}
                rec.events.append(
                    event_line(ts, received, "log", rec.source_id, host, "session", 0, f"{user} {action}", attrs)
                )
            else:
                rec.rejects.append([list(spans[k]), t[1]])
        recs.append(rec)
    return recs


def gen_syslog(rng: random.Random) -> list[Rec]:
    programs = [("sshd", True), ("cron", False), ("kernel", False), ("sudo", True), ("systemd", False)]
    messages = [
        "Failed password for invalid user admin from 203.0.113.9 port 52114",
        "Accepted publickey for alice from 198.51.100.4",
        "session opened for user root",
        "Out of memory: kill process",
        "pam_unix(sshd:auth): authentication failure",
        "Connection closed by 192.0.2.77",
    ]
    recs = []
    for i in range(50):
        received = BASE_TS + 7_200_000 + i * 900
        lines, traced = [], []
        for j in range(rng.randint(2, 4)):
            ts = BASE_TS + i * 45_000 + j * 5_000
            host = rng.choice(HOSTS)
            prog, has_pid = rng.choice(programs)
            msg = rng.choice(messages)
            roll = rng.random()
            if roll < 0.88:
                if has_pid:
                    pid = rng.randint(100, 9999)
                    lines.append(f"{iso_of(ts)} {host} {prog}[{pid}]: {msg}")
                    traced.append(("ok", ts, host, prog, pid, msg))
                else:
                    lines.append(f"{iso_of(ts)} {host} {prog}: {msg}")
                    traced.append(("ok", ts, host, prog, None, msg))
            elif roll < 0.95:
                lines.append(f"{iso_of(ts)} {host} {prog} {msg}")
                traced.append(("reject", "malformed syslog line"))
            else:
                lines.append(f"yesterday {host} {prog}: {msg}")
                traced.append(("reject", "bad timestamp"))
        payload = ("\n".join(lines) + "\n").encode()
        rec = Rec("syslog-gw", received, "syslog", payload)
        spans = line_spans(payload)
        for k, t in enumerate(traced):
            if t[0] == "ok":
                _, ts, host, prog, pid, msg = t
                attrs = {"host": host, "program": prog}
                if pid is not None:
                    attrs["pid"] = pid
                rec.events.append(event_line(ts, received, "log", rec.source_id, host, "raw", 0, msg, attrs))
            else:
                rec.rejects.append([list(spans[k]), t[1]])
        recs.append(rec)
    return recs


def gen_process_snapshot(rng: random.Random) -> list[Rec]:
    names = ["sshd", "nginx", "postgres", "python3", "chrome", "svchost.exe"]
    recs = []
    for i in range(50):
        received = BASE_TS + 10_800_000 + i * 1100
        ts = BASE_TS + i * 30_000
        host = HOSTS[i % len(HOSTS)]
        n = rng.randint(0, 6)
        procs, traced = [], []
        for _ in range(n):
            pid = rng.randint(1, 65535)
            name = rng.choice(names)
            user = rng.choice(USERS + ["root"])
            cpu = round(rng.random() * 90, 1)
            procs.append({"pid": pid, "name": name, "user": user, "cpu_pct": cpu})
            traced.append(("ok", pid, name, user, cpu))
        doc = {"host": host, "ts": ts, "processes": procs}
        if i == 7:
            doc.pop("host")
        elif i == 19:
            doc.pop("ts")
        elif i == 23 and procs:
            procs.append(dict(procs[0]))  # fully identical duplicate collapses
            traced.append(("dup",))
        elif i == 31:
            procs.append({"name": "ghost"})  # missing pid
            traced.append(("badentry",))
        payload = json.dumps(doc, separators=(",", ":")).encode()
        rec = Rec("procmon-1", received, "process_snapshot", payload)
        if i == 7:
            rec.rejects.append([[0, len(payload)], "missing host"])
        elif i == 19:
            rec.rejects.append([[0, len(payload)], "missing ts"])
        else:
            seen = set()
            for k, t in enumerate(traced):
                if t[0] == "ok":
                    _, pid, name, user, cpu = t
                    attrs = {"pid": pid, "process_name": name, "host": host, "user": user, "cpu_pct": cpu}
                    eid = event_id_for(ts, rec.source_id, "process", f"{name} (pid {pid})", attrs)
                    if eid in seen:
                        continue
                    seen.add(eid)
                    rec.events.append(
                        event_line(ts, received, "log", rec.source_id, host, "process", 0, f"{name} (pid {pid})", attrs)
                    )
                elif t[0] == "dup":
                    pass  # collapsed by identical event id
                else:
                    rec.rejects.append([[len(procs) - 1, len(procs)], "malformed process entry"])
        recs.append(rec)
    return recs


def gen_metric_csv(rng: random.Random) -> list[Rec]:
    metrics = ["cpu_pct", "mem_pct", "disk_io", "net_rx_kbps"]
    recs = []
    for i in range(50):
        received = BASE_TS + 14_400_000 + i * 1300
        rows, traced = ["ts,host,metric_name,value"], []
        for j in range(rng.randint(1, 5)):
            ts = BASE_TS + i * 20_000 + j * 4_000
            host = rng.choice(HOSTS)
            metric = rng.choice(metrics)
            roll = rng.random()
            if roll < 0.85:
                value_text = f"{round(rng.random() * 100, 1)}"
                rows.append(f"{ts},{host},{metric},{value_text}")
                traced.append(("ok", ts, host, metric, value_text))
            elif roll < 0.9:
                rows.append(f"{ts},{host},{metric},NaN")
                traced.append(("reject", "non-finite metric value"))
            elif roll < 0.95:
                rows.append(f"{ts},{host},{metric},n/a")
                traced.append(("reject", "non-numeric metric value"))
            else:
                rows.append(f"{ts},{host},{metric}")
                traced.append(("reject", "malformed csv row"))
        if i == 11:
            rows, traced = ["time,host,name,value", "1,2,3,4"], [("header",)]
        payload = ("\n".join(rows) + "\n").encode()
        rec = Rec("metrics-1", received, "metric_csv", payload)
        spans = line_spans(payload)
        if traced and traced[0][0] == "header":
            rec.rejects.append([[0, len(payload)], "bad csv header"])
        else:
            for k, t in enumerate(traced):
                if t[0] == "ok":
                    _, ts, host, metric, value_text = t
                    attrs = {"metric_name": metric, "value": float(value_text), "host": host}
                    rec.events.append(
                        event_line(ts, received, "log", rec.source_id, host, "metric", 0, f"{metric}={value_text}", attrs)
                    )
                else:
                    rec.rejects.append([list(spans[k + 1]), t[1]])
        recs.append(rec)
    return recs


def gen_stix(rng: random.Random) -> list[Rec]:
    recs = []
    uuid_n = 1000

    def mk_uuid() -> str:
        nonlocal uuid_n
        uuid_n += 1
        h = hashlib.md5(str(uuid_n).encode()).hexdigest()
        return f"{h[0:8]}-{h[8:12]}-4{h[13:16]}-8{h[17:20]}-{h[20:32]}"

    for i in range(55):
        received = BASE_TS + 18_000_000 + i * 1700
        created_ms = BASE_TS + i * 90_000
        created_iso = iso_of(created_ms)
        objects: list[tuple[str, dict | None, str | None]] = []  # (obj_text, traced obj, reject reason)
        n_obj = rng.randint(1, 3)
        pretty = i % 9 == 4  # some bundles pretty-printed to pin verbatim slicing
        for j in range(n_obj):
            kind = rng.choice(["ipv4", "domain", "file", "indicator", "malware", "relationship", "sighting"])
            cms = created_ms + j * 1000
            ciso = iso_of(cms)
            if i == 13 and j == 0:
                obj = {"type": "ipv4-addr", "value": "203.0.113.50"}  # missing id
                objects.append((dumps_obj(obj, pretty), None, "missing stix id"))
                continue
            if i == 27 and j == 0:
                obj = {"type": "ipv4-addr", "id": "ipv4-addr--not-a-uuid", "value": "203.0.113.51"}
                objects.append((dumps_obj(obj, pretty), None, "bad stix id"))
                continue
            if i == 41 and j == 0:
                obj = {"type": "ipv4-addr", "id": f"ipv4-addr--{mk_uuid()}", "value": "203.0.113.52"}
                objects.append((dumps_obj(obj, pretty), None, "missing timestamp"))
                continue
            if kind == "ipv4":
                value = f"198.51.100.{rng.randint(1, 250)}"
                obj = {"type": "ipv4-addr", "id": f"ipv4-addr--{mk_uuid()}", "value": value, "created": ciso}
            elif kind == "domain":
                value = f"bad{rng.randint(1, 99)}.example.net"
                obj = {"type": "domain-name", "id": f"domain-name--{mk_uuid()}", "value": value, "created": ciso}
            elif kind == "file":
                value = f"payload{rng.randint(1, 99)}.bin"
                obj = {"type": "file", "id": f"file--{mk_uuid()}", "name": value, "created": ciso}
            elif kind == "indicator":
                value = f"Watch for C2 beacon {rng.randint(1, 99)}"
                obj = {
                    "type": "indicator",
                    "id": f"indicator--{mk_uuid()}",
                    "name": value,
                    "pattern": f"[ipv4-addr:value = '198.51.100.{rng.randint(1, 250)}']",
                    "pattern_type": "stix",
                    "created": ciso,
                }
            elif kind == "malware":
                value = f"TrickLoader{rng.randint(1, 20)}"
                obj = {"type": "malware", "id": f"malware--{mk_uuid()}", "name": value, "is_family": True, "created": ciso}
            elif kind == "relationship":
                obj = {
                    "type": "relationship",
                    "id": f"relationship--{mk_uuid()}",
                    "relationship_type": "indicates",
                    "source_ref": f"indicator--{mk_uuid()}",
                    "target_ref": f"malware--{mk_uuid()}",
                    "created": ciso,
                }
            else:
                obj = {
                    "type": "sighting",
                    "id": f"sighting--{mk_uuid()}",
                    "sighting_of_ref": f"indicator--{mk_uuid()}",
                    "created": ciso,
                }
            objects.append((dumps_obj(obj, pretty), obj, None))
        if i == 49:
            payload = json.dumps({"type": "report", "id": "report--x"}).encode()
            rec = Rec("opencti-1", received, "stix_bundle", payload)
            rec.rejects.append([[0, len(payload)], "not a stix bundle"])
            recs.append(rec)
            continue
        bundle_id = f"bundle--{mk_uuid()}"
        head = '{"type":"bundle","id":%s,"objects":[' % json.dumps(bundle_id)
        text = head + ",".join(t for t, _, _ in objects) + "]}"
        payload = text.encode()
        rec = Rec("opencti-1", received, "stix_bundle", payload)
        for j, (obj_text, obj, reason) in enumerate(objects):
            if reason is not None:
                rec.rejects.append([[j, j + 1], reason])
                continue
            assert obj is not None
            stix_type = obj["type"]
            stix_id = obj["id"]
            cms = epoch_ms(obj["created"])
            if stix_type in ("relationship", "sighting"):
                group, category, sev = "relationship", "relationship", 0
            elif stix_type in ("ipv4-addr", "domain-name", "file"):
                group, category, sev = "cyber_observable", "observable", 0
            else:
                group, category, sev = "domain_object", "indicator", 2
            if "name" in obj:
                primary = obj["name"]
            elif "value" in obj:
                primary = obj["value"]
            elif "pattern" in obj:
                primary = obj["pattern"]
            elif stix_type == "relationship":
                primary = f"{obj['relationship_type']} {obj['source_ref']} -> {obj['target_ref']}"
            elif stix_type == "sighting":
                primary = f"sighting {obj['sighting_of_ref']}"
            else:
                primary = stix_id
            summary = {"type": stix_type, "value": primary, "created": cms}
            if "pattern" in obj:
                summary["pattern"] = obj["pattern"]
            rec.stix.append(stix_line(stix_id, stix_type, group, cms, obj_text, summary))
            attrs = {"stix_id": stix_id, "stix_type": stix_type, "stix_group": group}
            rec.events.append(
                event_line(cms, received, "cti", rec.source_id, "", category, sev, f"{stix_type} {primary}", attrs, raw_ref=stix_id)
            )
        recs.append(rec)
    return recs


def dumps_obj(obj: dict, pretty: bool) -> str:
    if pretty:
        return json.dumps(obj, indent=2)
    return json.dumps(obj, separators=(",", ":"))


def gen_siem(rng: random.Random) -> list[Rec]:
    words = ["critical", "high", "medium", "low", "info"]
    sev_map = {"critical": 9, "high": 7, "medium": 5, "low": 3, "info": 1, "informational": 1}
    messages = [
        "Failed login burst detected",
        "Suspicious PowerShell execution",
        "Port scan from external address",
        "Malware signature matched",
        "Privilege escalation attempt",
    ]
    recs = []
    for i in range(60):
        received = BASE_TS + 21_600_000 + i * 1900
        ts = BASE_TS + i * 50_000
        host = rng.choice(HOSTS)
        msg = rng.choice(messages)
        rule = f"R-{rng.randint(100, 999)}"
        doc: dict = {"ts": ts, "asset_id": host, "rule": rule, "message": msg}
        expected_sev: int | None
        if i % 4 == 0:
            doc["severity"] = rng.choice(words)
            expected_sev = sev_map[doc["severity"]]
        else:
            doc["severity"] = rng.randint(0, 10)
            expected_sev = doc["severity"]
        kind = "siem"
        if i % 5 == 3:
            kind = rng.choice(["edr", "ndr"])
            doc["source_kind"] = kind
        extra = {}
        if i % 6 == 1:
            doc["detail"] = {"src_ip": f"203.0.113.{rng.randint(1, 250)}", "attempts": rng.randint(2, 40)}
            extra["detail.attempts"] = doc["detail"]["attempts"]
            extra["detail.src_ip"] = doc["detail"]["src_ip"]
        if i % 10 == 2:
            doc["tags"] = ["bruteforce", "T1110"]
            extra["tags.0"] = "bruteforce"
            extra["tags.1"] = "T1110"
        reject = None
        if i == 17:
            doc.pop("ts")
            reject = "missing ts"
        elif i == 29:
            doc.pop("severity")
            reject = "missing severity"
        elif i == 37:
            doc["severity"] = "catastrophic"
            reject = "unmapped severity"
        elif i == 43:
            doc["severity"] = 99
            reject = "unmapped severity"
        elif i == 53:
            doc["message"] = "X" * 700  # pins title truncation
            msg = doc["message"]
        payload = json.dumps(doc, separators=(",", ":")).encode()
        rec = Rec("siem-1", received, "siem_alert_json", payload)
        if reject:
            rec.rejects.append([[0, len(payload)], reject])
        else:
            attrs = {"rule": rule, "host": host}
            attrs.update(extra)
            assert expected_sev is not None
            rec.events.append(
                event_line(ts, received, kind, rec.source_id, host, "alert", expected_sev, msg[:512], attrs)
            )
        recs.append(rec)
    return recs


def gen_honeypot(rng: random.Random) -> list[Rec]:
    actions = [("ssh_attempt", 6), ("credential_use", 7), ("malware_drop", 8), ("port_probe", 6)]
    recs = []
    for i in range(55):
        received = BASE_TS + 25_200_000 + i * 2300
        ts = BASE_TS + i * 70_000
        decoy = f"hp-{1 + i % 3}"
        action, sev = rng.choice(actions)
        src_ip = f"203.0.113.{rng.randint(1, 250)}"
        doc: dict = {"ts": ts, "decoy_id": decoy, "src_ip": src_ip, "action": action}
        reject = None
        if i == 21:
            doc.pop("ts")
            reject = "missing ts"
        elif i == 34:
            doc.pop("decoy_id")
            reject = "missing decoy_id"
        elif i == 44:
            doc.pop("action")
            action, sev = "hit", 6
        payload = json.dumps(doc, separators=(",", ":")).encode()
        rec = Rec("honeypot-1", received, "honeypot_json", payload)
        if reject:
            rec.rejects.append([[0, len(payload)], reject])
        else:
            attrs = {"decoy_id": decoy, "action": action, "src_ip": src_ip}
            title = f"honeypot {action} from {src_ip}"
            rec.events.append(event_line(ts, received, "deception", rec.source_id, decoy, "alert", sev, title, attrs))
        recs.append(rec)
    return recs


# --- output ------------------------------------------------------------------


def write_corpus(name: str, recs: list[Rec]) -> None:
    corpora = FIXTURES / "corpora"
    expected = FIXTURES / "expected"
    corpora.mkdir(parents=True, exist_ok=True)
    expected.mkdir(parents=True, exist_ok=True)
    (corpora / f"{name}.ndjson").write_text("".join(r.line() + "\n" for r in recs), encoding="utf-8")
    (expected / f"{name}.events.ndjson").write_text(
        "".join(line + "\n" for r in recs for line in r.events), encoding="utf-8"
    )
    rejects = [[i, rng, reason] for i, r in enumerate(recs) for rng, reason in (tuple(x) for x in r.rejects)]
    (expected / f"{name}.rejects.json").write_text(json.dumps(rejects, indent=0) + "\n", encoding="utf-8")
    stix_lines = [line for r in recs for line in r.stix]
    if stix_lines:
        (expected / f"{name}.stix.ndjson").write_text("".join(line + "\n" for line in stix_lines), encoding="utf-8")


def write_canonical_event_fixture() -> None:
    attrs = {"user": "alice", "session_action": "login", "session_id": "s-17", "host": "host1"}
    payload = '{"v":1,"ts":1700000000000,"source_id":"agent-1","category":"session","title":"alice login","attributes":%s}' % canon_attrs(attrs)
    (FIXTURES / "canonical_event_1").write_text(payload, encoding="utf-8")
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
    (FIXTURES / "canonical_event_1.id").write_text(digest + "\n", encoding="utf-8")


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    gens = {
        "auth_log": gen_auth_log(random.Random(101)),
        "syslog": gen_syslog(random.Random(102)),
        "process_snapshot": gen_process_snapshot(random.Random(103)),
        "metric_csv": gen_metric_csv(random.Random(104)),
        "stix_bundle": gen_stix(random.Random(105)),
        "siem_alert_json": gen_siem(random.Random(106)),
        "honeypot_json": gen_honeypot(random.Random(107)),
    }
    for name, recs in gens.items():
        write_corpus(name, recs)
    # corpus1: a 50-record interleaved mix across all formats
    mixed: list[Rec] = []
    iters = [iter(recs) for recs in gens.values()]
    while len(mixed) < 50:
        for it in iters:
            if len(mixed) >= 50:
                break
            try:
                mixed.append(next(it))
            except StopIteration:
                pass
    (FIXTURES / "corpus1.ndjson").write_text("".join(r.line() + "\n" for r in mixed), encoding="utf-8")
    (FIXTURES / "corpus1.expected.ndjson").write_text(
        "".join(line + "\n" for r in mixed for line in r.events), encoding="utf-8"
    )
    write_canonical_event_fixture()
    total_events = sum(len(r.events) for recs in gens.values() for r in recs)
    print(f"fixtures written: {sum(len(v) for v in gens.values())} records, {total_events} expected events")


if __name__ == "__main__":
    main()
