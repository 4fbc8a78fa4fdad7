"""Deterministic seeded telemetry generator for tests and demos.

Produces one RawRecord batch file per input format plus a manifest with
exact per-category counts and by-construction ground-truth alerts for the
injected attack patterns. Event placement uses integer arithmetic only and a
fixed xoshiro256** PRNG (constants below), so identical (seed, scenario)
pairs reproduce byte-identical corpora on any platform.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .converters import RawRecord, encode_raw_record

MASK64 = (1 << 64) - 1

DEFAULT_START_TS = 1704448800000  # 2024-01-05T10:00:00Z

INJECTION_KINDS = frozenset({"bruteforce_login", "process_burst", "honeypot_probe", "cti_drop"})

BASELINE_CATEGORIES = ("session", "process", "metric", "alert", "raw", "observable")

# The canonical brute-force detection rule whose ground truth simgen derives.
BRUTEFORCE_RULE_DOC = {
    "rule_id": "bruteforce-login",
    "kind": "threshold",
    "match_a": {"categories": ["alert"], "text_query": "failed login"},
    "window_ms": 60_000,
    "count_n": 5,
    "group_by": "asset_id",
    "severity": 8,
    "message_template": "{count} failed logins on {asset}",
}


class ScenarioError(ValueError):
    pass


class Xoshiro256StarStar:
    """xoshiro256** with splitmix64 seed expansion; commit these constants."""

    def __init__(self, seed: int):
        sm = seed & MASK64
        state = []
        for _ in range(4):
            sm = (sm + 0x9E3779B97F4A7C15) & MASK64
            z = sm
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
            state.append(z ^ (z >> 31))
        self.s = state

    @staticmethod
    def _rotl(x: int, k: int) -> int:
        return ((x << k) | (x >> (64 - k))) & MASK64

    def next_u64(self) -> int:
        s = self.s
        result = (self._rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = self._rotl(s[3], 45)
        return result

    def below(self, n: int) -> int:
        """Uniform-ish integer in [0, n); modulo bias is irrelevant at these sizes."""
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.below(len(seq))]


@dataclass
class Injection:
    kind: str
    start_ms: int
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class Scenario:
    seed: int
    duration_ms: int
    hosts: int = 3
    start_ts: int = DEFAULT_START_TS
    rates: dict[str, int] = field(default_factory=dict)  # events per minute
    injections: list[Injection] = field(default_factory=list)


def validate_scenario(sc: Scenario) -> list[str]:
    v: list[str] = []
    if sc.duration_ms <= 0:
        v.append("duration_ms must be positive")
    if sc.hosts < 1:
        v.append("hosts must be >= 1")
    if sc.start_ts <= 0:
        v.append("start_ts must be positive")
    for cat, rate in sc.rates.items():
        if cat not in BASELINE_CATEGORIES:
            v.append(f"unknown rate category {cat!r}")
        elif not isinstance(rate, int) or rate < 0:
            v.append(f"rate for {cat!r} must be a non-negative integer")
    for inj in sc.injections:
        if inj.kind not in INJECTION_KINDS:
            v.append(f"unknown injection kind {inj.kind!r}")
        if not 0 <= inj.start_ms < sc.duration_ms:
            v.append(f"injection {inj.kind} starts outside the scenario duration")
        span = inj.params.get("span_ms", 0)
        if span and inj.start_ms + span > sc.duration_ms:
            v.append(f"injection {inj.kind} extends past the scenario duration")
    return v


def scenario_from_doc(doc: dict[str, Any]) -> Scenario:
    sc = Scenario(
        seed=doc["seed"],
        duration_ms=doc["duration_ms"],
        hosts=doc.get("hosts", 3),
        start_ts=doc.get("start_ts", DEFAULT_START_TS),
        rates={k: v for k, v in doc.get("rates", {}).items()},
        injections=[
            Injection(kind=i["kind"], start_ms=i["start_ms"], params=dict(i.get("params", {})))
            for i in doc.get("injections", [])
        ],
    )
    violations = validate_scenario(sc)
    if violations:
        raise ScenarioError(f"invalid scenario: {violations}")
    return sc


def _iso(ms: int) -> str:
    dt = datetime.fromtimestamp(ms // 1000, tz=timezone.utc)
    base = dt.strftime("%Y-%m-%dT%H:%M:%S")
    frac = ms % 1000
    return f"{base}.{frac:03d}Z" if frac else f"{base}Z"


def _spread(start: int, count: int, span_ms: int) -> list[int]:
    """count integer timestamps evenly placed across [start, start+span)."""
    if count <= 0:
        return []
    step = max(span_ms // count, 1)
    return [start + i * step for i in range(count)]


def _baseline_times(start: int, duration_ms: int, per_minute: int) -> list[int]:
    if per_minute <= 0:
        return []
    total = (duration_ms * per_minute) // 60_000
    return [start + (i * 60_000) // per_minute for i in range(total)]


@dataclass
class _Out:
    """Accumulates RawRecords per format plus traced category counts."""

    records: dict[str, list[tuple[int, str]]] = field(default_factory=dict)
    categories: dict[str, int] = field(default_factory=dict)

    def add(self, fmt: str, ts: int, payload: str, categories: dict[str, int]) -> None:
        self.records.setdefault(fmt, []).append((ts, payload))
        for cat, n in categories.items():
            self.categories[cat] = self.categories.get(cat, 0) + n


def generate(sc: Scenario, out_dir: "str | Path") -> dict[str, Any]:
    """Write batch files and manifest.json; returns the manifest document."""
    violations = validate_scenario(sc)
    if violations:
        raise ScenarioError(f"invalid scenario: {violations}")
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    rng = Xoshiro256StarStar(sc.seed)
    hosts = [f"host{i + 1:02d}" for i in range(sc.hosts)]
    users = ["alice", "bob", "carol", "dave", "eve", "frank"]
    out = _Out()

    _gen_sessions(sc, rng, hosts, users, out)
    _gen_processes(sc, rng, hosts, users, out)
    _gen_metrics(sc, rng, hosts, out)
    _gen_baseline_alerts(sc, rng, hosts, out)
    _gen_syslog(sc, rng, hosts, out)
    _gen_observables(sc, rng, out)
    bruteforce_truth = _gen_injections(sc, rng, hosts, out)

    from .converters import FORMAT_HINTS

    files: dict[str, int] = {}
    digests: dict[str, str] = {}
    for fmt in sorted(FORMAT_HINTS):
        entries = sorted(out.records.get(fmt, []), key=lambda pair: pair[0])
        path = out_path / f"{fmt}.ndjson"
        text = "".join(line + "\n" for _, line in entries)
        path.write_text(text, encoding="utf-8")
        files[f"{fmt}.ndjson"] = len(entries)
        digests[f"{fmt}.ndjson"] = hashlib.sha256(text.encode("utf-8")).hexdigest()
    manifest = {
        "seed": sc.seed,
        "start_ts": sc.start_ts,
        "duration_ms": sc.duration_ms,
        "hosts": hosts,
        "files": files,
        "file_digests": digests,
        "categories": dict(sorted(out.categories.items())),
        "rule": BRUTEFORCE_RULE_DOC,
        "expected_alerts": bruteforce_truth,
    }
    (out_path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def _record(fmt: str, source_id: str, ts: int, payload: str) -> str:
    return encode_raw_record(RawRecord(source_id, ts + 250, payload.encode("utf-8"), fmt))


def _gen_sessions(sc, rng, hosts, users, out) -> None:
    session_n = 0
    open_sessions: list[tuple[str, str, str]] = []
    for ts in _baseline_times(sc.start_ts, sc.duration_ms, sc.rates.get("session", 0)):
        if open_sessions and rng.below(100) < 45:
            host, user, sid = open_sessions.pop(rng.below(len(open_sessions)))
            line = f"{_iso(ts)} {host} LOGOUT {user} {sid}"
        else:
            host, user = rng.choice(hosts), rng.choice(users)
            sid = f"s-{session_n}"
            session_n += 1
            open_sessions.append((host, user, sid))
            line = f"{_iso(ts)} {host} LOGIN {user} {sid}"
        out.add("auth_log", ts, _record("auth_log", "auth-agent", ts, line), {"session": 1})


def _gen_processes(sc, rng, hosts, users, out) -> None:
    names = ["sshd", "nginx", "postgres", "python3", "backup.sh", "cron"]
    for i, ts in enumerate(_baseline_times(sc.start_ts, sc.duration_ms, sc.rates.get("process", 0))):
        host = rng.choice(hosts)
        doc = {
            "host": host,
            "ts": ts,
            "processes": [
                {
                    "pid": 1000 + (i % 50000),
                    "name": rng.choice(names),
                    "user": rng.choice(users),
                    "cpu_pct": _dec1(rng.below(900)),
                }
            ],
        }
        out.add("process_snapshot", ts, _record("process_snapshot", "procmon-1", ts, _dumps(doc)), {"process": 1})


def _gen_metrics(sc, rng, hosts, out) -> None:
    metrics = ["cpu_pct", "mem_pct", "net_rx_kbps"]
    for ts in _baseline_times(sc.start_ts, sc.duration_ms, sc.rates.get("metric", 0)):
        host, metric = rng.choice(hosts), rng.choice(metrics)
        v = rng.below(1000)
        payload = f"ts,host,metric_name,value\n{ts},{host},{metric},{v // 10}.{v % 10}\n"
        out.add("metric_csv", ts, _record("metric_csv", "metrics-1", ts, payload), {"metric": 1})


def _gen_baseline_alerts(sc, rng, hosts, out) -> None:
    # Baseline alert titles deliberately avoid the "failed login" needle the
    # canonical brute-force rule matches on.
    messages = [
        "Outbound connection to rare port",
        "Suspicious scheduled task created",
        "Antivirus signature update overdue",
        "Unusual DNS query volume",
    ]
    severities = ["low", "medium", "high"]
    for i, ts in enumerate(_baseline_times(sc.start_ts, sc.duration_ms, sc.rates.get("alert", 0))):
        doc = {
            "ts": ts,
            "asset_id": rng.choice(hosts),
            "rule": f"BASE-{rng.below(50):02d}",
            "severity": rng.choice(severities),
            "message": f"{rng.choice(messages)} #{i}",
        }
        out.add("siem_alert_json", ts, _record("siem_alert_json", "siem-1", ts, _dumps(doc)), {"alert": 1})


def _gen_syslog(sc, rng, hosts, out) -> None:
    programs = ["cron", "systemd", "kernel"]
    notes = ["job started", "unit reloaded", "link up", "disk check ok"]
    for i, ts in enumerate(_baseline_times(sc.start_ts, sc.duration_ms, sc.rates.get("raw", 0))):
        host = rng.choice(hosts)
        line = f"{_iso(ts)} {host} {rng.choice(programs)}: {rng.choice(notes)} seq={i}"
        out.add("syslog", ts, _record("syslog", "syslog-gw", ts, line), {"raw": 1})


def _gen_observables(sc, rng, out) -> None:
    for i, ts in enumerate(_baseline_times(sc.start_ts, sc.duration_ms, sc.rates.get("observable", 0))):
        oid = _uuid_from(rng)
        obj = {
            "type": "ipv4-addr",
            "id": f"ipv4-addr--{oid}",
            "value": f"203.0.113.{1 + rng.below(250)}",
            "created": _iso(ts),
        }
        bundle = {"type": "bundle", "id": f"bundle--{_uuid_from(rng)}", "objects": [obj]}
        out.add("stix_bundle", ts, _record("stix_bundle", "opencti-1", ts, _dumps(bundle)), {"observable": 1})


def _gen_injections(sc, rng, hosts, out) -> list[dict[str, Any]]:
    truth: list[dict[str, Any]] = []
    bruteforce_times: dict[str, list[int]] = {}
    for inj in sc.injections:
        start = sc.start_ts + inj.start_ms
        if inj.kind == "bruteforce_login":
            host = inj.params.get("host") or hosts[0]
            user = inj.params.get("user") or "admin"
            count = int(inj.params.get("count", 20))
            span = int(inj.params.get("span_ms", 60_000))
            times = _spread(start, count, span)
            for ts in times:
                doc = {
                    "ts": ts,
                    "asset_id": host,
                    "rule": "AUTH-FAIL",
                    "severity": "medium",
                    "message": f"failed login for {user} from 203.0.113.{1 + rng.below(250)}",
                }
                out.add("siem_alert_json", ts, _record("siem_alert_json", "siem-1", ts, _dumps(doc)), {"alert": 1})
            bruteforce_times.setdefault(host, []).extend(times)
        elif inj.kind == "process_burst":
            host = inj.params.get("host") or hosts[0]
            count = int(inj.params.get("count", 30))
            span = int(inj.params.get("span_ms", 30_000))
            for j, ts in enumerate(_spread(start, count, span)):
                doc = {
                    "host": host,
                    "ts": ts,
                    "processes": [{"pid": 60000 + j, "name": "miner", "user": "nobody", "cpu_pct": _dec1(990)}],
                }
                out.add("process_snapshot", ts, _record("process_snapshot", "procmon-1", ts, _dumps(doc)), {"process": 1})
        elif inj.kind == "honeypot_probe":
            decoy = inj.params.get("decoy") or "hp-1"
            src_ip = inj.params.get("src_ip") or f"203.0.113.{1 + rng.below(250)}"
            count = int(inj.params.get("count", 10))
            span = int(inj.params.get("span_ms", 60_000))
            for ts in _spread(start, count, span):
                doc = {"ts": ts, "decoy_id": decoy, "src_ip": src_ip, "action": "ssh_attempt"}
                out.add("honeypot_json", ts, _record("honeypot_json", "honeypot-1", ts, _dumps(doc)), {"alert": 1})
        elif inj.kind == "cti_drop":
            count = int(inj.params.get("count", 10))
            objs = []
            for j in range(count):
                objs.append(
                    {
                        "type": "domain-name",
                        "id": f"domain-name--{_uuid_from(rng)}",
                        "value": f"c2-{j}.dropzone.example",
                        "created": _iso(start + j),
                    }
                )
            bundle = {"type": "bundle", "id": f"bundle--{_uuid_from(rng)}", "objects": objs}
            out.add("stix_bundle", start, _record("stix_bundle", "opencti-1", start, _dumps(bundle)), {"observable": count})
    # Ground truth for the canonical brute-force rule, derived by construction
    # from the injected timestamps alone (baseline alerts never match it).
    rule = BRUTEFORCE_RULE_DOC
    for host in sorted(bruteforce_times):
        times = sorted(bruteforce_times[host])
        for ts, members in _hand_threshold(times, rule["count_n"], rule["window_ms"]):
            truth.append(
                {
                    "rule_id": rule["rule_id"],
                    "asset_id": host,
                    "ts": ts,
                    "contributing_count": len(members),
                    "message": rule["message_template"].format(count=len(members), asset=host),
                }
            )
    return truth


def _hand_threshold(times: list[int], n: int, window: int) -> list[tuple[int, list[int]]]:
    """Declarative threshold semantics applied to known injected times."""
    alerts: list[tuple[int, list[int]]] = []
    available: list[int] = []
    suppressed_until: int | None = None
    for t in times:
        if suppressed_until is not None and t < suppressed_until:
            continue
        available.append(t)
        available = [x for x in available if x > t - window]
        if len(available) >= n:
            alerts.append((t, list(available)))
            available = []
            suppressed_until = t + window
    return alerts


def _dumps(doc: Any) -> str:
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)


def _dec1(tenths: int) -> float:
    """A one-decimal float derived from an integer count of tenths."""
    return tenths / 10


def _uuid_from(rng: Xoshiro256StarStar) -> str:
    h = f"{rng.next_u64():016x}{rng.next_u64():016x}"
    return f"{h[0:8]}-{h[8:12]}-4{h[13:16]}-8{h[17:20]}-{h[20:32]}"
