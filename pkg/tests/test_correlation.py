from __future__ import annotations

import json
import random

import pytest

from huntdeck.correlation import (
    CorrelationEngine,
    CorrelationRule,
    RuleError,
    RulesFile,
    evaluate,
    rule_from_doc,
    run_engine,
    validate_rule,
)
from huntdeck.model import EventPredicate, event_sort_key
from util import mk_event, random_events

FAILED_LOGIN = EventPredicate(categories=frozenset({"alert"}), text_query="failed login")


def threshold_rule(n=3, window=60_000, group_by="asset_id"):
    return CorrelationRule(
        rule_id="bruteforce",
        kind="threshold",
        match_a=FAILED_LOGIN,
        window_ms=window,
        count_n=n,
        group_by=group_by,
        severity=8,
        message_template="{count} failed logins on {asset}",
    )


def sequence_rule(window=120_000):
    return CorrelationRule(
        rule_id="probe-then-login",
        kind="sequence",
        match_a=EventPredicate(categories=frozenset({"alert"}), text_query="probe"),
        match_b=EventPredicate(categories=frozenset({"session"})),
        window_ms=window,
        group_by="asset_id",
        severity=6,
        message_template="probe followed by session on {asset}",
    )


def failed_login(ts, asset="host1"):
    return mk_event(ts, "alert", asset=asset, severity=4, title=f"failed login at {ts}")


def test_threshold_exact_example():
    events = [failed_login(t) for t in (0 + 1, 30_000, 59_000)]  # ts must stay positive
    alerts = evaluate(threshold_rule(), sorted(events, key=event_sort_key))
    assert len(alerts) == 1
    alert = alerts[0]
    assert alert.ts == 59_000
    assert len(alert.contributing_event_ids) == 3
    assert alert.asset_id == "host1"
    assert alert.message == "3 failed logins on host1"


def test_threshold_window_boundary_is_half_open():
    events = [failed_login(t) for t in (1, 30_000, 61_000)]
    alerts = evaluate(threshold_rule(), sorted(events, key=event_sort_key))
    assert alerts == []


def test_threshold_suppression_spacing():
    events = [failed_login(1 + i * 10_000) for i in range(40)]
    alerts = evaluate(threshold_rule(), events)
    assert len(alerts) >= 2
    for a, b in zip(alerts, alerts[1:]):
        assert b.ts - a.ts >= 60_000


def test_groups_are_independent():
    events = sorted(
        [failed_login(1 + i * 1000, asset="h1") for i in range(3)]
        + [failed_login(1500 + i * 1000, asset="h2") for i in range(3)],
        key=event_sort_key,
    )
    alerts = evaluate(threshold_rule(), events)
    assert sorted(a.asset_id for a in alerts) == ["h1", "h2"]


def test_sequence_rule_pairs_and_suppresses():
    events = sorted(
        [
            mk_event(1000, "alert", asset="h1", title="honeypot probe"),
            mk_event(5000, "session", asset="h1", user="alice"),
            mk_event(6000, "session", asset="h1", user="bob", session_id="s-9"),
        ],
        key=event_sort_key,
    )
    alerts = evaluate(sequence_rule(), events)
    assert len(alerts) == 1
    assert alerts[0].ts == 5000
    assert len(alerts[0].contributing_event_ids) == 2


def test_sequence_outside_window_no_alert():
    events = sorted(
        [
            mk_event(1000, "alert", asset="h1", title="honeypot probe"),
            mk_event(1000 + 120_000, "session", asset="h1"),
        ],
        key=event_sort_key,
    )
    assert evaluate(sequence_rule(), events) == []


def test_unsorted_input_rejected():
    events = [failed_login(5000), failed_login(1000)]
    with pytest.raises(RuleError, match="events not ordered"):
        evaluate(threshold_rule(), events)


def test_rule_validation():
    bad = threshold_rule()
    bad.count_n = None
    assert validate_rule(bad)
    seq = sequence_rule()
    seq.match_b = None
    assert validate_rule(seq)
    tmpl = threshold_rule()
    tmpl.message_template = "{nope}"
    assert validate_rule(tmpl)


# --- brute-force oracle -------------------------------------------------------


def brute_threshold(rule, events):
    """Quadratic restatement of the declarative threshold semantics."""
    alerts = []
    groups = {}
    for ev in events:
        if not rule.match_a.matches(ev):
            continue
        key = ev.asset_id if rule.group_by == "asset_id" else ""
        groups.setdefault(key, []).append(ev)
    for key, matches in groups.items():
        dead = set()
        consumed = set()
        sup_until = None
        for j, m in enumerate(matches):
            if sup_until is not None and m.ts < sup_until:
                dead.add(j)
                continue
            members = [
                i
                for i in range(j + 1)
                if i not in dead and i not in consumed and matches[i].ts > m.ts - rule.window_ms
            ]
            if len(members) >= rule.count_n:
                contributing = [matches[i] for i in members]
                from huntdeck.correlation import _make_alert

                alerts.append(_make_alert(rule, key, contributing))
                consumed.update(members)
                sup_until = m.ts + rule.window_ms
    return alerts


def brute_sequence(rule, events):
    """Quadratic restatement of the sequence semantics."""
    alerts = []
    groups = {}
    for ev in events:
        if rule.match_a.matches(ev) or rule.match_b.matches(ev):
            key = ev.asset_id if rule.group_by == "asset_id" else ""
            groups.setdefault(key, []).append(ev)
    for key, group_events in groups.items():
        dead = set()
        used = set()
        sup_until = None
        for j, ev in enumerate(group_events):
            if sup_until is not None and ev.ts < sup_until:
                dead.add(j)
                continue
            if rule.match_b.matches(ev):
                candidates = [
                    i
                    for i in range(j)
                    if i not in dead
                    and i not in used
                    and rule.match_a.matches(group_events[i])
                    and ev.ts < group_events[i].ts + rule.window_ms
                ]
                if candidates:
                    first_a = group_events[candidates[0]]
                    from huntdeck.correlation import _make_alert

                    alerts.append(_make_alert(rule, key, [first_a, ev]))
                    used.update(range(j + 1))
                    sup_until = ev.ts + rule.window_ms
                    continue
    return alerts


def alert_key_set(alerts):
    return {(a.alert_id) for a in alerts}


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_threshold_matches_brute_force(seed):
    rng = random.Random(seed)
    events = sorted(random_events(rng, 3000, span=600_000), key=event_sort_key)
    rule = threshold_rule(n=4, window=30_000)
    fast = evaluate(rule, events)
    slow = brute_threshold(rule, events)
    assert alert_key_set(fast) == alert_key_set(slow)
    assert fast  # scenario actually produces alerts


@pytest.mark.parametrize("seed", [4, 5])
def test_sequence_matches_brute_force(seed):
    rng = random.Random(seed)
    events = sorted(random_events(rng, 2000, span=400_000), key=event_sort_key)
    rule = sequence_rule(window=20_000)
    rule.match_a = EventPredicate(categories=frozenset({"alert"}))
    rule.match_b = EventPredicate(categories=frozenset({"session"}))
    fast = evaluate(rule, events)
    slow = brute_sequence(rule, events)
    assert alert_key_set(fast) == alert_key_set(slow)
    assert fast


# --- streaming engine -----------------------------------------------------------


def shuffle_within_grace(rng, events, grace):
    """Authentic bounded disorder: each event delayed by < grace."""
    keyed = [((ev.ts + rng.randrange(grace)), i, ev) for i, ev in enumerate(events)]
    keyed.sort(key=lambda t: (t[0], t[1]))
    return [ev for _, _, ev in keyed]


def test_engine_replay_determinism():
    rng = random.Random(31)
    events = sorted(random_events(rng, 1000, span=200_000), key=event_sort_key)
    feed = shuffle_within_grace(rng, events, 10_000)
    a1, _ = run_engine([threshold_rule(n=3, window=20_000)], feed, grace_ms=10_000)
    a2, _ = run_engine([threshold_rule(n=3, window=20_000)], feed, grace_ms=10_000)
    assert alert_key_set(a1) == alert_key_set(a2)


def test_engine_equals_offline_evaluate_within_grace():
    rng = random.Random(37)
    events = sorted(random_events(rng, 2000, span=300_000), key=event_sort_key)
    grace = 15_000
    feed = shuffle_within_grace(rng, events, grace)
    rule = threshold_rule(n=3, window=25_000)
    online, engine = run_engine([rule], feed, grace_ms=grace)
    offline = evaluate(rule, events)
    assert alert_key_set(online) == alert_key_set(offline)
    assert engine.late_events == 0


def test_engine_empty_rule_set_consumes_feed():
    rng = random.Random(41)
    events = random_events(rng, 200)
    alerts, engine = run_engine([], events, grace_ms=1000)
    assert alerts == []
    assert engine.malformed_events == 0


def test_engine_counts_late_events():
    rule = threshold_rule()
    engine = CorrelationEngine([rule], grace_ms=100)
    engine.feed(failed_login(1_000_000))
    engine.feed(failed_login(2_000_000))  # releases the first event
    engine.feed(failed_login(5_000))  # far older than the watermark
    assert engine.late_events == 1


def test_engine_appends_alerts_to_store(tmp_path):
    from huntdeck.store import EventStore

    store = EventStore(tmp_path / "data", clock=lambda: 10**14)
    events = [failed_login(1 + i * 1000) for i in range(3)]
    alerts, _ = run_engine([threshold_rule()], events, store=store, grace_ms=1000)
    assert len(alerts) == 1
    assert store.alert_count() == 1


def test_rules_file_load_and_hot_reload(tmp_path):
    path = tmp_path / "rules.json"
    doc = {"rules": [
        {
            "rule_id": "bruteforce",
            "kind": "threshold",
            "match_a": {"categories": ["alert"], "text_query": "failed login"},
            "window_ms": 60000,
            "count_n": 5,
            "group_by": "asset_id",
            "severity": 8,
            "message_template": "{count} failed logins on {asset}",
        }
    ]}
    path.write_text(json.dumps(doc))
    rf = RulesFile.load(path)
    assert len(rf.rules) == 1 and rf.rules[0].rule_id == "bruteforce"
    # malformed update keeps previous rules
    import os
    import time as _time

    path.write_text("{not json")
    os.utime(path, (path.stat().st_atime, path.stat().st_mtime + 10))
    assert rf.reload_if_changed() is False
    assert len(rf.rules) == 1
    # valid update applies
    doc["rules"][0]["count_n"] = 7
    path.write_text(json.dumps(doc))
    os.utime(path, (path.stat().st_atime, path.stat().st_mtime + 20))
    assert rf.reload_if_changed() is True
    assert rf.rules[0].count_n == 7
    _ = _time


def test_rule_from_doc_rejects_bad_docs():
    with pytest.raises(RuleError):
        rule_from_doc({"rule_id": "x", "kind": "sequence", "match_a": {}, "window_ms": 100})
