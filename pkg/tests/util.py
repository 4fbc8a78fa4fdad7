"""Shared helpers for building synthetic events in tests."""

from __future__ import annotations

import random

from huntdeck.model import EventFilter, SecurityEvent

CATEGORIES = ["alert", "session", "process", "metric", "raw"]
KINDS = ["log", "siem", "deception", "edr"]
HOSTS = ["host01", "host02", "host03", "host04"]


def mk_event(ts, category="raw", asset="host01", severity=0, title=None, source_id="t-src", kind="log", **attrs):
    if category == "session":
        attrs.setdefault("user", "alice")
        attrs.setdefault("session_action", "login")
        attrs.setdefault("session_id", "s-0")
    elif category == "process":
        attrs.setdefault("pid", 1)
        attrs.setdefault("process_name", "proc")
    elif category == "metric":
        attrs.setdefault("metric_name", "m")
        attrs.setdefault("value", 1.0)
    return SecurityEvent(
        event_id="",
        ts=ts,
        ingested_at=ts,
        source_kind=kind,
        source_id=source_id,
        asset_id=asset,
        category=category,
        severity=severity,
        title=title or f"{category} event at {ts}",
        attributes=attrs,
    ).with_id()


def random_events(rng: random.Random, n: int, t0: int = 1_000_000, span: int = 3_600_000):
    events = []
    for i in range(n):
        events.append(
            mk_event(
                ts=t0 + rng.randrange(span),
                category=rng.choice(CATEGORIES),
                asset=rng.choice(HOSTS),
                severity=rng.randrange(11),
                title=f"evt {i} {rng.choice(['failed login', 'probe', 'ok', 'scan'])}",
                kind=rng.choice(KINDS),
                n=i,
            )
        )
    return events


def random_filter(rng: random.Random, t0: int = 1_000_000, span: int = 3_600_000) -> EventFilter:
    a = t0 + rng.randrange(span)
    b = t0 + rng.randrange(span)
    time_from, time_to = (a, b) if a < b else (b, a)
    if time_from == time_to:
        time_to += 1
    flt = EventFilter(time_from=time_from, time_to=time_to)
    if rng.random() < 0.4:
        flt.categories = frozenset(rng.sample(CATEGORIES, rng.randint(1, 3)))
    if rng.random() < 0.4:
        flt.asset_ids = frozenset(rng.sample(HOSTS, rng.randint(1, 2)))
    if rng.random() < 0.3:
        flt.severity_min = rng.randrange(11)
    if rng.random() < 0.3:
        flt.text_query = rng.choice(["failed", "probe", "evt", "zzz"])
    if rng.random() < 0.3:
        flt.source_kinds = frozenset(rng.sample(KINDS, rng.randint(1, 2)))
    return flt
