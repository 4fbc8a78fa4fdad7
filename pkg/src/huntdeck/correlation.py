"""Rule-based detection over the event flow, producing AlertRecords.

Two rule kinds:

- threshold: ≥ count_n events matching match_a inside any half-open
  window_ms span, per group;
- sequence: a match_a event followed by a match_b event within window_ms,
  same group.

After a (rule, group) emits, it stays silent for window_ms; matching events
arriving during the silence are consumed without effect, so consecutive
alerts for one (rule, group) are always ≥ window_ms apart and replays are
deterministic. Windows are anchored at the oldest contributing event and
half-open, matching the timeline bucket convention.
"""

from __future__ import annotations

import heapq
import json
import logging
import os
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .model import AlertRecord, EventPredicate, SecurityEvent, event_sort_key

logger = logging.getLogger(__name__)

RULE_KINDS = frozenset({"threshold", "sequence"})
GROUP_BY = frozenset({"asset_id", "none"})


class RuleError(ValueError):
    pass


@dataclass
class CorrelationRule:
    rule_id: str
    kind: str
    match_a: EventPredicate
    window_ms: int
    severity: int
    message_template: str
    match_b: Optional[EventPredicate] = None
    count_n: Optional[int] = None
    group_by: str = "asset_id"


def validate_rule(rule: CorrelationRule) -> list[str]:
    v: list[str] = []
    if not rule.rule_id:
        v.append("rule_id must be non-empty")
    if rule.kind not in RULE_KINDS:
        v.append(f"unknown rule kind {rule.kind!r}")
    if rule.kind == "sequence" and rule.match_b is None:
        v.append("sequence rule requires match_b")
    if rule.kind == "threshold" and (rule.count_n is None or rule.count_n < 1):
        v.append("threshold rule requires count_n >= 1")
    if rule.window_ms <= 0:
        v.append("window_ms must be positive")
    if not 0 <= rule.severity <= 10:
        v.append("severity out of range")
    if rule.group_by not in GROUP_BY:
        v.append(f"unknown group_by {rule.group_by!r}")
    try:
        rule.message_template.format(asset="x", count=1)
    except (KeyError, IndexError, ValueError):
        v.append("message_template may only use {asset} and {count}")
    return v


def rule_from_doc(doc: dict[str, Any]) -> CorrelationRule:
    rule = CorrelationRule(
        rule_id=doc.get("rule_id", ""),
        kind=doc.get("kind", ""),
        match_a=EventPredicate.from_doc(doc.get("match_a", {})),
        match_b=EventPredicate.from_doc(doc["match_b"]) if doc.get("match_b") is not None else None,
        window_ms=doc.get("window_ms", 0),
        count_n=doc.get("count_n"),
        group_by=doc.get("group_by", "asset_id"),
        severity=doc.get("severity", 5),
        message_template=doc.get("message_template", "{count} correlated events on {asset}"),
    )
    violations = validate_rule(rule)
    if violations:
        raise RuleError(f"invalid rule {rule.rule_id!r}: {violations}")
    return rule


def rule_to_doc(rule: CorrelationRule) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "rule_id": rule.rule_id,
        "kind": rule.kind,
        "match_a": rule.match_a.to_doc(),
        "window_ms": rule.window_ms,
        "group_by": rule.group_by,
        "severity": rule.severity,
        "message_template": rule.message_template,
    }
    if rule.match_b is not None:
        doc["match_b"] = rule.match_b.to_doc()
    if rule.count_n is not None:
        doc["count_n"] = rule.count_n
    return doc


def _group_key(rule: CorrelationRule, ev: SecurityEvent) -> str:
    return ev.asset_id if rule.group_by == "asset_id" else ""


def _make_alert(rule: CorrelationRule, group: str, contributing: list[SecurityEvent]) -> AlertRecord:
    trigger = contributing[-1]
    return AlertRecord(
        alert_id="",
        ts=trigger.ts,
        asset_id=group,
        rule_id=rule.rule_id,
        severity=rule.severity,
        message=rule.message_template.format(asset=group or "any", count=len(contributing)),
        contributing_event_ids=[e.event_id for e in contributing],
    ).with_id()


class _GroupState:
    """Sliding buffer and suppression clock for one (rule, group)."""

    __slots__ = ("buffer", "suppressed_until")

    def __init__(self) -> None:
        self.buffer: deque[SecurityEvent] = deque()
        self.suppressed_until: Optional[int] = None


class _RuleState:
    """Incremental evaluator shared by the offline and streaming paths."""

    def __init__(self, rule: CorrelationRule):
        self.rule = rule
        self.groups: dict[str, _GroupState] = {}

    def process(self, ev: SecurityEvent) -> list[AlertRecord]:
        rule = self.rule
        if rule.kind == "threshold":
            if not rule.match_a.matches(ev):
                return []
            return self._process_threshold(ev)
        return self._process_sequence(ev)

    def _process_threshold(self, ev: SecurityEvent) -> list[AlertRecord]:
        rule = self.rule
        g = self.groups.setdefault(_group_key(rule, ev), _GroupState())
        if g.suppressed_until is not None and ev.ts < g.suppressed_until:
            return []
        g.buffer.append(ev)
        while g.buffer and ev.ts >= g.buffer[0].ts + rule.window_ms:
            g.buffer.popleft()
        if len(g.buffer) >= (rule.count_n or 1):
            contributing = list(g.buffer)
            g.buffer.clear()
            g.suppressed_until = ev.ts + rule.window_ms
            return [_make_alert(rule, _group_key(rule, ev), contributing)]
        return []

    def _process_sequence(self, ev: SecurityEvent) -> list[AlertRecord]:
        rule = self.rule
        assert rule.match_b is not None
        is_a = rule.match_a.matches(ev)
        is_b = rule.match_b.matches(ev)
        if not is_a and not is_b:
            return []
        g = self.groups.setdefault(_group_key(rule, ev), _GroupState())
        if g.suppressed_until is not None and ev.ts < g.suppressed_until:
            return []
        while g.buffer and ev.ts >= g.buffer[0].ts + rule.window_ms:
            g.buffer.popleft()
        if is_b and g.buffer:
            first_a = g.buffer[0]
            g.buffer.clear()
            g.suppressed_until = ev.ts + rule.window_ms
            return [_make_alert(rule, _group_key(rule, ev), [first_a, ev])]
        if is_a:
            g.buffer.append(ev)
        return []


def evaluate(rule: CorrelationRule, events: Iterable[SecurityEvent]) -> list[AlertRecord]:
    """Offline evaluation over a (ts, event_id)-sorted event list."""
    violations = validate_rule(rule)
    if violations:
        raise RuleError(f"invalid rule: {violations}")
    state = _RuleState(rule)
    alerts: list[AlertRecord] = []
    prev = None
    for ev in events:
        key = event_sort_key(ev)
        if prev is not None and key < prev:
            raise RuleError("events not ordered")
        prev = key
        alerts.extend(state.process(ev))
    return alerts


class CorrelationEngine:
    """Streaming evaluation with a bounded reorder buffer.

    Events later than the grace period are still evaluated (best effort) and
    counted in ``late_events``; within the grace bound the engine's output
    equals ``evaluate`` over the globally sorted feed.
    """

    def __init__(
        self,
        rules: Iterable[CorrelationRule],
        grace_ms: int = 60_000,
        on_alert: Optional[Callable[[AlertRecord], None]] = None,
    ):
        self.rules = list(rules)
        for rule in self.rules:
            violations = validate_rule(rule)
            if violations:
                raise RuleError(f"invalid rule {rule.rule_id!r}: {violations}")
        self.grace_ms = grace_ms
        self.on_alert = on_alert
        self._states = [_RuleState(rule) for rule in self.rules]
        self._heap: list[tuple[int, str, SecurityEvent]] = []
        self._max_seen_ts = 0
        self._last_released: Optional[tuple[int, str]] = None
        self.late_events = 0
        self.malformed_events = 0
        self.alerts_emitted = 0

    def set_rules(self, rules: Iterable[CorrelationRule]) -> None:
        """Replace the rule set; correlation state restarts for the new rules."""
        self.rules = list(rules)
        self._states = [_RuleState(rule) for rule in self.rules]

    def feed(self, ev: SecurityEvent) -> list[AlertRecord]:
        if not isinstance(ev, SecurityEvent) or not ev.event_id:
            self.malformed_events += 1
            return []
        key = event_sort_key(ev)
        if self._last_released is not None and key < self._last_released:
            self.late_events += 1
            return self._dispatch(ev)
        heapq.heappush(self._heap, (ev.ts, ev.event_id, ev))
        if ev.ts > self._max_seen_ts:
            self._max_seen_ts = ev.ts
        watermark = self._max_seen_ts - self.grace_ms
        out: list[AlertRecord] = []
        while self._heap and self._heap[0][0] <= watermark:
            out.extend(self._release())
        return out

    def flush(self) -> list[AlertRecord]:
        """Drain the reorder buffer (quiescence / end of feed)."""
        out: list[AlertRecord] = []
        while self._heap:
            out.extend(self._release())
        return out

    def _release(self) -> list[AlertRecord]:
        ts, eid, ev = heapq.heappop(self._heap)
        self._last_released = (ts, eid)
        return self._dispatch(ev)

    def _dispatch(self, ev: SecurityEvent) -> list[AlertRecord]:
        alerts: list[AlertRecord] = []
        for state in self._states:
            alerts.extend(state.process(ev))
        if alerts:
            self.alerts_emitted += len(alerts)
            if self.on_alert is not None:
                for alert in alerts:
                    self.on_alert(alert)
        return alerts


def run_engine(
    rules: Iterable[CorrelationRule],
    feed: Iterable[SecurityEvent],
    store=None,
    grace_ms: int = 60_000,
) -> tuple[list[AlertRecord], CorrelationEngine]:
    """Consume a feed through a fresh engine; emitted alerts go to the store."""
    engine = CorrelationEngine(rules, grace_ms=grace_ms)
    alerts: list[AlertRecord] = []
    for ev in feed:
        alerts.extend(engine.feed(ev))
    alerts.extend(engine.flush())
    if store is not None and alerts:
        store.append_alerts(alerts)
    return alerts, engine


@dataclass
class RulesFile:
    """Rules loaded from a JSON file, hot-reloadable on change."""

    path: Path
    rules: list[CorrelationRule] = field(default_factory=list)
    _mtime: float = 0.0

    @classmethod
    def load(cls, path: "str | Path") -> "RulesFile":
        rf = cls(path=Path(path))
        rf.rules = rf._parse()
        rf._mtime = os.path.getmtime(rf.path)
        return rf

    def _parse(self) -> list[CorrelationRule]:
        doc = json.loads(self.path.read_text(encoding="utf-8"))
        entries = doc["rules"] if isinstance(doc, dict) else doc
        return [rule_from_doc(entry) for entry in entries]

    def reload_if_changed(self) -> bool:
        """Re-read the file when its mtime moved; keep previous rules on errors."""
        try:
            mtime = os.path.getmtime(self.path)
        except OSError:
            return False
        if mtime == self._mtime:
            return False
        self._mtime = mtime
        try:
            self.rules = self._parse()
            return True
        except (OSError, ValueError, KeyError) as exc:
            logger.error("rules file %s is malformed, keeping previous rules: %s", self.path, exc)
            return False
