"""Saved dashboard configurations: persistence, validation, and resolution.

A view pins tiles (widget kind, 12-column grid placement, time-free filter)
plus a time spec that is either absolute or relative; resolving a view turns
every widget filter into an absolute half-open range for a given "now".
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .model import EventFilter, EventPredicate

WIDGET_KINDS = frozenset(
    {
        "timeline",
        "alerts_table",
        "sessions_table",
        "processes_table",
        "metric_chart",
        "stix_tables",
        "topic_barchart",
        "compare",
    }
)

GRID_COLUMNS = 12


class ViewError(Exception):
    pass


class ViewNotFoundError(ViewError):
    pass


class DuplicateViewNameError(ViewError):
    pass


class ViewConflictError(ViewError):
    """Optimistic-concurrency failure: the view changed since it was read."""


@dataclass
class TilePlacement:
    widget_kind: str
    grid_pos: tuple[int, int, int, int]  # col, row, w, h
    widget_filter: EventPredicate = field(default_factory=EventPredicate)
    widget_options: dict[str, Any] = field(default_factory=dict)


@dataclass
class TimeSpec:
    mode: str  # relative | absolute
    duration_ms: Optional[int] = None
    time_from: Optional[int] = None
    time_to: Optional[int] = None


@dataclass
class ViewDefinition:
    view_id: str
    name: str
    tiles: list[TilePlacement]
    time_spec: TimeSpec
    created_at: int = 0
    updated_at: int = 0


@dataclass
class ResolvedTile:
    widget_kind: str
    grid_pos: tuple[int, int, int, int]
    filter: EventFilter
    widget_options: dict[str, Any]


@dataclass
class ResolvedView:
    view_id: str
    name: str
    tiles: list[ResolvedTile]
    time_from: int
    time_to: int


def validate_view(view: ViewDefinition) -> list[str]:
    v: list[str] = []
    if not view.name:
        v.append("name must be non-empty")
    spec = view.time_spec
    if spec.mode == "relative":
        if not isinstance(spec.duration_ms, int) or spec.duration_ms <= 0:
            v.append("relative time_spec requires a positive duration_ms")
    elif spec.mode == "absolute":
        if spec.time_from is None or spec.time_to is None or spec.time_from >= spec.time_to:
            v.append("absolute time_spec requires time_from < time_to")
    else:
        v.append(f"unknown time_spec mode {spec.mode!r}")
    rects = []
    for i, tile in enumerate(view.tiles):
        if tile.widget_kind not in WIDGET_KINDS:
            v.append(f"tile {i}: unknown widget_kind {tile.widget_kind!r}")
        col, row, w, h = tile.grid_pos
        if not (0 <= col < GRID_COLUMNS and row >= 0 and w >= 1 and h >= 1 and col + w <= GRID_COLUMNS):
            v.append(f"tile {i}: grid_pos outside the {GRID_COLUMNS}-column grid")
            continue
        rects.append((i, col, row, w, h))
    for idx, (i, c1, r1, w1, h1) in enumerate(rects):
        for j, c2, r2, w2, h2 in rects[idx + 1:]:
            if c1 < c2 + w2 and c2 < c1 + w1 and r1 < r2 + h2 and r2 < r1 + h1:
                v.append(f"tiles {i} and {j} overlap")
    return v


def view_to_doc(view: ViewDefinition) -> dict[str, Any]:
    spec = view.time_spec
    if spec.mode == "relative":
        spec_doc: dict[str, Any] = {"mode": "relative", "duration_ms": spec.duration_ms}
    else:
        spec_doc = {"mode": "absolute", "time_from": spec.time_from, "time_to": spec.time_to}
    return {
        "view_id": view.view_id,
        "name": view.name,
        "time_spec": spec_doc,
        "tiles": [
            {
                "widget_kind": t.widget_kind,
                "grid_pos": list(t.grid_pos),
                "widget_filter": t.widget_filter.to_doc(),
                "widget_options": t.widget_options,
            }
            for t in view.tiles
        ],
        "created_at": view.created_at,
        "updated_at": view.updated_at,
    }


def view_from_doc(doc: dict[str, Any]) -> ViewDefinition:
    spec_doc = doc["time_spec"]
    spec = TimeSpec(
        mode=spec_doc["mode"],
        duration_ms=spec_doc.get("duration_ms"),
        time_from=spec_doc.get("time_from"),
        time_to=spec_doc.get("time_to"),
    )
    tiles = [
        TilePlacement(
            widget_kind=t["widget_kind"],
            grid_pos=tuple(t["grid_pos"]),
            widget_filter=EventPredicate.from_doc(t.get("widget_filter", {})),
            widget_options=dict(t.get("widget_options", {})),
        )
        for t in doc.get("tiles", [])
    ]
    return ViewDefinition(
        view_id=doc["view_id"],
        name=doc["name"],
        tiles=tiles,
        time_spec=spec,
        created_at=doc.get("created_at", 0),
        updated_at=doc.get("updated_at", 0),
    )


def resolve_view(view: ViewDefinition, now: int) -> ResolvedView:
    """Pure resolution of the view's time spec to absolute [from, to)."""
    spec = view.time_spec
    if spec.mode == "relative":
        assert spec.duration_ms is not None
        time_from, time_to = now - spec.duration_ms, now
    else:
        assert spec.time_from is not None and spec.time_to is not None
        time_from, time_to = spec.time_from, spec.time_to
    tiles = [
        ResolvedTile(
            widget_kind=t.widget_kind,
            grid_pos=t.grid_pos,
            filter=EventFilter(
                time_from=time_from,
                time_to=time_to,
                source_kinds=t.widget_filter.source_kinds,
                categories=t.widget_filter.categories,
                asset_ids=t.widget_filter.asset_ids,
                severity_min=t.widget_filter.severity_min,
                text_query=t.widget_filter.text_query,
            ),
            widget_options=t.widget_options,
        )
        for t in view.tiles
    ]
    return ResolvedView(view_id=view.view_id, name=view.name, tiles=tiles, time_from=time_from, time_to=time_to)


class ViewsService:
    """CRUD over the store's view records with optimistic concurrency."""

    def __init__(self, store, clock: Callable[[], int]):
        self.store = store
        self.clock = clock

    def save_view(self, view: ViewDefinition) -> str:
        violations = validate_view(view)
        if violations:
            raise ViewError(f"invalid view: {violations}")
        docs = self.store.get_view_docs()
        by_name = {d["name"]: d for d in docs.values()}
        now = self.clock()
        if not view.view_id:
            if view.name in by_name:
                raise DuplicateViewNameError(f"view name {view.name!r} exists")
            view.view_id = uuid.uuid4().hex
            view.created_at = now
            view.updated_at = now
        else:
            current = docs.get(view.view_id)
            if current is None:
                raise ViewNotFoundError(f"unknown view {view.view_id!r}")
            if view.updated_at != current["updated_at"]:
                raise ViewConflictError("stale view version")
            clash = by_name.get(view.name)
            if clash is not None and clash["view_id"] != view.view_id:
                raise DuplicateViewNameError(f"view name {view.name!r} exists")
            view.created_at = current["created_at"]
            view.updated_at = max(now, current["updated_at"] + 1)
        self.store.put_view(view_to_doc(view))
        return view.view_id

    def load_view(self, ref: str) -> ViewDefinition:
        docs = self.store.get_view_docs()
        doc = docs.get(ref)
        if doc is None:
            doc = next((d for d in docs.values() if d["name"] == ref), None)
        if doc is None:
            raise ViewNotFoundError(f"unknown view {ref!r}")
        return view_from_doc(doc)

    def list_views(self) -> list[dict[str, Any]]:
        docs = self.store.get_view_docs()
        return sorted(
            (
                {
                    "view_id": d["view_id"],
                    "name": d["name"],
                    "tiles": len(d.get("tiles", [])),
                    "updated_at": d["updated_at"],
                }
                for d in docs.values()
            ),
            key=lambda s: s["name"],
        )

    def delete_view(self, view_id: str) -> None:
        if view_id not in self.store.get_view_docs():
            raise ViewNotFoundError(f"unknown view {view_id!r}")
        self.store.delete_view(view_id)

    def export_views(self) -> str:
        docs = self.store.get_view_docs()
        views = sorted(docs.values(), key=lambda d: d["name"])
        return json.dumps({"views": views}, indent=2, sort_keys=True) + "\n"

    def import_views(self, text: str) -> int:
        doc = json.loads(text)
        count = 0
        for entry in doc.get("views", []):
            view = view_from_doc(entry)
            violations = validate_view(view)
            if violations:
                raise ViewError(f"invalid view {view.name!r}: {violations}")
            self.store.put_view(view_to_doc(view))
            count += 1
        return count
