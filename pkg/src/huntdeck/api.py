"""The HTTP boundary: queries, aggregates, tiles, views, live updates.

Every endpoint is a pure projection of store state plus configuration;
nothing here mutates events. Errors are {code, message, detail} documents
with a matching HTTP status. Routes are versioned under /api/v1.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .model import (
    AlertRecord,
    EventFilter,
    SecurityEvent,
    encode_alert,
    encode_event,
)
from .store import (
    CursorMismatchError,
    EventStore,
    NotFoundError,
    StoreError,
    WindowNotStableError,
)
from .timeline import TimelineError, TimelineSeries, auto_interval, bucketize, compare_windows
from .views import (
    DuplicateViewNameError,
    ViewConflictError,
    ViewError,
    ViewNotFoundError,
    ViewsService,
    resolve_view,
    view_from_doc,
    view_to_doc,
)

logger = logging.getLogger(__name__)

MAX_RANGE = (1, 1 << 60)

TILE_KIND_BY_SOURCE_KIND = {
    "deception": "honeypot",
    "cti": "cti_platform",
    "log": "host_monitoring",
    "siem": "siem",
    "ndr": "ndr",
    "edr": "generic",
}


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: Any = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail

    def doc(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "detail": self.detail}


def _int_param(params, name: str, default: Optional[int] = None, required: bool = False) -> Optional[int]:
    raw = params.get(name)
    if raw is None or raw == "":
        if required:
            raise ApiError(400, "missing_param", f"query parameter {name!r} is required (time range required)")
        return default
    try:
        return int(raw)
    except ValueError:
        raise ApiError(400, "bad_param", f"query parameter {name!r} must be an integer", raw)


def _set_param(params, name: str) -> Optional[frozenset[str]]:
    raw = params.get(name)
    if raw is None or raw == "":
        return None
    return frozenset(part.strip() for part in raw.split(",") if part.strip())


def _filter_from_params(params, require_time: bool = True) -> EventFilter:
    time_from = _int_param(params, "time_from", required=require_time, default=MAX_RANGE[0])
    time_to = _int_param(params, "time_to", required=require_time, default=MAX_RANGE[1])
    flt = EventFilter(
        time_from=time_from,
        time_to=time_to,
        source_kinds=_set_param(params, "source_kinds"),
        categories=_set_param(params, "categories"),
        asset_ids=_set_param(params, "asset_ids"),
        severity_min=_int_param(params, "severity_min"),
        text_query=params.get("q") or None,
    )
    violations = flt.validate()
    if violations:
        raise ApiError(400, "invalid_filter", "; ".join(violations))
    return flt


def event_doc(ev: SecurityEvent) -> dict[str, Any]:
    return json.loads(encode_event(ev))


def alert_doc(alert: AlertRecord) -> dict[str, Any]:
    return json.loads(encode_alert(alert))


def series_doc(series: TimelineSeries) -> dict[str, Any]:
    return {
        "bucket_width_ms": series.bucket_width_ms,
        "start": series.start,
        "buckets": [{"bucket_start": b.bucket_start, "counts": b.counts} for b in series.buckets],
        "total": series.total,
    }


class StreamHub:
    """Broadcast fan-out of appended alerts with per-subscriber bounded buffers."""

    def __init__(self, store: EventStore, max_buffer: int = 256):
        self.store = store
        self.max_buffer = max_buffer
        self._subs: list[queue.Queue] = []
        self._lock = threading.Lock()
        store.add_alert_listener(self._on_alert)

    def _on_alert(self, alert: AlertRecord, seq: int) -> None:
        with self._lock:
            subs = list(self._subs)
        for q in subs:
            try:
                q.put_nowait(("alert", seq, alert_doc(alert)))
            except queue.Full:
                try:
                    q.put_nowait(None)  # poison: subscriber overflowed
                except queue.Full:
                    pass

    def attach(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=self.max_buffer)
        with self._lock:
            self._subs.append(q)
        return q

    def detach(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subs:
                self._subs.remove(q)


@dataclass
class ApiConfig:
    cti_base_url: Optional[str] = None
    staleness_horizon_ms: int = 900_000
    heartbeat_s: float = 15.0
    static_dir: Optional[str] = None


def create_app(
    store: EventStore,
    views: Optional[ViewsService] = None,
    ingestion=None,
    config: Optional[ApiConfig] = None,
    clock: Callable[[], int] = lambda: int(time.time() * 1000),
) -> FastAPI:
    config = config or ApiConfig()
    views = views or ViewsService(store, clock)
    hub = StreamHub(store)
    app = FastAPI(title="huntdeck", docs_url=None, redoc_url=None)
    app.state.store = store
    app.state.hub = hub

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.doc())

    def error(status: int, code: str, message: str, detail: Any = None) -> ApiError:
        return ApiError(status, code, message, detail)

    def translate(exc: Exception) -> ApiError:
        if isinstance(exc, CursorMismatchError):
            return error(400, "cursor_mismatch", str(exc))
        if isinstance(exc, WindowNotStableError):
            return error(409, "window_not_stable", str(exc))
        if isinstance(exc, NotFoundError):
            return error(404, "not_found", str(exc))
        if isinstance(exc, StoreError):
            msg = str(exc)
            if "page_size" in msg:
                return error(422, "page_size_out_of_range", msg)
            return error(400, "invalid_request", msg)
        if isinstance(exc, TimelineError):
            return error(400, "invalid_window", str(exc))
        if isinstance(exc, ViewConflictError):
            return error(409, "view_conflict", str(exc))
        if isinstance(exc, DuplicateViewNameError):
            return error(409, "duplicate_view_name", str(exc))
        if isinstance(exc, ViewNotFoundError):
            return error(404, "not_found", str(exc))
        if isinstance(exc, ViewError):
            return error(400, "invalid_view", str(exc))
        logger.exception("unhandled error")
        return error(500, "internal", str(exc))

    # -- events ---------------------------------------------------------------

    @app.get("/api/v1/events")
    def get_events(request: Request):
        params = request.query_params
        flt = _filter_from_params(params)
        page_size = _int_param(params, "page_size", default=100)
        if page_size is None or not 1 <= page_size <= 1000:
            raise error(422, "page_size_out_of_range", "page_size must be between 1 and 1000")
        order = params.get("order", "ts_asc")
        try:
            page = store.query(flt, order=order, page_size=page_size, cursor=params.get("cursor"))
        except (StoreError, CursorMismatchError) as exc:
            raise translate(exc)
        return {
            "items": [event_doc(e) for e in page.items],
            "next_cursor": page.next_cursor,
            "total_estimate": page.total_estimate,
        }

    # -- timeline / compare ------------------------------------------------------

    @app.get("/api/v1/timeline")
    def get_timeline(request: Request):
        params = request.query_params
        flt = _filter_from_params(params)
        width = _int_param(params, "width_ms")
        try:
            if width is None:
                width = auto_interval(flt.time_from, flt.time_to)
            events = store.events_matching(flt)
            series = bucketize(events, flt.time_from, flt.time_to, width)
        except (TimelineError, StoreError) as exc:
            raise translate(exc)
        return series_doc(series)

    @app.get("/api/v1/compare")
    def get_compare(request: Request):
        params = request.query_params
        current_from = _int_param(params, "current_from", required=True)
        current_to = _int_param(params, "current_to", required=True)
        past_from = _int_param(params, "past_from", required=True)
        if current_from >= current_to:
            raise error(400, "invalid_window", "current window is empty")
        length = current_to - current_from
        past_to = _int_param(params, "past_to")
        if past_to is not None and past_to - past_from != length:
            raise error(400, "invalid_window", "windows must have equal length")
        if past_from + length > current_from:
            raise error(400, "invalid_window", "past window must be entirely older than the current one")
        width = _int_param(params, "width_ms")
        if width is None:
            width = auto_interval(current_from, current_to)
        base = _filter_from_params(params, require_time=False)
        cur_flt = _replace_time(base, current_from, current_to)
        past_flt = _replace_time(base, past_from, past_from + length)
        try:
            comp = compare_windows(
                store.events_matching(cur_flt),
                store.events_matching(past_flt),
                current_from,
                current_to,
                past_from,
                width,
            )
        except (TimelineError, StoreError) as exc:
            raise translate(exc)
        return {
            "current": series_doc(comp.current),
            "past": series_doc(comp.past),
            "deltas": {
                cat: {
                    "count_current": d.count_current,
                    "count_past": d.count_past,
                    "ratio": d.ratio,
                    "new": d.new,
                }
                for cat, d in comp.deltas.items()
            },
            "alignment_offset_ms": comp.alignment_offset_ms,
        }

    # -- topics / stix -------------------------------------------------------------

    @app.get("/api/v1/topics")
    def get_topics(request: Request):
        flt = _filter_from_params(request.query_params, require_time=False)
        try:
            events = store.events_matching(flt)
        except StoreError as exc:
            raise translate(exc)
        counts: dict[str, int] = {}
        for ev in events:
            key = str(ev.attributes.get("stix_type") or ev.category)
            counts[key] = counts.get(key, 0) + 1
        topics = [{"key": k, "count": n} for k, n in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))]
        return {"topics": topics, "total": sum(counts.values())}

    @app.get("/api/v1/stix/{stix_id}")
    def get_stix(stix_id: str):
        try:
            rec = store.get_stix(stix_id)
        except NotFoundError as exc:
            raise translate(exc)
        external_url = None
        if config.cti_base_url:
            external_url = config.cti_base_url.rstrip("/") + "/" + rec.stix_id
        return {
            "stix_id": rec.stix_id,
            "stix_type": rec.stix_type,
            "group": rec.group,
            "created": rec.created,
            "summary": rec.summary,
            "raw_document": rec.raw_document,
            "external_url": external_url,
        }

    # -- tiles ------------------------------------------------------------------------

    @app.get("/api/v1/tiles")
    def get_tiles():
        now = clock()
        stats = store.source_stats(now)
        # source kind comes from the most recent event of each source
        latest_kind: dict[str, tuple[int, str]] = {}
        for ev in store.events_matching(EventFilter(time_from=MAX_RANGE[0], time_to=MAX_RANGE[1])):
            cur = latest_kind.get(ev.source_id)
            if cur is None or ev.ts >= cur[0]:
                latest_kind[ev.source_id] = (ev.ts, ev.source_kind)
        source_ids = set(stats)
        if ingestion is not None:
            source_ids.update(cfg.source_id for cfg in ingestion.list_sources())
        tiles = []
        for source_id in sorted(source_ids):
            s = stats.get(source_id, {"last_event_ts": 0, "count_24h": 0, "severity_max_24h": 0})
            source_kind = latest_kind.get(source_id, (0, ""))[1]
            kind = TILE_KIND_BY_SOURCE_KIND.get(source_kind, "generic")
            if s["last_event_ts"] < now - config.staleness_horizon_ms:
                health = "stale"
            elif ingestion is not None and ingestion.source_health(source_id) == "degraded":
                health = "degraded"
            else:
                health = "ok"
            tiles.append(
                {
                    "tile_id": source_id,
                    "kind": kind,
                    "title": source_id,
                    "headline_count": s["count_24h"],
                    "severity_max_24h": s["severity_max_24h"],
                    "health": health,
                    "last_event_ts": s["last_event_ts"],
                }
            )
        return {"tiles": tiles}

    # -- alerts ------------------------------------------------------------------------

    @app.get("/api/v1/alerts")
    def get_alerts(request: Request):
        params = request.query_params
        time_from = _int_param(params, "time_from", default=MAX_RANGE[0])
        time_to = _int_param(params, "time_to", default=MAX_RANGE[1])
        page_size = _int_param(params, "page_size", default=100)
        if page_size is None or not 1 <= page_size <= 1000:
            raise error(422, "page_size_out_of_range", "page_size must be between 1 and 1000")
        try:
            page = store.query_alerts(
                time_from,
                time_to,
                rule_id=params.get("rule_id") or None,
                severity_min=_int_param(params, "severity_min"),
                order=params.get("order", "ts_desc"),
                page_size=page_size,
                cursor=params.get("cursor"),
            )
        except (StoreError, CursorMismatchError) as exc:
            raise translate(exc)
        return {
            "items": [alert_doc(a) for a in page.items],
            "next_cursor": page.next_cursor,
            "total_estimate": page.total_estimate,
        }

    # -- sessions (Fig. 3 widget data) ----------------------------------------------------

    @app.get("/api/v1/sessions")
    def get_sessions(request: Request):
        flt = _filter_from_params(request.query_params)
        try:
            rows = store.sessions_view(flt)
        except StoreError as exc:
            raise translate(exc)
        return {
            "sessions": [
                {
                    "user": r.user,
                    "login_ts": r.login_ts,
                    "logout_ts": r.logout_ts,
                    "asset_id": r.asset_id,
                    "session_id": r.session_id,
                }
                for r in rows
            ]
        }

    # -- views CRUD ------------------------------------------------------------------------

    @app.get("/api/v1/views")
    def list_views():
        return {"views": views.list_views()}

    @app.post("/api/v1/views", status_code=201)
    async def create_view(request: Request):
        doc = await _json_body(request)
        doc.setdefault("view_id", "")
        doc.setdefault("created_at", 0)
        doc.setdefault("updated_at", 0)
        try:
            view = view_from_doc(doc)
            view.view_id = ""
            view_id = views.save_view(view)
        except (ViewError, KeyError, TypeError) as exc:
            raise translate(exc if isinstance(exc, ViewError) else ViewError(f"malformed view document: {exc}"))
        return view_to_doc(views.load_view(view_id))

    @app.get("/api/v1/views/{view_id}")
    def get_view(view_id: str):
        try:
            return view_to_doc(views.load_view(view_id))
        except ViewNotFoundError as exc:
            raise translate(exc)

    @app.put("/api/v1/views/{view_id}")
    async def update_view(view_id: str, request: Request):
        doc = await _json_body(request)
        doc["view_id"] = view_id
        try:
            view = view_from_doc(doc)
            views.save_view(view)
            return view_to_doc(views.load_view(view_id))
        except (ViewError, KeyError, TypeError) as exc:
            raise translate(exc if isinstance(exc, ViewError) else ViewError(f"malformed view document: {exc}"))

    @app.delete("/api/v1/views/{view_id}", status_code=204)
    def remove_view(view_id: str):
        try:
            views.delete_view(view_id)
        except ViewNotFoundError as exc:
            raise translate(exc)
        return Response(status_code=204)

    @app.get("/api/v1/views/{view_id}/resolved")
    def get_resolved_view(view_id: str):
        try:
            view = views.load_view(view_id)
        except ViewNotFoundError as exc:
            raise translate(exc)
        resolved = resolve_view(view, clock())
        return {
            "view_id": resolved.view_id,
            "name": resolved.name,
            "time_from": resolved.time_from,
            "time_to": resolved.time_to,
            "tiles": [
                {
                    "widget_kind": t.widget_kind,
                    "grid_pos": list(t.grid_pos),
                    "filter": t.filter.to_doc(),
                    "widget_options": t.widget_options,
                }
                for t in resolved.tiles
            ],
        }

    # -- live stream ---------------------------------------------------------------------------

    @app.get("/api/v1/stream")
    def stream(request: Request):
        last_raw = request.headers.get("last-event-id") or request.query_params.get("last_event_id") or "0"
        try:
            last_seq = int(last_raw)
        except ValueError:
            raise error(400, "bad_param", "Last-Event-ID must be an integer")
        # Testing/automation aid: close the stream after N alert frames.
        max_events = _int_param(request.query_params, "max_events")

        def frames():
            q = hub.attach()
            delivered = 0
            try:
                replay_max = last_seq
                for alert, seq in store.alerts_after(last_seq):
                    replay_max = max(replay_max, seq)
                    yield _sse_frame("alert", alert_doc(alert), seq)
                    delivered += 1
                    if max_events is not None and delivered >= max_events:
                        return
                while True:
                    try:
                        item = q.get(timeout=config.heartbeat_s)
                    except queue.Empty:
                        yield _sse_frame("heartbeat", {"ts": clock()})
                        continue
                    if item is None:
                        yield _sse_frame("overflow", {"message": "updates dropped, refresh"})
                        return
                    kind, seq, doc = item
                    if seq <= replay_max:
                        continue
                    yield _sse_frame(kind, doc, seq)
                    delivered += 1
                    if max_events is not None and delivered >= max_events:
                        return
            finally:
                hub.detach(q)

        return StreamingResponse(frames(), media_type="text/event-stream")

    # -- static dashboard --------------------------------------------------------------------------

    if config.static_dir and Path(config.static_dir).is_dir():
        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="dashboard")
    else:

        @app.get("/")
        def root():
            return {"service": "huntdeck", "api": "/api/v1"}

    return app


def _replace_time(flt: EventFilter, time_from: int, time_to: int) -> EventFilter:
    return EventFilter(
        time_from=time_from,
        time_to=time_to,
        source_kinds=flt.source_kinds,
        categories=flt.categories,
        asset_ids=flt.asset_ids,
        severity_min=flt.severity_min,
        text_query=flt.text_query,
    )


async def _json_body(request: Request) -> dict[str, Any]:
    try:
        doc = await request.json()
    except Exception:
        raise ApiError(400, "bad_body", "request body must be a JSON object")
    if not isinstance(doc, dict):
        raise ApiError(400, "bad_body", "request body must be a JSON object")
    return doc


def _sse_frame(event: str, doc: dict[str, Any], seq: Optional[int] = None) -> str:
    lines = []
    if seq is not None:
        lines.append(f"id: {seq}")
    lines.append(f"event: {event}")
    lines.append(f"data: {json.dumps(doc, separators=(',', ':'))}")
    return "\n".join(lines) + "\n\n"
