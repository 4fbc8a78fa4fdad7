"""Service configuration file loading (documented keys in docs/config.md)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .converters import DEFAULT_SEVERITY_TABLES
from .ingestion import SourceConfig


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8420
    data_dir: str = "data"
    cti_base_url: Optional[str] = None
    staleness_horizon_ms: int = 900_000
    grace_ms: int = 60_000
    rules_file: Optional[str] = None
    static_dir: Optional[str] = None
    heartbeat_s: float = 15.0
    severity_tables: dict[str, dict[str, int]] = field(default_factory=dict)
    sources: list[SourceConfig] = field(default_factory=list)

    def merged_severity_tables(self) -> dict[str, dict[str, int]]:
        merged = {k: dict(v) for k, v in DEFAULT_SEVERITY_TABLES.items()}
        for table, overrides in self.severity_tables.items():
            merged.setdefault(table, {}).update(overrides)
        return merged


def load_config(path: "str | Path") -> ServiceConfig:
    doc: dict[str, Any] = json.loads(Path(path).read_text(encoding="utf-8"))
    listen = doc.get("listen", {})
    sources = [
        SourceConfig(
            source_id=s["source_id"],
            mode=s["mode"],
            format_hint=s["format_hint"],
            endpoint=s["endpoint"],
            poll_interval_ms=s.get("poll_interval_ms", 60_000),
        )
        for s in doc.get("sources", [])
    ]
    return ServiceConfig(
        host=listen.get("host", "127.0.0.1"),
        port=listen.get("port", 8420),
        data_dir=doc.get("data_dir", "data"),
        cti_base_url=doc.get("cti_base_url"),
        staleness_horizon_ms=doc.get("staleness_horizon_ms", 900_000),
        grace_ms=doc.get("grace_ms", 60_000),
        rules_file=doc.get("rules_file"),
        static_dir=doc.get("static_dir"),
        heartbeat_s=doc.get("heartbeat_s", 15.0),
        severity_tables=doc.get("severity_tables", {}),
        sources=sources,
    )
