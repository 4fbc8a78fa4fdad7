"""huntdeck: security-telemetry ingestion and query service for threat hunting."""

__version__ = "0.1.0"
