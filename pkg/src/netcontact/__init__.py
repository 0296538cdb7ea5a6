"""Contact tracing over enterprise WiFi association logs."""

__version__ = "0.1.0"
