"""Content-addressed position-independent KV cache simulator."""

__version__ = "0.1.0"
