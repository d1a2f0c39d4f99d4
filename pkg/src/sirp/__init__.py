"""Self-interacting random processes on finite state spaces."""

__version__ = "0.1.0"
