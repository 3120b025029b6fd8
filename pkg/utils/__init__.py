# utils/__init__.py
"""
Shared helpers: resource lookup and per-run random streams.
"""
