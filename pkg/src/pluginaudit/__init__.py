"""Security auditing toolkit for LLM plugin stores.

Three analysis layers over a plugin-store corpus: manifest exposure
discovery, API authentication probing with token-case classification, and
metadata consistency analysis; plus OAuth scope-risk categorization,
snapshot diffing, and a deterministic offline fixture store.
"""

__version__ = "0.1.0"
