"""Event coreference resolution: supervised clustering-friendly embeddings,
single-linkage chain building, and the standard coreference scorers."""

__version__ = "0.1.0"
