"""Feature-extraction bridge: serves pooled tiny-transformer embeddings of
224x224 quality maps to a host process over a stdin/stdout line protocol.
"""

__version__ = "0.1.0"
