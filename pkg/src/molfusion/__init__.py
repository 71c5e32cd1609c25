"""Multi-view molecular property prediction from fused graph and sequence embeddings."""

__version__ = "0.1.0"
