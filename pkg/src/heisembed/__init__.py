"""Snowflake embeddings of the Heisenberg group into Euclidean space, with certificates and distortion audits."""

__version__ = "0.1.0"
