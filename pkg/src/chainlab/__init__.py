"""chainlab: retrieve, generalize, score, and evaluate two-hop reasoning chains."""

__version__ = "0.1.0"
