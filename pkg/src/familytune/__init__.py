"""Auto-tuning with subgraph families on a simulated backend."""

__version__ = "0.1.0"
