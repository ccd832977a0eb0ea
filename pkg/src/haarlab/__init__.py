"""haarlab: hierarchical skill training with advantage-split auxiliary
rewards, desk-scale sparse-reward environments, and exact tabular
verification of the improvement guarantees."""

__version__ = "0.1.0"
