"""Graph-augmented fault diagnosis for rotating-machinery vibration signals.

Stages: entropy-optimized segmentation, time/frequency features, kNN graphs
over feature vectors, graph-metric augmentation, classical classifiers and
the evaluation protocol around them.
"""

__version__ = "0.1.0"
