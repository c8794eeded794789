"""Developmental vocal-learning model: SOM encoder, growing memory layer and
two imitation modes (continual learning and compositional optimization)."""

__version__ = "0.1.0"
