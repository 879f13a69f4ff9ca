"""hintpipe: turn agent failures into hints, teach with one-shot retrieval, emit distillation data."""

__version__ = "0.1.0"
