"""porc: desk-scale self-supervised pathology pipeline and benchmark harness."""

__version__ = "0.1.0"
