"""Cost-sensitive regularization workbench for word-wise event-trigger classification."""

__version__ = "0.1.0"

NIL = "NIL"
