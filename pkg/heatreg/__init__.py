"""Scale- and weight-adaptive heatmap regression toolkit."""

__version__ = "0.1.0"
