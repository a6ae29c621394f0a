"""Cross-curvature and regularity diagnostics for optimal transport costs."""

__version__ = "0.1.0"
