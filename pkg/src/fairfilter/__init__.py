"""Drop cross-group near-duplicate rows with opposite outcomes, reweigh, train and audit."""

__version__ = "0.1.0"
