"""Multi-quantile regression: independent and jointly constrained LP fits, post-hoc
isotonization, gradient-trained composite models, and growth-percentile scoring."""

__version__ = "0.1.0"

from .core import (Dataset, Method, QuantileModel, QuantileSheet, SgpScore, TauGrid,  # noqa: E402
                   ValidationError, load_csv, reference_dataset, write_csv)

__all__ = [
    "Dataset", "Method", "QuantileModel", "QuantileSheet", "SgpScore", "TauGrid",
    "ValidationError", "load_csv", "reference_dataset", "write_csv", "__version__",
]
