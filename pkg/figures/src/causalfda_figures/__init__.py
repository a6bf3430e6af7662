"""Batch figure scripts for causalfda simulation outputs."""

__version__ = "0.1.0"

from .io import SchemaError, load_dump, load_results
from .plots import (
    coverage_table,
    make_all,
    plot_band,
    plot_coverage,
    plot_mse_box,
    plot_mse_vs_alpha,
)
