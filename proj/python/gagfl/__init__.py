"""Grouped adaptive group fused Lasso for panel data with latent groups and group-specific breaks."""

from ._core import (
    FitResult,
    IoError,
    NumericalError,
    Panel,
    ParseError,
    SelectionReport,
    SimulatedPanel,
    ValidationError,
    evaluate,
    fit,
    gfe,
    hausdorff,
    load_panel,
    misclassification,
    select_groups,
    simulate,
)

__all__ = [
    "FitResult",
    "IoError",
    "NumericalError",
    "Panel",
    "ParseError",
    "SelectionReport",
    "SimulatedPanel",
    "ValidationError",
    "evaluate",
    "fit",
    "gfe",
    "hausdorff",
    "load_panel",
    "misclassification",
    "select_groups",
    "simulate",
]
