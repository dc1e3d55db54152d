"""Matrix-product-state simulation of broadband quantum optics in 1D nonlinear waveguides."""

from __future__ import annotations

__version__ = "0.1.0"

from .exceptions import (
    CutoffError,
    InvariantBreach,
    LeakageError,
    SimulationError,
    TruncationBudgetExceeded,
)
from .mps import MpsState, TruncationPolicy, coherent_product_state, vacuum_state

__all__ = [
    "__version__",
    "CutoffError",
    "InvariantBreach",
    "LeakageError",
    "MpsState",
    "SimulationError",
    "TruncationBudgetExceeded",
    "TruncationPolicy",
    "coherent_product_state",
    "vacuum_state",
]
