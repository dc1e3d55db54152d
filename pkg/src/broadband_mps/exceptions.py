"""Exception hierarchy shared by the simulation modules."""

from __future__ import annotations


class SimulationError(RuntimeError):
    """Base class for failures detected while simulating."""


class CutoffError(SimulationError, ValueError):
    """A Fock cutoff is too small for the requested occupation."""


class TruncationBudgetExceeded(SimulationError):
    """Cumulative discarded weight crossed the configured hard limit."""


class LeakageError(SimulationError):
    """Fock-truncation leakage during demultiplexing exceeded the allowed bound."""


class InvariantBreach(SimulationError):
    """A conserved quantity drifted beyond tolerance during a run."""
