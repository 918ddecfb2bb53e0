"""Two-time-scale population-based training: simulators, PDE solvers, diagnostics."""

__version__ = "0.1.0"
