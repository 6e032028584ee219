"""Fourth-order SBP wave solvers with ghost points, SAT penalties and mesh refinement."""

__version__ = "0.1.0"
