"""Proportional fair scheduling under bursty on-off traffic.

Analytical throughput estimators (Gaussian approximation, multi-interference
analysis and their hybrid) plus a per-TTI simulator used as ground truth.
"""

from pfsburst.errors import CapacityError, ConfigError, ConvergenceError, DomainError

__version__ = "0.1.0"

__all__ = ["CapacityError", "ConfigError", "ConvergenceError", "DomainError", "__version__"]
