"""Numerics for the cluster count of the Arratia flow.

Modules: ``analytic`` (closed forms), ``pfaffian`` (n-point densities and
factorial moments), ``simulator`` (coalescing particle Monte Carlo), ``stats``
(estimators and distribution distances) and ``harness`` (experiments, CLI).
"""

__version__ = "0.1.0"
