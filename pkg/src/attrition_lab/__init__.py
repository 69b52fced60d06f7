"""Exact tools for games where investigating uses up the evidence.

Modules: ``supply`` and ``beliefs`` (signal counts and survival beliefs),
``thresholds`` (closed-form bounds), ``grid`` and ``designer`` (belief grid,
exit probabilities, compensation schemes), ``sim`` (Monte Carlo episodes),
``oracle`` (exhaustive equilibrium search in small finite games),
``witness`` (free signals with preference shocks) and ``cli``.
"""

__version__ = "0.1.0"
