"""Adaptive P1 finite elements for the integral fractional Laplacian in 2D.

Subpackages follow the pipeline: mesh (conforming triangulations and
newest-vertex bisection), quadrature (singular pair rules and weighted
element integrals), assembly (dense energy matrices and load vectors),
solver (SPD solves), estimator (two-level indicators and Doerfler marking),
harness (the solve-estimate-mark-refine driver and CSV output), and
diagnostics (weighted-norm equivalence reports).
"""

__version__ = "0.1.0"
