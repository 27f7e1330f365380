"""
fpld: Franz-Parisi potentials and low-degree estimation

Numerical toolkit relating the annealed Franz-Parisi potential of Gaussian
additive models to low-degree polynomial MMSE: overlap quantiles, FP
potentials, cumulant upper bounds, Hermite-estimator lower bounds and exact
small-instance oracles.
"""

__version__ = "1.0.0"
__author__ = "fpld developers"
