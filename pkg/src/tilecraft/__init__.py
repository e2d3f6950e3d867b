"""Discrete time-frequency analysis of the Carleson operator on a sampled line."""

import os

# Single-threaded BLAS keeps floating-point reductions reproducible.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
