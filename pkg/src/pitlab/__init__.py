"""Permutation-invariant training lab: PIT baselines, dynamic sample dropout,
layer-wise optimisation, and label-assignment switching diagnostics."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
