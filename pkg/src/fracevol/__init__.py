"""Subordinated solution operators for non-autonomous time-fractional
semilinear Cauchy problems, with independent validators."""

__version__ = "0.1.0"
