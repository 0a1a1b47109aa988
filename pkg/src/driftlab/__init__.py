"""driftlab: numerical experiments on strong-noise regularization of SDEs.

The package simulates dX_t = b(t, X_t) dt + dW_t for bounded, possibly
merely measurable drifts b and measures the quantities that make solutions
unique path by path: exponential moments of derivative functionals,
sub-Gaussian tails of shifted drift integrals, entropy of Lipschitz-ball
nets, gradient-tamed coordinate changes, flow regularity, and dyadic
uniqueness certificates.
"""

from __future__ import annotations

__version__ = "0.1.0"
