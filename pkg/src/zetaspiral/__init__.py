"""High-precision dynamics of the Riemann zeta function near its zeros."""

__version__ = "0.1.0"
