"""Stability of standing pulses in skew-gradient reaction-diffusion systems."""

__version__ = "0.1.0"
