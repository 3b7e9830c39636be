"""Verification and robust policy synthesis for Markov models."""
__version__ = "0.1.0"
