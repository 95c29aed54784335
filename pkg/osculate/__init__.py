"""Osculating groups, parabolic arrows and H-adapted exponential maps on filtered manifolds"""
__version__ = "0.1.0"
