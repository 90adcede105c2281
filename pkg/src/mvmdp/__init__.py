"""Finite measure-valued MDP approximations for mean-field team control."""
__version__ = "0.1.0"
