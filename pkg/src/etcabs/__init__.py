"""Timed-automaton abstraction of perturbed event-triggered linear systems."""
__version__ = "0.1.0"
