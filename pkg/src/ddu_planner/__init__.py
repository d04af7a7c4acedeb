"""Hydrogen refueling infrastructure planning under decision-dependent
demand uncertainty: coupled traffic/hydrogen/power dispatch, scenario
engine with investment-shaped probabilities, distributionally robust
assembly over a 1-norm transport ball, and verification oracles."""

__version__ = "0.1.0"
