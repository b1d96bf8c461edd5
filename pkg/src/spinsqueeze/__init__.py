"""Spin squeezing in bimodal Bose-Einstein condensates.

Subpackages cover the stationary two-mode model with one-, two- and
three-body losses, coupled Gross-Pitaevskii dynamics over a family of Fock
states, the modulus-phase and breathe-together reductions, a Monte Carlo
wave-function validator, and a scenario-driven command line interface.
"""

__version__ = "0.1.0"
