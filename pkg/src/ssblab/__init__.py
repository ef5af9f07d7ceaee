"""Finite-size numerics for symmetric ground states, tunneling gaps and flea perturbations.

Models: a quartic double well (:mod:`ssblab.doublewell`), the open
transverse-field Ising chain (:mod:`ssblab.isingchain`) and the quantum
Curie-Weiss model (:mod:`ssblab.curieweiss`), plus a two-level flea model
(:mod:`ssblab.flea2x2`) and measure diagnostics (:mod:`ssblab.limits`).
"""
__version__ = "0.1.0"
