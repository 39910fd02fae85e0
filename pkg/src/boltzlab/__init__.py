"""Kinetic-theory numerics toolkit: two-body scattering for cutoff power-law
potentials, collision kernels, linearized Boltzmann and Landau operators,
grand-canonical Gibbs ensembles, event-driven torus dynamics, dynamical
cluster expansions, and linearized kinetic solvers."""

__version__ = "0.1.0"

from .core import (PhaseState, PotentialSpec, ScalingRegime, hamiltonian,
                   maxwellian, mean_free_path, scaling_from,
                   torus_displacement)

__all__ = ["PhaseState", "PotentialSpec", "ScalingRegime", "hamiltonian",
           "maxwellian", "mean_free_path", "scaling_from",
           "torus_displacement", "__version__"]
