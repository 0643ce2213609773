"""Solver settings shared by the equilibrium and stability layers."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SolverConfig:
    outer_gtol: float = 1e-10
    max_iterations: int = 500
    divergence_bound: float = 1e6
    residual_tol: float = 1e-6
    probe_samples: int = 8
