"""Numerics for the double-tower bubble construction of critical polyharmonic equations."""

from .bubble import (
    Bubble,
    KernelBasis,
    SpaceSpec,
    eval_bubble,
    eval_kernel,
    radial_polyharmonic_residual,
    single_bubble_mass,
    validate_space,
)

__version__ = "0.1.0"

__all__ = [
    "Bubble",
    "KernelBasis",
    "SpaceSpec",
    "eval_bubble",
    "eval_kernel",
    "radial_polyharmonic_residual",
    "single_bubble_mass",
    "validate_space",
]
