"""Convex-body rounding and volume estimation.

Rounds a convex body to near-isotropic position by iterative
eigenvalue-scaling over ball intersections, then estimates its volume
with a Gaussian-cooling annealing schedule.  Membership oracles,
polytope-specialized ball-walk kernels, and independent verification
oracles live in their own submodules.
"""

from volumetrica.bodies import (
    AffineMap,
    Ball,
    BallIntersectedBody,
    Cube,
    Polytope,
    Simplex,
    TransformedBody,
)
from volumetrica.pipeline import VolumeReport, compute_volume
from volumetrica.rounding import IsotropizeConfig, iterative_isotropization

__all__ = [
    "AffineMap",
    "Ball",
    "BallIntersectedBody",
    "Cube",
    "IsotropizeConfig",
    "Polytope",
    "Simplex",
    "TransformedBody",
    "VolumeReport",
    "compute_volume",
    "iterative_isotropization",
]

__version__ = "0.1.0"
