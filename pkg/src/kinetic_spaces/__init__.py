"""
Intrinsic geometry, kernels and function spaces of kinetic Kolmogorov operators.

The operator ``K = 1/2 sum_{i<=d} d_{x_i}^2 + <Bx, grad_x> - d_t`` with a
block nilpotent drift ``B`` carries a group law, a dilation family and a
homogeneous norm (:mod:`.structure`), and an explicit Gaussian fundamental
solution (:mod:`.heat_kernel`). On top of these the package provides grid and
analytic function representations (:mod:`.grid`, :mod:`.fields`), intrinsic
Sobolev and Hoelder quasi-norms (:mod:`.norms`), Taylor polynomials,
mollifiers and horizontal chains (:mod:`.taylor`), rearrangements, Lorentz
norms and level truncations (:mod:`.lorentz`), and the experiment harness
behind the ``kspaces`` command (:mod:`.lab`, :mod:`.cli`).

Numeric hot loops run in a compiled extension when it is built; set
``KINETIC_SPACES_BACKEND=python`` to force the numpy fallback.
"""

from importlib.metadata import PackageNotFoundError, version

from . import backend
from .structure import (
    Geometry, GroupPoint, MultiIndex, check_hormander, compose, dilate, homogeneous_norm, invert, langevin,
    load_operator, resolve_operator,
)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

BACKEND = backend.NAME

__all__ = [
    "BACKEND", "Geometry", "GroupPoint", "MultiIndex", "check_hormander", "compose", "dilate",
    "homogeneous_norm", "invert", "langevin", "load_operator", "resolve_operator",
]
