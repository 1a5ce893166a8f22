"""Numerical laboratory for pointwise Weyl laws with singular Kato-class potentials.

Modules
-------
kernels     special kernels (kappa, Jackson pair, Green's functions)
kato        radial singular potentials, Kato and L^q norms, Fourier data
spectral    torus / Dirichlet cube Galerkin spectra and spectral functions
correction  the correction term r_0, its Monte-Carlo evaluation, Xi_eta
tauberian   Stieltjes / Laplace transforms and Tauberian checks
experiment  config-driven experiment runner and remainder fits
cli         the weyl-cli command line
"""

__version__ = "0.1.0"

from .kernels import (
    QuadratureSpec,
    kappa,
    jackson_ell,
    jackson_K,
    free_green,
    torus_dlambda_green,
    stieltjes_weight_residual,
)
from .kato import RadialKatoPotential, GridPotential, eval_potential, kato_norm
from .spectral import TorusSpec, CubeSpec, Spectrum, counting, pointwise_density
from .correction import CorrectionParams, MCEstimate, r0n_estimate, xi_eta

__all__ = [
    "QuadratureSpec",
    "kappa",
    "jackson_ell",
    "jackson_K",
    "free_green",
    "torus_dlambda_green",
    "stieltjes_weight_residual",
    "RadialKatoPotential",
    "GridPotential",
    "eval_potential",
    "kato_norm",
    "TorusSpec",
    "CubeSpec",
    "Spectrum",
    "counting",
    "pointwise_density",
    "CorrectionParams",
    "MCEstimate",
    "r0n_estimate",
    "xi_eta",
]
