"""Spectral Galerkin lab for 3D Navier-Stokes with nonlinear viscosity
nu + nu0 ||grad u||^2 on the periodic box: integration, a priori estimate
verification, pullback attractor estimates and tangent-space dimension tools."""

__version__ = "0.1.0"
