"""Mixed-dimensional mixed finite elements for Darcy flow in fractured
porous media, with nodal auxiliary-space and block preconditioners.

Subpackages are organized bottom-up: ``sparsela`` (CSR linear algebra),
``mdgeom``/``mdmesh`` (geometry and matched meshes), ``mdfem`` (discrete
mixed-dimensional form spaces and operators), ``solvers`` (Krylov, smoothers,
UA-AMG, Lanczos), ``mdprecond`` (auxiliary-space and block preconditioners),
``darcy`` (the saddle-point flow problem) and ``cli`` (benchmark harness).
"""

__version__ = "0.1.0"

from .kernels import BACKEND as kernel_backend  # noqa: F401
