"""Finite-element spaces, quadrature and assembly for the p-Stokes problem."""
from .assembly import (
    DEFAULT_QUAD_DEGREE,
    PhysicalParams,
    SingularViscosityError,
    assemble_divergence,
    assemble_load,
    assemble_mass,
    assemble_operator,
    assemble_rhs,
    assemble_scaled_mass,
    assemble_vector_laplacian,
    cell_data,
    pressure_functional,
    qp_viscosity,
    strain_rate_maxnorm,
    strain_rates,
    velocity_gradients,
    viscosity,
    viscous_residual,
)
from .boundary import (
    AssembledSystem,
    BoundaryConditions,
    GeometryError,
    apply_constraints,
    dirichlet_data,
    project_out_constant,
    rotate_slip_dofs,
    rotation_matrix,
    slip_normals,
)
from .elements import ElementFamily, tabulate
from .quadrature import QuadratureRule, triangle_rule
from .spaces import FunctionSpace, pressure_space, velocity_space

__all__ = [name for name in dir() if not name.startswith("_")]
