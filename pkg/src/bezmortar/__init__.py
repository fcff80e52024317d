"""Multi-patch isogeometric analysis with locally condensed interface coupling.

The package couples nonconforming tensor-product NURBS patches through a
local dual basis built from element extraction and projection.  Interface
constraints can be condensed out of an assembled system or compiled directly
into weakly continuous element extraction operators; both routes produce
identical linear systems.
"""

from .coupling import (
    CompositionalMap,
    Condenser,
    CouplingMatrix,
    InterfaceCoupling,
    InterfaceGeometryError,
    InterfaceSpec,
    RefinedDualSpace,
    assemble_coupling,
    assemble_saddle,
    build_interface_coupling,
    build_phi,
    condense,
    project_master_knots,
    refine_dual_space,
)
from .dualbasis import (
    DualBasis,
    DualElement,
    bernstein_gramian,
    dual_extraction,
    physical_dual,
    projection_weights,
    rational_dual,
    reconstruction_operator,
)
from .fem import (
    MaterialModel,
    SolutionField,
    assemble_linear_elasticity,
    assemble_neo_hookean,
    assemble_neumann,
    assemble_poisson,
    apply_dirichlet,
    boundary_projection,
    dirichlet_rows,
    l2_error,
    neo_hookean_step,
    newton_load_stepping,
)
from .linsys import AssembledSystem, NumericalError, linear_solve
from .model import Cell, ExtractedMesh, MultiPatchModel, single_patch_mesh
from .splines import (
    BernsteinInterval,
    ElementExtraction,
    KnotVector,
    OutOfDomainError,
    Patch2D,
    bernstein_basis,
    bernstein_derivatives,
    bernstein_transform,
    bezier_extraction,
    bspline_basis,
    bspline_derivatives,
    greville_abscissae,
    knot_insert,
    refinement_operator,
    uniform_open_knots,
)
from .weakmesh import (
    build_weak_mesh,
    interface_operator_report,
    refined_weak_interface_operator,
    tensor_weak_patch_operator,
    weak_interface_operator,
)

__version__ = "0.1.0"
