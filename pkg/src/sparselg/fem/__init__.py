"""Finite-element model, materials, meshes and local projections."""

from .local import (
    LocalSolveStats,
    minimize_proximal,
    project_arap,
    project_corotational,
    project_neohookean,
)
from .materials import (
    Material,
    MaterialKind,
    closest_rotation,
    psi,
    psi_gradient,
    volume_ratio,
    volume_ratio_gradient,
)
from .mesh import (
    Mesh,
    ball_tet_mesh,
    boundary_faces,
    box_tet_mesh,
    cloth_mesh,
    load_mesh,
    read_obj,
    read_tetgen,
    tet_mesh,
    triangle_mesh,
    write_obj,
    write_tetgen,
)
from .model import (
    GRAVITY,
    DegenerateElementError,
    FemModel,
    GlobalSystem,
    assemble_rhs,
    build_full_system,
    build_system,
    elastic_matrix,
    energy_eval,
    gravity_forces,
    mass_matrix,
    predict,
    rhs_assembler,
    scalar_stiffness,
)
