"""Obstacles, proximity detection and constraint linearization."""

from .obstacles import (
    Box,
    Capsule,
    HalfSpace,
    Motion,
    Obstacle,
    Shape,
    Sphere,
    TriangleMeshShape,
    closest_point_on_triangle,
    quat_to_matrix,
    winding_number,
)
from .pipeline import (
    Binding,
    ConstraintSet,
    ContactPair,
    detect,
    gap_eval,
    linearize,
    orthonormal_tangents,
)
from .ncp import (
    ConstraintSolveInfo,
    DelassusOperator,
    LambdaState,
    NcpKind,
    Preconditioner,
    PreconditionerKind,
    conjugate_residual,
    cone_violation,
    delassus,
    indicators_and_compliance,
    mass_delassus_diagonal,
    ncp_value,
    preconditioner,
    project_multipliers,
    schur_apply,
    solve_constraints,
)
