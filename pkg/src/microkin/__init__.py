"""Geometrically exact kinematics of micro-structured continua on discretized bodies."""
from .ambient import AMBIENT, GalileanElement, random_galilean, stabilizer_residuals
from .body import BodyGrid, fd_gradient, reference_connection
from .errors import *  # noqa: F401,F403
from .expr import Expression, parse_expression
from .geometry import (
    AffineConnection,
    SolderForm,
    block_decompose,
    block_recompose,
    compatibility_residual,
    compatible_pseudo_metric,
    pseudo_metric_kernel,
)
from .holonomy import covariant_derivative, defect_density_field, loop_defect, parallel_transport
from .invariance import (
    act,
    frame_invariance_deviation,
    matrix_in_reference,
    minimality_counterexample,
    orbits_equal,
    vectorial_reconstruction,
)
from .placement import (
    BUILTIN_FAMILIES,
    FirstOrderPlacement,
    PunctualPlacement,
    builtin_placement,
    holonomic_lift,
    random_placement,
    validate_embedding,
    validate_physically_acceptable,
)
from .pullback import (
    decompose_pseudo_metric,
    eringen_strain_measures,
    material_connection,
    noslip_connection,
    principal_invariants,
    pull_back_connection,
    pull_back_pseudo_metric,
    pull_back_solder,
    reconstruct_pseudo_metric,
)
from .scenario import Scenario, run_scenario

__version__ = "0.1.0"
