from .errors import MorseActionError
from .manifold import BoundaryCondition, ChartedManifold, check_ps_admissible
from .lagrangian import LagrangianModel, SampleBox, check_derivatives, check_growth_conditions
from .pathspace import DiscretePath, action, gradient, hessian, hessian_continuity_probe
from .critical import CriticalPoint, SeedStrategy, certify_L0, morse_index, newton_solve, seed_sweep
from .pseudograd import assemble_field, flow, unstable_basis
from .morse_complex import (
    MorseComplexData,
    HomologyResult,
    boundary_matrices,
    collect_generators,
    compare_reference,
    count_connections,
    homology,
)
from .smith import smith_normal_form
