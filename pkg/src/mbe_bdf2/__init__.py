"""Variable-step BDF2 solver for the molecular beam epitaxy model without slope selection."""

from .adaptive import AdaptiveConfig, adaptive_step, run_adaptive, tau_ada
from .estimator import AdaptiveBDF2MBESolver, BDF2MBESolver
from .grid import GridSpec
from .kernels import (
    Bdf2Kernels,
    DocKernelTable,
    StabilityError,
    apply_d2,
    bdf2_coefficients,
    compute_m_r,
    doc_table_closed_form,
    doc_table_recursive,
    kernel_matrices,
    quadratic_form_lower_bound_check,
    verify_orthogonality,
)
from .model import (
    MbeParams,
    discrete_energy,
    force_vector,
    manufactured_forcing,
    manufactured_solution,
    modified_energy,
    benchmark_initial_condition,
    roughness,
)
from .report import RunReport
from .stepper import (
    FixedPointError,
    SimState,
    SolverConfig,
    StepConditionError,
    StepSizeWarning,
    bdf1_step,
    bdf2_step,
    run_simulation,
)
from .time_mesh import (
    R_S,
    TimeMesh,
    check_energy_step_restriction,
    check_s1,
    check_s2,
    random_mesh,
    random_s1_mesh,
    uniform_mesh,
)

__version__ = "0.1.0"
