"""Large-deviation rates for holes inside high excursions of Gaussian fields."""

from ._parallel import get_threads, set_threads
from .dual import (
    AbcCoefficients,
    DualCandidate,
    DualResult,
    ab_functionals,
    abc_coefficients,
    check_first_order,
    check_nec_cond2,
    cond1_holds,
    dual_optimize,
    dual_value,
    sep_solve,
)
from .errors import ConvergenceError, DomainError, GaussHolesError, NumericalError
from .geometry import (
    DiscreteMeasure,
    I_integral,
    double_integral,
    sphere_energy,
    sphere_energy_grid,
    sphere_grid,
    sphere_potential,
)
from .isotropic import (
    IsotropicHoleSpec,
    H_rho,
    V_eval,
    W_rho,
    anywhere_rate,
    center_rate,
    min_int_condition,
    min_int_threshold,
    mixture_search,
    most_likely_radius,
    radius_profile,
)
from .kernels import (
    CovMatrix,
    IndexedCovariance,
    IsotropicKernel,
    TabulatedKernel,
    check_psd,
    eval_kernel,
    gram,
)
from .montecarlo import McConfig, McEstimate, estimate_psi, fit_rate, sample_field
from .primal import HoleProblem, PrimalSolution, rate_over_collection, solve_primal, witness_eval
from .shapes import ShapeFunction, a_term, b_term, isotropic_shape, limiting_shape, shape_from_primal

__version__ = "0.1.0"
