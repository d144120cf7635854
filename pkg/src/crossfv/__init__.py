"""Structure-preserving finite volumes for nonlocal cross-diffusion systems."""

from .errors import (
    ConfigurationError,
    CrossFVError,
    NumericalStateError,
    SolverFailure,
    StepFailure,
    UsageError,
)
from .harness import (
    ErrorTable,
    ExperimentConfig,
    coarsen,
    dominant_mode,
    error_norms,
    fit_rate,
    parse_config,
    run_experiment,
)
from .initial import BoxIC, ConstantIC, TrigIC, project_initial
from .kernels import (
    DiscreteKernel,
    Extension,
    Gaussian,
    KernelSpec,
    TopHat,
    c_star,
    c_star_report,
    check_psd,
    convolve,
    discretize,
    potential_implicit,
    potential_midpoint,
    small_mass_threshold,
)
from .mesh import EdgeId, Mesh, MeshSpec, build_mesh, edges, neighbor
from .scheme import (
    Coupling,
    LinearSolverConfig,
    LinearSystem,
    SchemeConfig,
    State,
    advance,
    assemble,
    edge_flux,
    run,
    solve_linear,
)
from .weights import WeightKind, eval_B, eval_B_kappa
from .diagnostics import (
    StepReport,
    entropy_boltzmann,
    entropy_rao,
    fisher_information,
    productions,
    verify_step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
