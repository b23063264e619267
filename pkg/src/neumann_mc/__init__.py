"""Monte Carlo approximations of Neumann problems on the square."""
from .estimators import (BiasMetrics, McSummary, ParticleCloud, bias_metrics, fit_slope,
                         monte_carlo, sample_invariant_path, sample_invariant_uniform,
                         tcheb_grid, tcheb_points, variance_scan, variance_scan_shared)
from .euler import (EulerConfig, WalkOutcome, compatibility_residual, euler_step, euler_trace,
                    gaussian_kernel, run_mixed, run_neumann)
from .experiments import ExperimentConfig, load_config, run_experiment, table_config
from .geometry import (Point2, SquareDomain, distance_to_boundary, project_to_boundary,
                       symmetrize)
from .problems import Coefficients, Problem, builtin_problem
from .schemes import apply_scheme, fd1, fd3_diamond, fd3_oneside, kinetic
from .spectral import (CenteredBasis, SpectralSystem, TchebBasis, assemble, build_basis,
                       center_approx, center_exact, collect_traces, err_metrics, evaluate)
from .wos import (CircleTable, WosConfig, load_or_build_table, precompute_circle_table,
                  run_wos_mixed, run_wos_neumann)

__version__ = "0.1.0"

__all__ = [
    "BiasMetrics", "McSummary", "ParticleCloud", "bias_metrics", "fit_slope", "monte_carlo",
    "sample_invariant_path", "sample_invariant_uniform", "tcheb_grid", "tcheb_points",
    "variance_scan", "variance_scan_shared", "EulerConfig", "WalkOutcome",
    "compatibility_residual", "euler_step", "euler_trace", "gaussian_kernel", "run_mixed",
    "run_neumann", "ExperimentConfig", "load_config", "run_experiment", "table_config",
    "Point2", "SquareDomain", "distance_to_boundary", "project_to_boundary", "symmetrize",
    "Coefficients", "Problem", "builtin_problem", "apply_scheme", "fd1", "fd3_diamond",
    "fd3_oneside", "kinetic", "CenteredBasis", "SpectralSystem", "TchebBasis", "assemble",
    "build_basis", "center_approx", "center_exact", "collect_traces", "err_metrics", "evaluate",
    "CircleTable", "WosConfig", "load_or_build_table", "precompute_circle_table",
    "run_wos_mixed", "run_wos_neumann",
]
