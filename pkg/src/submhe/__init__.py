"""Sub-optimal moving horizon estimation in closed loop.

Solves each estimation window for a fixed number of projected-gradient
iterations, warm-started from the previous step, and feeds the resulting
estimate to a Lipschitz state-feedback law. The analysis side computes the
small-gain iteration budget that certifies input-to-state stability of the
interconnection and checks the per-step inequalities as runtime monitors.
"""

from .analysis import (AnalysisParams, GainLedger, budget_constants,
                       build_params, compute_rho, gain_slopes, ledger_at,
                       min_iterations, small_gain_check)
from .controller import (FeedbackLaw, assert_stabilizing,
                         estimate_closed_loop_gain, estimate_lipschitz,
                         evaluate)
from .harness import (LipschitzProbe, ScenarioConfig, TrajectoryLog,
                      lipschitz_probe, monitor_step, run_closed_loop,
                      sample_disturbance, sample_disturbance_arrays)
from .mhe import (CondensedPoint, MheProblem, build_problem, compute_weight,
                  extract_estimate, residual_sigma, shift_window, sigma_lift)
from .model import (AugmentedDisturbance, Box, IossCertificate, LtiSystem,
                    find_certificate, validate_system, verify_ioss_lmi,
                    w_delta)
from .solver import (KERNEL_BACKEND, SolveReport, contraction_rate,
                     project_box, solve_fixed_iters, solve_oracle)
from .config import ConfigDocument, load_config

__version__ = "0.1.0"

__all__ = [
    "AnalysisParams", "AugmentedDisturbance", "Box", "CondensedPoint",
    "ConfigDocument", "FeedbackLaw", "GainLedger", "IossCertificate",
    "KERNEL_BACKEND", "LipschitzProbe", "LtiSystem", "MheProblem",
    "ScenarioConfig", "SolveReport", "TrajectoryLog", "budget_constants",
    "assert_stabilizing", "build_params", "build_problem", "compute_rho",
    "compute_weight", "contraction_rate", "estimate_closed_loop_gain",
    "estimate_lipschitz", "evaluate", "extract_estimate", "find_certificate",
    "gain_slopes", "ledger_at", "lipschitz_probe", "load_config",
    "min_iterations", "monitor_step", "project_box", "residual_sigma",
    "run_closed_loop", "sample_disturbance", "sample_disturbance_arrays",
    "shift_window", "sigma_lift",
    "small_gain_check", "solve_fixed_iters", "solve_oracle",
    "validate_system", "verify_ioss_lmi", "w_delta",
]
