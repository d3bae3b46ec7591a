"""Consumption-function concavity laboratory.

Solve finite-horizon consumption-saving problems by Euler-equation root
finding, test the concavity of the resulting consumption functions, and for
non-HARA utilities construct shock distributions with provably convex
stretches of the consumption function.
"""

from concavex.euler import (
    ConcavityReport,
    PolicyFunction,
    concavity_scan,
    consumption_upper_bound,
    euler_residual,
    find_zero_saving_wealth,
    mpc,
    solve_finite_horizon,
    solve_one_period,
)
from concavex.hlp import (
    GContext,
    build_counterexample,
    find_phi_ratio_violation,
    g_eval,
    g_second_derivative_sign,
    lb3_check,
    phi_capital,
)
from concavex.pipeline import (
    CounterexampleCertificate,
    HARAVerdict,
    PipelineConfig,
    run_pipeline,
    verify_certificate,
)
from concavex.shocks import HLPParameters, ShockDistribution, hlp_to_shocks, shocks_to_hlp
from concavex.utility import (
    CARA,
    CRRA,
    HARA,
    Custom,
    CRRAMixture,
    Quadratic,
    UtilityFunction,
    hara_residual,
    inverse_marginal,
    make_utility,
    risk_tolerance,
)

__version__ = "0.1.0"
