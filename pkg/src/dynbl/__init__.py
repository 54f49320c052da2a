"""Dynamic Black-Litterman portfolio choice.

Conditioned log-return dynamics, closed-form dynamic policies for investors
holding views, and a Monte-Carlo lab comparing them with rebalanced
single-period investors.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .gaussian import GaussianVector, cholesky, condition, woodbury_inverse  # noqa: F401
from .market import (  # noqa: F401
    MarketModel,
    MultiHorizonViews,
    RevisionSchedule,
    ShortTermSchedule,
    ViewSet,
    collapse_multi_horizon,
    log_view_target,
    make_omega_alpha,
    refine_short_term_view,
    reference_market,
    reference_picks,
    reference_views,
    sample_view,
)
from .bridge import BridgeSpec, bridge_law, hitting_time_monotonicity_check, sample_bridge_path  # noqa: F401
from .conditional import (  # noqa: F401
    conditional_coefficients,
    kalman_smoother_oracle,
    simulate_conditional_paths,
)
from .policy import (  # noqa: F401
    aged_view_portfolio,
    classical_bl,
    classical_bl_portfolio,
    dynamic_policy_weights,
    multi_horizon_policy,
    revisions_policy,
    short_term_policy,
    solve_dynamic_policy,
    solve_multi_horizon,
)
from .lab import (  # noqa: F401
    RebalancePlan,
    RegimeSpec,
    certainty_equivalent,
    run_comparison,
    run_revision_comparison,
    simulate_wealth,
    turnover,
)
