"""Dynamic and rebalanced classical Black-Litterman on the five-asset market.

Run with ``python3 demos/five_asset_comparison.py [n_paths]``.
"""

import sys

from dynbl.lab import RebalancePlan, RegimeSpec, run_comparison
from dynbl.market import reference_market, reference_picks

n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
res = run_comparison(reference_market(), RegimeSpec("single", reference_picks()),
                     alphas=[0.4, 0.8], gammas=[5.0], plans=[RebalancePlan.named("weekly")],
                     n_paths=n_paths, seed=2024, bankruptcy="report")
print(f"{'policy':<6} {'alpha':>5} {'CER':>8} {'+-SE':>7} {'turnover':>9}")
for r in res.rows:
    print(f"{r['policy']:<6} {r['alpha']:>5} {r['cer']:>8.4f} {r['se_cer']:>7.4f} {r['turnover']:>9.1f}")
