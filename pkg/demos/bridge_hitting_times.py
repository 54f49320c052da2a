"""Hitting times of a noisy-view bridge and a few simulated paths.

Run with ``python3 demos/bridge_hitting_times.py``.
"""

import numpy as np

from dynbl.bridge import BridgeSpec, bridge_law, sample_bridge_paths

T = 10.0
rho = 0.6
sigma = np.array([[1.0, rho], [rho, 1.0]])
P = np.array([[0.0, 1.0]])  # a view on the second asset only

for omega2 in (1.0, 4.0, 16.0):
    # per-unit-time noise so that the view variance over T equals omega2
    spec = BridgeSpec(np.zeros(2), sigma, P, np.array([[omega2 / T]]), T, np.zeros(1))
    law = bridge_law(spec)
    print(f"omega^2={omega2:>5}: hitting times {np.round(law.asset_hitting_times, 3)}")

spec = BridgeSpec(np.zeros(2), sigma, P, np.array([[0.4]]), T, np.zeros(1))
law = bridge_law(spec)
grid = np.linspace(0.0, T, 11)
paths = sample_bridge_paths(law, grid, 5, rng_seed=7)
print("\nsecond asset along five paths; its hitting time lies beyond T, so paths stay free at T:")
print(np.round(paths[:, :, 1], 3))
