"""Fixed-step fourth-order Runge-Kutta integration backwards in time."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicHermiteSpline


def rk4_backward(rhs, t_start: float, t_end: float, state_end, n_steps: int):
    """Integrate ``dS/dt = rhs(t, S)`` from ``t_end`` down to ``t_start``.

    ``state_end`` may be any array; ``rhs`` must return an array of the same
    shape.  Returns ``(times, states, derivs)`` on an increasing grid of
    ``n_steps + 1`` points.
    """
    n_steps = max(int(n_steps), 1)
    times = np.linspace(t_start, t_end, n_steps + 1)
    state = np.array(state_end, dtype=float)
    states = np.empty((n_steps + 1,) + state.shape)
    derivs = np.empty_like(states)
    states[-1] = state
    derivs[-1] = rhs(times[-1], state)
    for k in range(n_steps, 0, -1):
        t, h = times[k], times[k - 1] - times[k]
        k1 = derivs[k]
        k2 = rhs(t + 0.5 * h, state + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, state + 0.5 * h * k2)
        k4 = rhs(t + h, state + h * k3)
        state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        states[k - 1] = state
        derivs[k - 1] = rhs(times[k - 1], state)
    return times, states, derivs


def hermite(times, states, derivs) -> CubicHermiteSpline:
    """Piecewise cubic interpolant matching values and slopes at the nodes."""
    return CubicHermiteSpline(times, states, derivs, axis=0)


class RK4Dense:
    """Dense output for a backward RK4 solution.

    A value between nodes is one RK4 step of the right size taken from the
    node just above ``t``.  Unlike a cubic interpolant this is as accurate as
    the integration itself, and its time derivative stays close to ``rhs``.
    """

    def __init__(self, rhs, times, states):
        self.rhs = rhs
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)

    def __call__(self, t: float):
        k = int(np.searchsorted(self.times, t, side="left"))
        k = min(max(k, 0), self.times.size - 1)
        t0, y = self.times[k], self.states[k]
        h = t - t0
        if h == 0.0:
            return y.copy()
        f = self.rhs
        k1 = f(t0, y)
        k2 = f(t0 + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t0 + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t0 + h, y + h * k3)
        return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def derivative(self, t: float):
        return self.rhs(t, self(t))
