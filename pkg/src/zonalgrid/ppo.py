"""Producer-side controller: primal-dual gradient flow per power plant operator.

Each operator adjusts its generation setpoints, excitation voltages and
inverter voltage commands by gradient flow on its profit Lagrangian,
with one nonnegative multiplier pair per box constraint.  Multiplier
flows pass through the positivity projection, so multipliers started
nonnegative stay nonnegative along exact trajectories; the integrator
additionally clamps them at zero to absorb discrete-step overshoot.

Everything here is a pure function of its arguments and is decoupled
across operators: the derivative of one operator's block reads only that
operator's prices, frequencies and bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def proj_plus(x: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Positivity projection for multiplier flows, applied component-wise.

    Component i passes x_i through unchanged when mu_i > 0 or x_i >= 0,
    and returns 0 otherwise (the flow may not push a zero multiplier
    negative).
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return np.where((mu > 0) | (x >= 0), x, 0.0)


@dataclass(frozen=True)
class CostModel:
    """Convex production cost, by default quadratic p^2 / (2 w) per node.

    A different convex cost can be supplied as `gradient`, a callable
    mapping the generation vector to its marginal-cost vector; it must be
    monotone nondecreasing component-wise for the controller equilibria
    to be optima.
    """

    weights: tuple[float, ...]
    gradient: object = None  # optional callable p -> grad

    def grad(self, p_g: np.ndarray) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(p_g), dtype=float)
        return np.asarray(p_g, dtype=float) / np.asarray(self.weights, dtype=float)

    def value(self, p_g: np.ndarray) -> np.ndarray:
        if self.gradient is not None:
            raise NotImplementedError("cost values available only for the quadratic model")
        return np.asarray(p_g, dtype=float) ** 2 / (2 * np.asarray(self.weights, dtype=float))


def cost_gradient(cost: CostModel, p_g: np.ndarray) -> np.ndarray:
    """Marginal cost of every generation node."""
    return cost.grad(p_g)


@dataclass
class PpoState:
    """Controller state of one operator (or of all, stacked)."""

    p_g: np.ndarray
    u_f: np.ndarray
    u_i: np.ndarray
    mu_g_lo: np.ndarray
    mu_g_hi: np.ndarray
    mu_f_lo: np.ndarray
    mu_f_hi: np.ndarray
    mu_i_lo: np.ndarray
    mu_i_hi: np.ndarray

    def multipliers(self) -> list[np.ndarray]:
        return [self.mu_g_lo, self.mu_g_hi, self.mu_f_lo,
                self.mu_f_hi, self.mu_i_lo, self.mu_i_hi]


@dataclass(frozen=True)
class PpoBounds:
    pg_lo: np.ndarray
    pg_hi: np.ndarray
    uf_lo: np.ndarray
    uf_hi: np.ndarray
    ui_lo: np.ndarray
    ui_hi: np.ndarray


@dataclass(frozen=True)
class PpoGains:
    """Diagonal time constants; all strictly positive."""

    tau_g: float = 0.1
    tau_u: float = 0.01
    tau_mu: float = 0.01


def ppo_rhs(s: PpoState, lam: np.ndarray, omega: np.ndarray,
            cost: CostModel, bounds: PpoBounds,
            gains: PpoGains = PpoGains()) -> PpoState:
    """Time derivatives of all controller states.

    `lam` and `omega` are the local prices and frequency deviations at
    the operator's generation nodes (g-block then the same nodes split
    into generator/inverter sub-blocks as in the state).  Generation
    chases price minus marginal cost, penalized by local over-frequency;
    voltage commands move only on their bound multipliers.
    """
    dp = (-cost.grad(s.p_g) + lam - omega + s.mu_g_lo - s.mu_g_hi) / gains.tau_g
    du_f = (s.mu_f_lo - s.mu_f_hi) / gains.tau_u
    du_i = (-s.mu_i_lo + s.mu_i_hi) / gains.tau_u
    dmu = [
        proj_plus(bounds.pg_lo - s.p_g, s.mu_g_lo) / gains.tau_mu,
        proj_plus(s.p_g - bounds.pg_hi, s.mu_g_hi) / gains.tau_mu,
        proj_plus(bounds.uf_lo - s.u_f, s.mu_f_lo) / gains.tau_mu,
        proj_plus(s.u_f - bounds.uf_hi, s.mu_f_hi) / gains.tau_mu,
        proj_plus(bounds.ui_lo - s.u_i, s.mu_i_lo) / gains.tau_mu,
        proj_plus(s.u_i - bounds.ui_hi, s.mu_i_hi) / gains.tau_mu,
    ]
    return PpoState(dp, du_f, du_i, *dmu)
