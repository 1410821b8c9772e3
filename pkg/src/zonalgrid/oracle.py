"""Independent verification: KKT residuals, centralized reference solve,
initial-load balancing and economic reporting.

The distributed closed loop should stand still exactly at points that
solve a single centralized dispatch problem (cost scaled per cell by the
participation factors, subject to network balance and the box bounds).
This module checks that claim from the other side: it evaluates every
KKT condition of the centralized problem at a simulated equilibrium, and
solves the centralized problem directly (scalar dual ascent over the
balance constraint with closed-form box projection) for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import physics
from .netmodel import Network
from .physics import _as_grid
from .simulator import SimState, StateLayout, Trajectory


# ---------------------------------------------------------------------------
# initial-load balancing
# ---------------------------------------------------------------------------

def balance_initial_loads(net, theta0: np.ndarray, u0: np.ndarray
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Loads that make (theta0, u0) a stationary point with zero generation.

    Active loads absorb the nodal injections everywhere; reactive loads do
    so at load buses only (generator excitation and inverter commands
    absorb the rest).  With these loads the physical residuals vanish at
    t=0 with zero frequency deviation.
    """
    grid = _as_grid(net)
    inj = physics.nodal_injections(np.asarray(theta0, float),
                                   np.asarray(u0, float), grid)
    p_load = -inj.p
    q_load = np.zeros(grid.n)
    q_load[grid.l_idx] = -inj.q[grid.l_idx]
    return p_load, q_load


# ---------------------------------------------------------------------------
# KKT report
# ---------------------------------------------------------------------------

@dataclass
class KktReport:
    """Per-condition residual norms of an equilibrium candidate."""

    residuals: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.residuals.values())

    def to_text(self) -> str:
        lines = [f"KKT residual report (tolerance {self.tolerance:g})"]
        for k, v in self.residuals.items():
            mark = "ok " if v <= self.tolerance else "FAIL"
            lines.append(f"  [{mark}] {k:26s} {v:.3e}")
        lines.append(f"  => {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def kkt_residuals(eq: SimState, net, kappa, tolerance: float = 1e-5) -> KktReport:
    """Evaluate every centralized KKT condition at a simulated state.

    Prices and generation-bound multipliers are mapped through the
    per-node participation factors before entering the stationarity
    conditions; the price-consensus group checks that the mapped price is
    one common value across the whole communication graph.
    """
    grid = _as_grid(net)
    lay = StateLayout(grid)
    x = eq.x
    kappa = np.asarray(kappa, dtype=float)
    kap_node = kappa[grid.cell_pos]
    kap_gi = kap_node[grid.gi_idx]

    pg = lay.view(x, "p_g")
    uf = lay.view(x, "u_f")
    ui = lay.view(x, "u_i")
    lam = lay.view(x, "lam")
    mu = {name: lay.view(x, name) for name in
          ("mu_g_lo", "mu_g_hi", "mu_f_lo", "mu_f_hi", "mu_i_lo", "mu_i_hi")}
    omega_gi = lay.view(x, "mom") / grid.inertia_gi
    lam_hat = lam / kap_node

    u = np.empty(grid.n)
    u[grid.g_idx] = lay.view(x, "u_g")
    u[grid.i_idx] = ui
    u[grid.l_idx] = eq.u_l
    th = lay.view(x, "theta")
    _, phi_cell = physics.node_loss_terms(th, u, grid)
    phi_total = float(np.sum(phi_cell))

    def inf(v):
        return float(np.max(np.abs(v))) if np.size(v) else 0.0

    grad = pg / grid.w_gi
    res = {
        "stationarity_p_g": inf(-grad / kap_gi - omega_gi + lam_hat[grid.gi_idx]
                                + (mu["mu_g_lo"] - mu["mu_g_hi"]) / kap_gi),
        "stationarity_u_f": inf(mu["mu_f_lo"] - mu["mu_f_hi"]),
        "stationarity_u_i": inf(mu["mu_i_lo"] - mu["mu_i_hi"]),
        "complementarity_g_lo": inf(mu["mu_g_lo"] * (grid.pg_lo - pg)),
        "complementarity_g_hi": inf(mu["mu_g_hi"] * (pg - grid.pg_hi)),
        "complementarity_f_lo": inf(mu["mu_f_lo"] * (grid.uf_lo - uf)),
        "complementarity_f_hi": inf(mu["mu_f_hi"] * (uf - grid.uf_hi)),
        "complementarity_i_lo": inf(mu["mu_i_lo"] * (grid.ui_lo - ui)),
        "complementarity_i_hi": inf(mu["mu_i_hi"] * (ui - grid.ui_hi)),
        "primal_bounds": max(
            inf(np.maximum(grid.pg_lo - pg, 0.0)),
            inf(np.maximum(pg - grid.pg_hi, 0.0)),
            inf(np.maximum(grid.uf_lo - uf, 0.0)),
            inf(np.maximum(uf - grid.uf_hi, 0.0)),
            inf(np.maximum(grid.ui_lo - ui, 0.0)),
            inf(np.maximum(ui - grid.ui_hi, 0.0))),
        "primal_balance": abs(float(np.sum(pg) - np.sum(eq.p_load)) - phi_total),
        "dual_feasibility": max(inf(np.maximum(-m, 0.0)) for m in mu.values()),
        "price_consensus": 0.0,
    }
    edges = list(zip(grid.ci_a, grid.ci_b)) + list(zip(grid.cb_a, grid.cb_b))
    if edges:
        res["price_consensus"] = max(abs(float(lam_hat[a] - lam_hat[b]))
                                     for a, b in edges)
    return KktReport(residuals=res, tolerance=tolerance)


# ---------------------------------------------------------------------------
# centralized reference solve
# ---------------------------------------------------------------------------

@dataclass
class CentralizedSolution:
    p_g: np.ndarray
    u_f: np.ndarray
    u_i: np.ndarray
    lam_hat: float
    mu_lo_hat: np.ndarray
    mu_hi_hat: np.ndarray
    demand: float
    saturated: bool


def solve_centralized(net, kappa, frozen: SimState,
                      max_iter: int = 200) -> CentralizedSolution:
    """Cost-minimal dispatch at the frozen network state.

    Minimizes the participation-scaled quadratic cost subject to the box
    bounds and the power balance with losses frozen at the given state
    (the comparison with a closed-loop equilibrium is at matching
    operating points).  The balance multiplier is found by bisection on
    the monotone aggregate response; each iterate projects exactly onto
    the boxes.  Demand outside the total generation range saturates the
    binding bounds and reports positive multipliers.
    """
    grid = _as_grid(net)
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa <= 0):
        raise ValueError("participation factors must be strictly positive")
    kap_gi = kappa[grid.cell_pos[grid.gi_idx]]
    u = np.empty(grid.n)
    lay = StateLayout(grid)
    u[grid.g_idx] = lay.view(frozen.x, "u_g")
    u[grid.i_idx] = lay.view(frozen.x, "u_i")
    u[grid.l_idx] = frozen.u_l
    th = lay.view(frozen.x, "theta")
    _, phi_cell = physics.node_loss_terms(th, u, grid)
    demand = float(np.sum(frozen.p_load) + np.sum(phi_cell))

    slope = grid.w_gi * kap_gi

    def p_of(lam_hat: float) -> np.ndarray:
        return np.clip(slope * lam_hat, grid.pg_lo, grid.pg_hi)

    lo_sum, hi_sum = float(np.sum(grid.pg_lo)), float(np.sum(grid.pg_hi))
    saturated = False
    if demand >= hi_sum:
        saturated = True
        lam_hat = float(np.max(grid.pg_hi / slope)) + (demand - hi_sum)
        pg = grid.pg_hi.copy()
    elif demand <= lo_sum:
        saturated = True
        lam_hat = float(np.min(grid.pg_lo / slope)) - (lo_sum - demand)
        pg = grid.pg_lo.copy()
    else:
        a = float(np.min(grid.pg_lo / slope)) - 1.0
        b = float(np.max(grid.pg_hi / slope)) + 1.0
        for _ in range(max_iter):
            lam_hat = 0.5 * (a + b)
            s = float(np.sum(p_of(lam_hat)))
            if s < demand:
                a = lam_hat
            else:
                b = lam_hat
            if b - a < 1e-16 * max(1.0, abs(b)):
                break
        else:
            raise RuntimeError("centralized dual iteration did not converge")
        lam_hat = 0.5 * (a + b)
        pg = p_of(lam_hat)
    mu_hi = np.maximum(lam_hat - pg / slope, 0.0) * (pg >= grid.pg_hi)
    mu_lo = np.maximum(pg / slope - lam_hat, 0.0) * (pg <= grid.pg_lo)
    u_f = np.clip(lay.view(frozen.x, "u_f").copy(), grid.uf_lo, grid.uf_hi)
    u_i = np.clip(lay.view(frozen.x, "u_i").copy(), grid.ui_lo, grid.ui_hi)
    return CentralizedSolution(p_g=pg, u_f=u_f, u_i=u_i, lam_hat=float(lam_hat),
                               mu_lo_hat=mu_lo, mu_hi_hat=mu_hi,
                               demand=demand, saturated=saturated)


# ---------------------------------------------------------------------------
# economic reporting
# ---------------------------------------------------------------------------

def economic_report(traj: Trajectory) -> dict:
    """Per-agent payoff series along a trajectory.

    Producer profit is price revenue minus production cost minus the
    local frequency penalty; consumer cost charges each cell's price on
    its consumption plus its loss share; coordinator profit is the
    residual between those (zero summed over cells at a uniform-price
    equilibrium: the market clears).
    """
    grid = traj.grid
    lam = traj.prices()
    pg = traj.block("p_g")
    omega = traj.omegas()
    s = len(traj.t)
    w = grid.w_gi
    cost = pg ** 2 / (2 * w)
    lam_gi = lam[:, grid.gi_idx]
    om_gi = omega[:, grid.gi_idx]
    node_profit = -cost + lam_gi * pg - om_gi * pg

    ppos = sorted(set(int(p) for p in grid.ppo_of_gi))
    ppo_profit = np.zeros((s, len(ppos)))
    for k, ppo in enumerate(ppos):
        sel = np.flatnonzero(grid.ppo_of_gi == ppo)
        ppo_profit[:, k] = node_profit[:, sel].sum(axis=1)

    loss = traj.cell_losses()
    cell_price = traj.cell_prices()
    cons = np.zeros((s, grid.n_cells))
    gen = np.zeros((s, grid.n_cells))
    for k in range(s):
        p_load, _ = traj.loads_at(float(traj.t[k]))
        cons[k] = np.bincount(grid.cell_pos, weights=p_load, minlength=grid.n_cells)
    pg_node = np.zeros((s, grid.n))
    pg_node[:, grid.gi_idx] = pg
    for c in range(grid.n_cells):
        gen[:, c] = pg_node[:, grid.cell_pos == c].sum(axis=1)
    consumer_cost = cell_price * (loss + cons)
    cc_profit = cell_price * (loss + cons - gen)
    return {
        "ppo_ids": ppos,
        "ppo_profit": ppo_profit,
        "consumer_cost": consumer_cost,
        "cc_profit": cc_profit,
        "cell_price": cell_price,
    }
