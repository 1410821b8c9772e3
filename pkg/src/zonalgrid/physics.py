"""Lossy AC power flow and the physical differential-algebraic model.

The grid state is (theta, omega, U, L): nodal voltage angles (rad),
frequency deviations, voltage magnitudes (p.u.), and angular-momentum
deviations at generation buses.  Frequency deviations are expressed in
Hz, so damping coefficients are p.u. power per Hz and inertia constants
p.u. power seconds per Hz; reported bus frequency is f_nominal + omega.

Injections use the standard bus-admittance form

    p_i = sum_j U_i U_j (G_ij cos t_ij + B_ij sin t_ij)
    q_i = sum_j U_i U_j (G_ij sin t_ij - B_ij cos t_ij)

with Y = G + jB assembled from the physical series admittances and the
nodal shunts, so the flat state with zero shunts injects exactly zero.
Generator and inverter buses evolve L and (for generators) U
differentially; load buses impose algebraic active/reactive balance,
solved each evaluation by a damped Newton iteration.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .netmodel import (KIND_GENERATOR, KIND_INVERTER, KIND_LOAD, Network,
                       cell_laplacian, incidence)

ALGEBRAIC_TOL = 1e-10
ALGEBRAIC_MAX_ITER = 50


class SingularVoltageError(ValueError):
    """A generator bus voltage reached zero; the excitation model is singular."""


class AlgebraicSolveError(RuntimeError):
    """Newton iteration on the load-bus constraints failed to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class PhysState:
    """Physical state snapshot; arrays indexed like the network node list."""

    theta: np.ndarray
    omega: np.ndarray
    u: np.ndarray
    momentum: np.ndarray  # per G/I node, momentum = inertia * omega


@dataclass
class PowerInjections:
    """Sending-end nodal injections and per-line directional flows."""

    p: np.ndarray
    q: np.ndarray
    p_from: np.ndarray  # flow i -> j measured at i, one entry per line
    p_to: np.ndarray    # flow j -> i measured at j
    q_from: np.ndarray
    q_to: np.ndarray


class Grid:
    """Numeric arrays compiled from a `Network` for fast evaluation."""

    def __init__(self, net: Network):
        self.net = net
        n = len(net.nodes)
        self.n = n
        idx = net.node_index()
        self.ids = np.array([nd.id for nd in net.nodes])
        kinds = np.array([nd.kind for nd in net.nodes])
        self.g_idx = np.flatnonzero(kinds == KIND_GENERATOR)
        self.i_idx = np.flatnonzero(kinds == KIND_INVERTER)
        self.l_idx = np.flatnonzero(kinds == KIND_LOAD)
        self.gi_idx = np.flatnonzero(kinds != KIND_LOAD)
        self.n_g, self.n_i = len(self.g_idx), len(self.i_idx)
        self.n_l, self.n_gi = len(self.l_idx), len(self.gi_idx)
        # positions of the G subset inside the G/I ordering (for p_g scatter)
        self.g_in_gi = np.searchsorted(self.gi_idx, self.g_idx)
        self.i_in_gi = np.searchsorted(self.gi_idx, self.i_idx)

        self.damping = np.array([nd.damping for nd in net.nodes])
        self.inertia_gi = np.array([net.nodes[k].inertia for k in self.gi_idx], dtype=float)
        self.xd_diff_g = np.array([net.nodes[k].reactance_diff for k in self.g_idx], dtype=float)
        self.tau_u_g = np.array([net.nodes[k].tau_voltage for k in self.g_idx], dtype=float)

        self.w_gi = np.array([net.nodes[k].cost_weight for k in self.gi_idx], dtype=float)
        self.pg_lo = np.array([net.nodes[k].p_g_min for k in self.gi_idx], dtype=float)
        self.pg_hi = np.array([net.nodes[k].p_g_max for k in self.gi_idx], dtype=float)
        self.uf_lo = np.array([net.nodes[k].u_min for k in self.g_idx], dtype=float)
        self.uf_hi = np.array([net.nodes[k].u_max for k in self.g_idx], dtype=float)
        self.ui_lo = np.array([net.nodes[k].u_min for k in self.i_idx], dtype=float)
        self.ui_hi = np.array([net.nodes[k].u_max for k in self.i_idx], dtype=float)
        self.ppo_of_gi = np.array([net.nodes[k].ppo for k in self.gi_idx])

        self.cell_pos = np.array([net.cell_index()[nd.cell] for nd in net.nodes])
        self.n_cells = len(net.cells)

        # bus admittance matrix (dense; networks here are small)
        self.line_i = np.array([idx[ln.i] for ln in net.lines], dtype=np.int64)
        self.line_j = np.array([idx[ln.j] for ln in net.lines], dtype=np.int64)
        self.line_g = np.array([ln.conductance for ln in net.lines])
        self.line_b = np.array([ln.susceptance for ln in net.lines])
        self.line_limit = np.array([ln.flow_limit if ln.flow_limit is not None else np.nan
                                    for ln in net.lines])
        self.line_cmin = np.array([ln.congestion_threshold if ln.congestion_threshold is not None
                                   else np.nan for ln in net.lines])
        Y = np.zeros((n, n), dtype=complex)
        for a, b, g, bs in zip(self.line_i, self.line_j, self.line_g, self.line_b):
            y = g + 1j * bs
            Y[a, a] += y
            Y[b, b] += y
            Y[a, b] -= y
            Y[b, a] -= y
        for k, nd in enumerate(net.nodes):
            Y[k, k] += nd.shunt_g + 1j * nd.shunt_b
        self.Y = Y
        self.Gb = Y.real.copy()
        self.Bb = Y.imag.copy()

        self.inter_idx = np.array(net.inter_cell_lines(), dtype=np.int64)
        self.inter_ci = self.cell_pos[self.line_i[self.inter_idx]] if len(self.inter_idx) else np.zeros(0, dtype=np.int64)
        self.inter_cj = self.cell_pos[self.line_j[self.inter_idx]] if len(self.inter_idx) else np.zeros(0, dtype=np.int64)
        self.Dz, self.Bz = cell_laplacian(net)

        self.ci_a = np.array([idx[a] for a, _ in net.comm_intra], dtype=np.int64)
        self.ci_b = np.array([idx[b] for _, b in net.comm_intra], dtype=np.int64)
        self.cb_a = np.array([idx[a] for a, _ in net.comm_boundary], dtype=np.int64)
        self.cb_b = np.array([idx[b] for _, b in net.comm_boundary], dtype=np.int64)
        self.cb_ca = self.cell_pos[self.cb_a] if len(self.cb_a) else np.zeros(0, dtype=np.int64)
        self.cb_cb = self.cell_pos[self.cb_b] if len(self.cb_b) else np.zeros(0, dtype=np.int64)
        self.D_intra = incidence(list(zip(self.ci_a, self.ci_b)), n)

        # L-subblock views used by the algebraic solve
        self.B_ll = self.Bb[np.ix_(self.l_idx, self.l_idx)]


@lru_cache(maxsize=64)
def compile_network(net: Network) -> Grid:
    return Grid(net)


def _as_grid(net) -> Grid:
    return net if isinstance(net, Grid) else compile_network(net)


# ---------------------------------------------------------------------------
# injections and flows
# ---------------------------------------------------------------------------

def nodal_injections(theta: np.ndarray, u: np.ndarray, net) -> PowerInjections:
    """Sending-end injections p, q and directional line flows at (theta, u)."""
    grid = _as_grid(net)
    v = u * np.exp(1j * theta)
    s = v * np.conj(grid.Y @ v)
    li, lj = grid.line_i, grid.line_j
    y = grid.line_g + 1j * grid.line_b
    vi, vj = v[li], v[lj]
    s_from = vi * np.conj(y * (vi - vj))
    s_to = vj * np.conj(y * (vj - vi))
    return PowerInjections(p=s.real, q=s.imag,
                           p_from=s_from.real, p_to=s_to.real,
                           q_from=s_from.imag, q_to=s_to.imag)


def node_loss_terms(theta: np.ndarray, u: np.ndarray, net) -> tuple[np.ndarray, np.ndarray]:
    """Per-node resistive loss shares and their per-cell sums.

    The node terms are the symmetric (cosine) part of the active
    injection; they sum to the total active injection, i.e. to the
    network loss, and cell-wise to each cell's loss.
    """
    grid = _as_grid(net)
    e = u * np.cos(theta)
    f = u * np.sin(theta)
    phi = e * (grid.Gb @ e) + f * (grid.Gb @ f)
    phi_cell = np.bincount(grid.cell_pos, weights=phi, minlength=grid.n_cells)
    return phi, phi_cell


def dominant_flow(p_from, p_to):
    """Directional flow with the larger magnitude, sign preserved.

    For a line evaluated from both ends this picks the sending-end value:
    p_from if |p_from| >= |p_to|, else -p_to.
    """
    p_from = np.asarray(p_from, dtype=float)
    p_to = np.asarray(p_to, dtype=float)
    return np.where(np.abs(p_from) >= np.abs(p_to), p_from, -p_to)


# ---------------------------------------------------------------------------
# algebraic load-bus solve
# ---------------------------------------------------------------------------

def _q_injection(grid: Grid, theta: np.ndarray, u: np.ndarray) -> np.ndarray:
    v = u * np.exp(1j * theta)
    return (v * np.conj(grid.Y @ v)).imag


def solve_load_algebraic(theta: np.ndarray, u: np.ndarray,
                         p_load: np.ndarray, q_load: np.ndarray,
                         net, guess: np.ndarray | None = None
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Solve the load-bus constraints for (omega_L, U_L).

    The reactive balance -q_load = q(theta, u) is solved for the load-bus
    voltages by Newton iteration (warm-started from `guess`), after which
    the active balance gives omega_L explicitly.  Residual infinity-norm
    below 1e-10 is required within 50 iterations.
    """
    grid = _as_grid(net)
    l = grid.l_idx
    if grid.n_l == 0:
        return np.zeros(0), np.zeros(0)
    u = u.copy()
    u[l] = guess if guess is not None else u[l]
    best = np.inf
    for _ in range(ALGEBRAIC_MAX_ITER):
        q = _q_injection(grid, theta, u)
        res = -q_load[l] - q[l]
        best = float(np.max(np.abs(res)))
        if best <= ALGEBRAIC_TOL:
            break
        # dq_k/dU_m = U_k s_km (m != k), q_k/U_k - B_kk U_k on the diagonal,
        # with s_km = G_km sin t_km - B_km cos t_km
        tl = theta[l]
        dth = tl[:, None] - tl[None, :]
        s = grid.Gb[np.ix_(l, l)] * np.sin(dth) - grid.B_ll * np.cos(dth)
        J = u[l][:, None] * s
        np.fill_diagonal(J, q[l] / u[l] - np.diag(grid.B_ll) * u[l])
        try:
            du = np.linalg.solve(J, res)
        except np.linalg.LinAlgError as exc:
            raise AlgebraicSolveError(f"singular load-bus Jacobian: {exc}", best) from exc
        step = np.clip(du, -0.2, 0.2)  # keep voltages away from collapse during iteration
        u[l] += step
        if np.any(u[l] <= 0):
            raise AlgebraicSolveError("load-bus voltage collapsed below zero", best)
    else:
        raise AlgebraicSolveError(
            f"load-bus solve stalled at residual {best:.3e}", best)
    inj = nodal_injections(theta, u, grid)
    omega_l = -(p_load[l] + inj.p[l]) / grid.damping[l]
    return omega_l, u[l]


# ---------------------------------------------------------------------------
# DAE right-hand side
# ---------------------------------------------------------------------------

def dae_rhs(state: PhysState, inputs: dict, net):
    """Physical derivatives and load-bus residuals at a given state.

    `inputs` carries p_g (full-length, zero at load buses), u_f (per
    generator bus), p_load and q_load (full length).  Returns
    (dtheta, dmomentum, du_g, r_active, r_reactive) where the residuals
    are evaluated at the load buses with the state's own omega/U there.
    """
    grid = _as_grid(net)
    theta, omega, u = state.theta, state.omega, state.u
    if np.any(u[grid.g_idx] <= 0):
        raise SingularVoltageError("generator bus voltage is zero")
    inj = nodal_injections(theta, u, grid)
    p_load, q_load = inputs["p_load"], inputs["q_load"]
    p_g = inputs["p_g"]
    u_f = inputs["u_f"]

    dtheta = omega.copy()
    gi = grid.gi_idx
    dmom = (-grid.damping[gi] * omega[gi] + p_g[gi] - p_load[gi] - inj.p[gi])
    g = grid.g_idx
    du_g = (u_f - u[g] - grid.xd_diff_g * inj.q[g] / u[g]) / grid.tau_u_g
    l = grid.l_idx
    r_p = -grid.damping[l] * omega[l] - p_load[l] - inj.p[l]
    r_q = -q_load[l] - inj.q[l]
    return dtheta, dmom, du_g, r_p, r_q


# ---------------------------------------------------------------------------
# power-flow solve used to construct consistent operating points
# ---------------------------------------------------------------------------

def solve_power_flow(net, p_targets: np.ndarray, q_free: np.ndarray,
                     u_init: np.ndarray, slack: list[int],
                     theta_init: np.ndarray | None = None,
                     tol: float = 1e-12, max_iter: int = 80
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Solve p(theta,u) = p_targets with q = 0 at selected buses.

    `q_free` flags buses whose voltage magnitude is adjusted to make the
    reactive injection zero; all other magnitudes stay at `u_init`.
    `slack` lists one bus position per connected component whose angle is
    pinned and whose active mismatch is absorbed.  Used when building
    scenarios: any solution is a valid stationary operating point once
    loads are set to the negated injections.
    """
    grid = _as_grid(net)
    n = grid.n
    theta = np.zeros(n) if theta_init is None else theta_init.copy()
    u = u_init.copy()
    free_th = np.array([k for k in range(n) if k not in set(slack)], dtype=np.int64)
    free_u = np.flatnonzero(q_free)

    def residual(th, uu):
        v = uu * np.exp(1j * th)
        s = v * np.conj(grid.Y @ v)
        return np.concatenate([s.real[free_th] - p_targets[free_th],
                               s.imag[free_u]])

    m = len(free_th) + len(free_u)
    for _ in range(max_iter):
        r0 = residual(theta, u)
        if np.max(np.abs(r0)) < tol:
            break
        J = np.zeros((m, m))
        h = 1e-7
        for c, k in enumerate(free_th):
            th = theta.copy()
            th[k] += h
            J[:, c] = (residual(th, u) - r0) / h
        for c, k in enumerate(free_u):
            uu = u.copy()
            uu[k] += h
            J[:, len(free_th) + c] = (residual(theta, uu) - r0) / h
        dz = np.linalg.solve(J, -r0)
        # damp large corrections; flat starts on weak branches overshoot
        scale = min(1.0, 0.15 / max(1e-12, float(np.max(np.abs(dz)))))
        theta[free_th] += scale * dz[:len(free_th)]
        u[free_u] += scale * dz[len(free_th):]
    else:
        raise AlgebraicSolveError("power-flow construction did not converge",
                                  float(np.max(np.abs(residual(theta, u)))))
    return theta, u
