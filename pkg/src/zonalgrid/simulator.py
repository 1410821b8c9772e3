"""Closed-loop integration of grid physics and all controllers.

The composite state stacks the physical states (angles, momenta,
generator voltages), every producer-controller block, the coordinator
prices and edge multipliers, and the per-cell log participation factors.
Load-bus frequency and voltage are index-1 algebraic variables solved by
Newton iteration inside every integrator stage.

Integration is fixed-step classical Runge-Kutta: with projection
nonsmoothness and a timed event schedule, reproducibility is worth more
than adaptive steps, and a step-refinement check guards accuracy.
Multipliers are clamped at zero after every step to absorb overshoot
across the projection discontinuity.  Load steps snap to the nearest
step boundary and apply exactly there.

Two equivalent execution paths exist: a vectorized numpy reference and
an optional compiled kernel (numba), selected by `RunOptions.backend`.
Results are deterministic for a fixed (scenario, options, backend).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import physics
from .congestion import BARRIER_CAP, BARRIER_EDGE, barrier, violation
from .netmodel import LoadEvent, Scenario, scenario_digest, validate_network
from .physics import AlgebraicSolveError, Grid, compile_network
from .ppo import proj_plus


class CongestionViolationError(RuntimeError):
    """A congestion rate reached the saturation edge while running strict."""


@dataclass(frozen=True)
class Gains:
    """Controller time constants (all > 0); equilibria do not depend on them."""

    tau_g: float = 0.1
    tau_u: float = 0.01
    tau_mu: float = 0.01
    tau_lam: float = 0.01
    tau_nu: float = 0.01
    tau_phi: float = 10.0


@dataclass(frozen=True)
class RunOptions:
    dt: float = 1e-3
    dt_output: float | None = None
    t_end: float | None = None
    strict_congestion: bool = False
    backend: str = "auto"  # "auto" | "numpy" | "numba"
    gains: Gains = Gains()


class StateLayout:
    """Index map partitioning the composite state vector exactly once."""

    def __init__(self, grid: Grid):
        n, n_g, n_i, n_gi, n_l = grid.n, grid.n_g, grid.n_i, grid.n_gi, grid.n_l
        m_c = len(grid.ci_a) + len(grid.cb_a)
        sizes = [
            ("theta", n), ("mom", n_gi), ("u_g", n_g),
            ("p_g", n_gi), ("u_f", n_g), ("u_i", n_i),
            ("mu_g_lo", n_gi), ("mu_g_hi", n_gi),
            ("mu_f_lo", n_g), ("mu_f_hi", n_g),
            ("mu_i_lo", n_i), ("mu_i_hi", n_i),
            ("lam", n), ("nu", m_c), ("phi_c", grid.n_cells),
        ]
        self.slices: dict[str, slice] = {}
        k = 0
        for name, sz in sizes:
            self.slices[name] = slice(k, k + sz)
            k += sz
        self.nx = k
        self.m_intra = len(grid.ci_a)
        self.mu_slice = slice(self.slices["mu_g_lo"].start, self.slices["mu_i_hi"].stop)

    def view(self, x: np.ndarray, name: str) -> np.ndarray:
        return x[..., self.slices[name]]


@dataclass
class SimState:
    """Full simulation state at one instant, loads included."""

    t: float
    x: np.ndarray
    p_load: np.ndarray
    q_load: np.ndarray
    u_l: np.ndarray
    omega_l: np.ndarray


def apply_event(state: SimState, event: LoadEvent | None, grid: Grid) -> SimState:
    """Return the state with the event's load deltas applied.

    Loads are piecewise constant; controller and physical states are
    untouched.  A None event is the identity.
    """
    if event is None:
        return state
    p = state.p_load.copy()
    q = state.q_load.copy()
    pos = int(np.flatnonzero(grid.ids == event.node)[0])
    p[pos] += event.dp
    q[pos] += event.dq
    return replace(state, p_load=p, q_load=q)


# ---------------------------------------------------------------------------
# right-hand side (numpy reference path)
# ---------------------------------------------------------------------------

def closed_loop_rhs(x: np.ndarray, p_load: np.ndarray, q_load: np.ndarray,
                    grid: Grid, lay: StateLayout, gains: Gains,
                    kappa_fixed: np.ndarray, kappa_controlled: bool,
                    ul_guess: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Derivative of the composite state; also returns (U_L, omega_L, violated)."""
    th = lay.view(x, "theta")
    mom = lay.view(x, "mom")
    u = np.empty(grid.n)
    u[grid.g_idx] = lay.view(x, "u_g")
    u[grid.i_idx] = lay.view(x, "u_i")
    u[grid.l_idx] = ul_guess
    if grid.n_g and np.any(u[grid.g_idx] <= 0):
        raise physics.SingularVoltageError("generator bus voltage is zero")

    omega_l, u_l = physics.solve_load_algebraic(th, u, p_load, q_load, grid,
                                                guess=ul_guess)
    u[grid.l_idx] = u_l
    inj = physics.nodal_injections(th, u, grid)
    phi, _ = physics.node_loss_terms(th, u, grid)

    omega = np.empty(grid.n)
    omega[grid.gi_idx] = mom / grid.inertia_gi
    omega[grid.l_idx] = omega_l

    pg = lay.view(x, "p_g")
    pg_node = np.zeros(grid.n)
    pg_node[grid.gi_idx] = pg
    lam = lay.view(x, "lam")
    nu = lay.view(x, "nu")
    phi_c = lay.view(x, "phi_c")
    kappa = np.exp(phi_c) if kappa_controlled else kappa_fixed

    dx = np.empty_like(x)
    lay.view(dx, "theta")[:] = omega
    lay.view(dx, "mom")[:] = (-grid.damping[grid.gi_idx] * omega[grid.gi_idx]
                              + pg - p_load[grid.gi_idx] - inj.p[grid.gi_idx])
    u_f = lay.view(x, "u_f")
    lay.view(dx, "u_g")[:] = (u_f - u[grid.g_idx]
                              - grid.xd_diff_g * inj.q[grid.g_idx] / u[grid.g_idx]
                              ) / grid.tau_u_g

    mu_g_lo = lay.view(x, "mu_g_lo")
    mu_g_hi = lay.view(x, "mu_g_hi")
    mu_f_lo = lay.view(x, "mu_f_lo")
    mu_f_hi = lay.view(x, "mu_f_hi")
    mu_i_lo = lay.view(x, "mu_i_lo")
    mu_i_hi = lay.view(x, "mu_i_hi")
    u_i = lay.view(x, "u_i")

    lay.view(dx, "p_g")[:] = (-pg / grid.w_gi + lam[grid.gi_idx]
                              - omega[grid.gi_idx] + mu_g_lo - mu_g_hi) / gains.tau_g
    lay.view(dx, "u_f")[:] = (mu_f_lo - mu_f_hi) / gains.tau_u
    lay.view(dx, "u_i")[:] = (-mu_i_lo + mu_i_hi) / gains.tau_u
    lay.view(dx, "mu_g_lo")[:] = proj_plus(grid.pg_lo - pg, mu_g_lo) / gains.tau_mu
    lay.view(dx, "mu_g_hi")[:] = proj_plus(pg - grid.pg_hi, mu_g_hi) / gains.tau_mu
    lay.view(dx, "mu_f_lo")[:] = proj_plus(grid.uf_lo - u_f, mu_f_lo) / gains.tau_mu
    lay.view(dx, "mu_f_hi")[:] = proj_plus(u_f - grid.uf_hi, mu_f_hi) / gains.tau_mu
    lay.view(dx, "mu_i_lo")[:] = proj_plus(grid.ui_lo - u_i, mu_i_lo) / gains.tau_mu
    lay.view(dx, "mu_i_hi")[:] = proj_plus(u_i - grid.ui_hi, mu_i_hi) / gains.tau_mu

    # coordinator price/consensus dynamics on the union communication graph
    dlam = (-pg_node + phi + p_load).astype(float)
    m_i = lay.m_intra
    nu_i, nu_b = nu[:m_i], nu[m_i:]
    if m_i:
        np.add.at(dlam, grid.ci_a, -nu_i)
        np.add.at(dlam, grid.ci_b, nu_i)
    dnu = np.empty_like(nu)
    dnu[:m_i] = (lam[grid.ci_a] - lam[grid.ci_b]) / gains.tau_nu
    if len(grid.cb_a):
        eta = kappa[grid.cb_ca] / kappa[grid.cb_cb]
        np.add.at(dlam, grid.cb_a, -nu_b)
        np.add.at(dlam, grid.cb_b, eta * nu_b)
        dnu[m_i:] = (lam[grid.cb_a] - eta * lam[grid.cb_b]) / gains.tau_nu
    lay.view(dx, "lam")[:] = dlam / gains.tau_lam
    lay.view(dx, "nu")[:] = dnu

    violated = False
    dphi = np.zeros(grid.n_cells)
    if kappa_controlled and len(grid.inter_idx):
        sel = grid.inter_idx
        p_m = physics.dominant_flow(inj.p_from[sel], inj.p_to[sel])
        limit = grid.line_limit[sel]
        cmin = grid.line_cmin[sel]
        have = np.isfinite(limit) & np.isfinite(cmin)
        rate = np.where(have, p_m / np.where(np.isfinite(limit), limit, 1.0), 0.0)
        gam = np.where(have, barrier(rate, np.where(have, cmin, 0.5)), 0.0)
        violated = bool(np.any(violation(rate) & have))
        dphi = (-(grid.Bz @ phi_c) - grid.Dz @ gam) / gains.tau_phi
    lay.view(dx, "phi_c")[:] = dphi
    return dx, u_l, omega_l, violated


# ---------------------------------------------------------------------------
# trajectory container
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Decimated record of a run; derived series recompute from raw states."""

    scenario: Scenario
    options: RunOptions
    t: np.ndarray          # (s,)
    x: np.ndarray          # (s, nx)
    u_l: np.ndarray        # (s, n_l)
    omega_l: np.ndarray    # (s, n_l)
    violated: np.ndarray   # (s,) bool: congestion rate at saturation edge

    def __post_init__(self):
        self.grid = compile_network(self.scenario.network)
        self.layout = StateLayout(self.grid)

    # -- raw views ---------------------------------------------------------
    def block(self, name: str) -> np.ndarray:
        return self.layout.view(self.x, name)

    def loads_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Piecewise-constant loads in effect at time t (events at t included)."""
        p = np.array(self.scenario.p_load0)
        q = np.array(self.scenario.q_load0)
        pos = {int(b): k for k, b in enumerate(self.grid.ids)}
        for ev in self.scenario.events:
            if ev.time <= t:
                p[pos[ev.node]] += ev.dp
                q[pos[ev.node]] += ev.dq
        return p, q

    # -- derived series ----------------------------------------------------
    def voltages(self) -> np.ndarray:
        u = np.empty((len(self.t), self.grid.n))
        u[:, self.grid.g_idx] = self.block("u_g")
        u[:, self.grid.i_idx] = self.block("u_i")
        u[:, self.grid.l_idx] = self.u_l
        return u

    def omegas(self) -> np.ndarray:
        w = np.empty((len(self.t), self.grid.n))
        w[:, self.grid.gi_idx] = self.block("mom") / self.grid.inertia_gi
        w[:, self.grid.l_idx] = self.omega_l
        return w

    def frequencies(self) -> np.ndarray:
        return self.scenario.network.f_nominal + self.omegas()

    def prices(self) -> np.ndarray:
        return self.block("lam")

    def kappas(self) -> np.ndarray:
        if self.scenario.kappa_controlled:
            return np.exp(self.block("phi_c"))
        return np.tile(np.array(self.scenario.kappa0), (len(self.t), 1))

    def cell_prices(self) -> np.ndarray:
        lam = self.prices()
        out = np.empty((len(self.t), self.grid.n_cells))
        for c in range(self.grid.n_cells):
            out[:, c] = lam[:, self.grid.cell_pos == c].mean(axis=1)
        return out

    def cell_losses(self) -> np.ndarray:
        u = self.voltages()
        th = self.block("theta")
        out = np.empty((len(self.t), self.grid.n_cells))
        for k in range(len(self.t)):
            _, out[k] = physics.node_loss_terms(th[k], u[k], self.grid)
        return out

    def inter_cell_flows(self) -> tuple[np.ndarray, np.ndarray]:
        """Dominant flow and congestion rate per inter-cell line and sample."""
        sel = self.grid.inter_idx
        u = self.voltages()
        th = self.block("theta")
        pm = np.empty((len(self.t), len(sel)))
        for k in range(len(self.t)):
            inj = physics.nodal_injections(th[k], u[k], self.grid)
            pm[k] = physics.dominant_flow(inj.p_from[sel], inj.p_to[sel])
        limit = self.grid.line_limit[sel]
        rate = pm / np.where(np.isfinite(limit), limit, np.inf)
        return pm, rate

    def sample_state(self, k: int) -> SimState:
        p, q = self.loads_at(float(self.t[k]))
        return SimState(t=float(self.t[k]), x=self.x[k].copy(), p_load=p,
                        q_load=q, u_l=self.u_l[k].copy(),
                        omega_l=self.omega_l[k].copy())


# ---------------------------------------------------------------------------
# steady-state detection
# ---------------------------------------------------------------------------

@dataclass
class SteadyState:
    state: SimState
    max_derivative: float
    converged: bool


def steady_state(traj: Trajectory, window: tuple[float, float],
                 tail: float = 0.25, tol: float = 1e-6) -> SteadyState:
    """Equilibrium estimate over one inter-event window.

    Averages the trailing `tail` fraction of the window's samples and
    re-evaluates the closed-loop derivative there; converged means the
    largest derivative magnitude is below `tol`.
    """
    ta, tb = window
    mask = (traj.t >= ta) & (traj.t <= tb)
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise ValueError(f"no samples in window {window}")
    k0 = idx[int(np.floor(len(idx) * (1.0 - tail)))] if len(idx) > 1 else idx[0]
    sel = idx[idx >= k0]
    xbar = traj.x[sel].mean(axis=0)
    ul = traj.u_l[sel].mean(axis=0) if traj.u_l.shape[1] else traj.u_l[0]
    p, q = traj.loads_at(float(traj.t[sel[0]]))
    gains = traj.options.gains
    dx, u_l, omega_l, _ = closed_loop_rhs(
        xbar, p, q, traj.grid, traj.layout, gains,
        np.array(traj.scenario.kappa0), traj.scenario.kappa_controlled, ul)
    mx = float(np.max(np.abs(dx))) if len(dx) else 0.0
    st = SimState(t=float(traj.t[sel[-1]]), x=xbar, p_load=p, q_load=q,
                  u_l=u_l, omega_l=omega_l)
    return SteadyState(state=st, max_derivative=mx, converged=mx < tol)


def event_windows(sc: Scenario) -> list[tuple[float, float]]:
    """Inter-event intervals covering [0, t_end]."""
    times = sorted({ev.time for ev in sc.events if 0.0 < ev.time < sc.t_end})
    edges = [0.0] + times + [sc.t_end]
    return list(zip(edges[:-1], edges[1:]))


# ---------------------------------------------------------------------------
# integration driver
# ---------------------------------------------------------------------------

def _initial_state(sc: Scenario, grid: Grid, lay: StateLayout) -> np.ndarray:
    """Rest initial condition: controllers at zero, excitation balancing."""
    x = np.zeros(lay.nx)
    th0 = np.array(sc.theta0)
    u0 = np.array(sc.u0)
    lay.view(x, "theta")[:] = th0
    lay.view(x, "u_g")[:] = u0[grid.g_idx]
    lay.view(x, "u_i")[:] = u0[grid.i_idx]
    inj = physics.nodal_injections(th0, u0, grid)
    # stationary excitation command for the initial voltage profile
    lay.view(x, "u_f")[:] = (u0[grid.g_idx]
                             + grid.xd_diff_g * inj.q[grid.g_idx] / u0[grid.g_idx])
    lay.view(x, "phi_c")[:] = np.log(np.array(sc.kappa0))
    return x


def integrate(sc: Scenario, options: RunOptions = RunOptions()) -> Trajectory:
    """Run the closed loop over the scenario horizon.

    Raises on invalid networks, a failed initial algebraic solve, or (in
    strict mode) a congestion-rate saturation.
    """
    problems = validate_network(sc.network)
    if problems:
        raise ValueError("invalid network: " + "; ".join(problems))
    grid = compile_network(sc.network)
    lay = StateLayout(grid)
    gains = options.gains
    dt = options.dt
    t_end = options.t_end if options.t_end is not None else sc.t_end
    dt_out = options.dt_output if options.dt_output is not None else sc.dt_output
    stride = max(1, int(round(dt_out / dt)))
    n_steps = int(round(t_end / dt))

    p_load = np.array(sc.p_load0)
    q_load = np.array(sc.q_load0)
    kappa_fixed = np.array(sc.kappa0)
    x = _initial_state(sc, grid, lay)
    ul = np.array(sc.u0)[grid.l_idx]

    # events snap to the nearest step boundary
    ev_steps: dict[int, list[LoadEvent]] = {}
    for ev in sc.events:
        k = int(round(ev.time / dt))
        if k < 0:
            raise ValueError(f"event at t={ev.time} before start")
        if k <= n_steps:  # events beyond a shortened horizon never fire
            ev_steps.setdefault(k, []).append(ev)
    pos_of = {int(b): k for k, b in enumerate(grid.ids)}

    n_samples = n_steps // stride + 1
    T = np.empty(n_samples)
    X = np.empty((n_samples, lay.nx))
    UL = np.empty((n_samples, grid.n_l))
    WL = np.empty((n_samples, grid.n_l))
    VI = np.zeros(n_samples, dtype=bool)

    backend = options.backend
    if backend == "auto":
        try:
            from . import _kernel  # noqa: F401
            backend = "numba"
        except Exception:
            backend = "numpy"
    if backend == "numba":
        from ._kernel import run_span
        pack = _kernel_pack(grid, lay, gains, kappa_fixed, sc.kappa_controlled)

    def record(s: int, k_step: int, viol: bool):
        T[s] = k_step * dt
        X[s] = x
        # re-solve the algebraic block so samples are consistent post-event
        wl_s, ul_s = physics.solve_load_algebraic(
            lay.view(x, "theta"),
            _full_u(x, grid, lay, ul), p_load, q_load, grid, guess=ul)
        UL[s] = ul_s
        WL[s] = wl_s
        VI[s] = viol
        return ul_s

    sample = 0
    k = 0
    viol_flag = False
    while True:
        for ev in ev_steps.get(k, ()):
            p_load[pos_of[ev.node]] += ev.dp
            q_load[pos_of[ev.node]] += ev.dq
        if k % stride == 0:
            ul = record(sample, k, viol_flag)
            sample += 1
            viol_flag = False
        if k >= n_steps:
            break
        span = min(stride - (k % stride), n_steps - k)
        nxt = min((s for s in ev_steps if s > k), default=n_steps + 1)
        span = min(span, nxt - k)
        if backend == "numba":
            code = int(run_span(x, ul, dt, span, p_load, q_load, *pack))
            if code < 0:
                raise AlgebraicSolveError(
                    f"load-bus solve stalled near t={k*dt:.3f}s", float("nan"))
            viol = bool(code)
            if viol and options.strict_congestion:
                raise CongestionViolationError(f"congestion saturation near t={k*dt:.3f}s")
            viol_flag = viol_flag or viol
            k += span
        else:
            for _ in range(span):
                viol = _rk4_step(x, p_load, q_load, grid, lay, gains, kappa_fixed,
                                 sc.kappa_controlled, ul, dt)
                x[lay.mu_slice] = np.maximum(x[lay.mu_slice], 0.0)
                if viol and options.strict_congestion:
                    raise CongestionViolationError(f"congestion saturation near t={k*dt:.3f}s")
                viol_flag = viol_flag or viol
                k += 1

    return Trajectory(scenario=sc, options=options, t=T, x=X, u_l=UL,
                      omega_l=WL, violated=VI)


def _full_u(x, grid, lay, ul):
    u = np.empty(grid.n)
    u[grid.g_idx] = lay.view(x, "u_g")
    u[grid.i_idx] = lay.view(x, "u_i")
    u[grid.l_idx] = ul
    return u


def _rk4_step(x, p_load, q_load, grid, lay, gains, kappa_fixed,
              kappa_controlled, ul, dt) -> bool:
    """One classical Runge-Kutta step in place; returns the violation flag."""
    viol = False

    def f(xs):
        nonlocal viol
        dx, ul_new, _, v = closed_loop_rhs(xs, p_load, q_load, grid, lay, gains,
                                           kappa_fixed, kappa_controlled, ul)
        ul[:] = ul_new
        viol = viol or v
        return dx

    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return viol


def _kernel_pack(grid: Grid, lay: StateLayout, gains: Gains,
                 kappa_fixed: np.ndarray, kappa_controlled: bool):
    """Flat argument tuple consumed by the compiled kernel."""
    sl = lay.slices
    starts = np.array([sl[name].start for name in
                       ("theta", "mom", "u_g", "p_g", "u_f", "u_i",
                        "mu_g_lo", "mu_g_hi", "mu_f_lo", "mu_f_hi",
                        "mu_i_lo", "mu_i_hi", "lam", "nu", "phi_c")],
                      dtype=np.int64)
    l_pos = -np.ones(grid.n, dtype=np.int64)
    l_pos[grid.l_idx] = np.arange(grid.n_l)
    shunt_g = np.array([nd.shunt_g for nd in grid.net.nodes])
    shunt_b = np.array([nd.shunt_b for nd in grid.net.nodes])
    bdiag = grid.Bb.diagonal().copy()
    inter = grid.inter_idx
    limit = grid.line_limit[inter] if len(inter) else np.zeros(0)
    cmin = grid.line_cmin[inter] if len(inter) else np.zeros(0)
    have = (np.isfinite(limit) & np.isfinite(cmin)).astype(np.int64)
    gains_v = np.array([gains.tau_g, gains.tau_u, gains.tau_mu,
                        gains.tau_lam, gains.tau_nu, gains.tau_phi])
    return (starts, grid.g_idx.astype(np.int64), grid.i_idx.astype(np.int64),
            grid.l_idx.astype(np.int64), grid.gi_idx.astype(np.int64), l_pos,
            grid.line_i, grid.line_j, grid.line_g, grid.line_b,
            shunt_g, shunt_b, bdiag,
            grid.damping, grid.inertia_gi, grid.xd_diff_g, grid.tau_u_g,
            grid.w_gi, grid.pg_lo, grid.pg_hi, grid.uf_lo, grid.uf_hi,
            grid.ui_lo, grid.ui_hi,
            grid.ci_a, grid.ci_b, grid.cb_a, grid.cb_b,
            grid.cb_ca.astype(np.int64), grid.cb_cb.astype(np.int64),
            inter.astype(np.int64),
            np.where(np.isfinite(limit), limit, 1.0),
            np.where(np.isfinite(cmin), cmin, 0.5), have,
            grid.Dz, grid.Bz, gains_v, kappa_fixed.astype(float),
            1 if kappa_controlled else 0)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def trajectory_columns(traj: Trajectory) -> list[str]:
    g = traj.grid
    ids = g.ids
    cols = ["time_s"]
    cols += [f"f_hz_bus{b}" for b in ids]
    cols += [f"price_bus{b}" for b in ids]
    cols += [f"p_g_bus{b}" for b in ids[g.gi_idx]]
    cols += [f"u_bus{b}" for b in ids]
    cols += [f"cell_price_{c}" for c in traj.scenario.network.cells]
    cols += [f"kappa_{c}" for c in traj.scenario.network.cells]
    for k in g.inter_idx:
        ln = traj.scenario.network.lines[k]
        cols += [f"flow_{ln.i}_{ln.j}", f"rate_{ln.i}_{ln.j}"]
    cols += [f"loss_cell_{c}" for c in traj.scenario.network.cells]
    return cols


def export_csv(traj: Trajectory, path: str) -> None:
    """Comma-separated trajectory in the documented column order.

    Columns: time, bus frequencies (Hz), nodal prices, generation
    setpoints, voltage magnitudes, cell prices, participation factors,
    then dominant flow and congestion rate per inter-cell line, then
    per-cell losses.  Angles are reported relative to the lowest-indexed
    generator bus (the rotational gauge does not enter any column).
    """
    cols = trajectory_columns(traj)
    f = traj.frequencies()
    lam = traj.prices()
    pg = traj.block("p_g")
    u = traj.voltages()
    cp = traj.cell_prices()
    kap = traj.kappas()
    pm, rate = traj.inter_cell_flows()
    loss = traj.cell_losses()
    flow_cols = np.empty((len(traj.t), 2 * pm.shape[1]))
    flow_cols[:, 0::2] = pm
    flow_cols[:, 1::2] = rate
    data = np.column_stack([traj.t, f, lam, pg, u, cp, kap, flow_cols, loss])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def run_manifest(traj: Trajectory) -> dict:
    o = traj.options
    return {
        "scenario": traj.scenario.name,
        "mode": traj.scenario.mode,
        "seed": traj.scenario.seed,
        "digest": scenario_digest(traj.scenario),
        "dt": o.dt,
        "dt_output": o.dt_output if o.dt_output is not None else traj.scenario.dt_output,
        "t_end": o.t_end if o.t_end is not None else traj.scenario.t_end,
        "strict_congestion": o.strict_congestion,
        "gains": vars(o.gains),
        "congestion_violations": int(np.sum(traj.violated)),
    }
