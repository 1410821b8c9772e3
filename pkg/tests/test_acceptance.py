"""Acceptance suite: one test per acceptance criterion, one printed
pass/fail line each.

The seeded 57-bus family is integrated once at the configured step and
shared across criteria.  Environment knobs:
  ZONALGRID_ACCEPT_SEED  build seed (default 0)
  ZONALGRID_ACCEPT_DT    integration step in seconds (default 1e-3)
  ZONALGRID_ACCEPT_BACKEND  integration backend (default auto)

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import dataclasses
import os

import numpy as np
import pytest

import zonalgrid as zg
from zonalgrid.simulator import (Gains, RunOptions, event_windows, integrate,
                                 steady_state)

SEED = int(os.environ.get("ZONALGRID_ACCEPT_SEED", "0"))
DT = float(os.environ.get("ZONALGRID_ACCEPT_DT", "1e-3"))
BACKEND = os.environ.get("ZONALGRID_ACCEPT_BACKEND", "auto")

T1, T2, T3, T4, T5 = 300.0, 600.0, 900.0, 1200.0, 1500.0


def report(num: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="module")
def family():
    return zg.generate_ieee57(seed=SEED)


@pytest.fixture(scope="module")
def runs(family):
    opts = RunOptions(dt=DT, backend=BACKEND)
    return {mode: integrate(family[mode], opts) for mode in ("I", "II", "III", "IV")}


def tail_state(traj, window, tol=1e-6):
    return steady_state(traj, window, tol=tol)


def omega_of(traj, st):
    return np.concatenate([
        traj.layout.view(st.state.x, "mom") / traj.grid.inertia_gi,
        st.state.omega_l])


def watched_line_index(traj):
    names = [(traj.scenario.network.lines[k].i, traj.scenario.network.lines[k].j)
             for k in traj.grid.inter_idx]
    return names.index((38, 48))


def test_criterion_1_zero_frequency_deviation(runs):
    """Every converged inter-event window sits at nominal frequency."""
    worst = 0.0
    n_conv = 0
    ok = True
    for mode, tr in runs.items():
        for w in event_windows(tr.scenario):
            st = tail_state(tr, w)
            if not st.converged:
                continue
            n_conv += 1
            m = float(np.max(np.abs(omega_of(tr, st))))
            worst = max(worst, m)
            ok = ok and m < 1e-6
    ok = ok and n_conv >= 1
    report(1, ok, f"{n_conv} converged windows, max |freq deviation| {worst:.2e} (tol 1e-6)")
    assert ok


def test_criterion_2_transient_overshoot(runs):
    """Reversal overshoot lands inside the +/-50% windows."""
    over = {}
    for mode in ("I", "II"):
        f = runs[mode].frequencies()
        over[mode] = float(f.max() - runs[mode].scenario.network.f_nominal)
    ok_1 = 0.02 <= over["I"] <= 0.06
    ok_2 = 0.025 <= over["II"] <= 0.075
    ok = ok_1 and ok_2
    report(2, ok, "max overshoot I %+0.4f Hz (window [0.02,0.06]), II %+0.4f Hz "
                  "(window [0.025,0.075])" % (over["I"], over["II"]))
    assert ok


def test_criterion_3_price_structure(runs):
    """Uniform price in III; three factor-scaled prices in IV; resync after t5."""
    tr3, tr4 = runs["III"], runs["IV"]
    # III: spread at the most settled window
    states = [(w, tail_state(tr3, w)) for w in event_windows(tr3.scenario)]
    conv = [s for s in states if s[1].converged] or states
    spread3 = min(float(np.ptp(tr3.layout.view(st.state.x, "lam")))
                  for _, st in conv)
    ok_uniform = spread3 < 1e-6

    st4 = tail_state(tr4, (T4, T5))
    lam4 = tr4.layout.view(st4.state.x, "lam")
    kap4 = np.exp(tr4.layout.view(st4.state.x, "phi_c"))
    cell_prices = np.array([lam4[tr4.grid.cell_pos == c].mean() for c in range(3)])
    dist = np.abs(cell_prices[:, None] - cell_prices[None, :])[np.triu_indices(3, 1)]
    ok_distinct = bool(np.all(dist > 1e-5))
    lam_hat = lam4 / kap4[tr4.grid.cell_pos]
    hat_spread = float(np.ptp(lam_hat))
    ok_scaled = hat_spread < 1e-6

    st3p = tail_state(tr3, (T5, tr3.scenario.t_end))
    st4p = tail_state(tr4, (T5, tr4.scenario.t_end))
    resync = float(np.max(np.abs(tr4.layout.view(st4p.state.x, "lam")
                                 - tr3.layout.view(st3p.state.x, "lam"))))
    ok_resync = resync < 1e-4
    ok = ok_uniform and ok_distinct and ok_scaled and ok_resync
    report(3, ok, f"III spread {spread3:.2e} (<1e-6); IV zonal prices {cell_prices} "
                  f"distinct>1e-5; scaled-price spread {hat_spread:.2e} (<1e-6); "
                  f"post-reversal gap to III {resync:.2e} (<1e-4)")
    assert ok


def test_criterion_4_congestion_relief(runs):
    """III overloads line (38,48) after t4; IV settles below the limit with
    the documented factor ordering."""
    tr3, tr4 = runs["III"], runs["IV"]
    i38 = watched_line_index(tr3)
    pm3, _ = tr3.inter_cell_flows()
    mid3 = (tr3.t >= T4) & (tr3.t < T5)
    flow3 = float(pm3[mid3, i38].max())
    ok_over = flow3 > 0.01

    pm4, _ = tr4.inter_cell_flows()
    tail4 = (tr4.t >= T5 - 50.0) & (tr4.t < T5)
    settle4 = float(pm4[tail4, i38].mean())
    ok_relief = settle4 <= 0.01 * (1 + 1e-3)

    st4 = tail_state(tr4, (T4, T5))
    kap = np.exp(tr4.layout.view(st4.state.x, "phi_c"))
    ok_order = bool(kap[1] > kap[2] > kap[0])
    ok = ok_over and ok_relief and ok_order
    report(4, ok, f"III flow max {flow3:.6f} (>0.01); IV settles {settle4:.6f} "
                  f"(<=0.01001); factors {np.round(kap, 4)} ordered 2>3>1: {ok_order}")
    assert ok


def test_criterion_5_oracle_equivalence():
    """Distributed steady states match the centralized dispatch."""
    worst = 0.0
    n = 5
    ok = True
    opts = RunOptions(dt=DT, backend=BACKEND)
    for seed in range(n):
        sc = zg.random_small_scenario(seed)
        tr = integrate(sc, opts)
        st = tail_state(tr, event_windows(sc)[-1])
        ok = ok and st.converged
        sol = zg.solve_centralized(sc.network, np.array(sc.kappa0), st.state)
        gap = float(np.max(np.abs(sol.p_g - tr.layout.view(st.state.x, "p_g"))))
        worst = max(worst, gap)
        ok = ok and gap < 1e-5
    report(5, ok, f"{n} randomized instances, worst |p_g - centralized| {worst:.2e} (tol 1e-5)")
    assert ok


def test_criterion_6_factor_and_gain_invariance():
    """Equilibrium untouched by factor scaling and gain sweeps."""
    opts = RunOptions(dt=DT, backend=BACKEND)
    base_sc = zg.toy_3cell(kappa=(1.0, 1.3, 0.8), t_end=150.0)
    base = integrate(base_sc, opts)
    w = event_windows(base_sc)[-1]
    st0 = tail_state(base, w)
    pg0 = base.layout.view(st0.state.x, "p_g")
    worst_scale = 0.0
    for c in (0.5, 2.0, 10.0):
        sc = zg.toy_3cell(kappa=tuple(c * k for k in base_sc.kappa0), t_end=150.0)
        tr = integrate(sc, opts)
        st = tail_state(tr, w)
        gap = float(np.max(np.abs(base.layout.view(st.state.x, "p_g") - pg0)))
        u_gap = float(np.max(np.abs(
            np.concatenate([base.layout.view(st.state.x, "u_f"),
                            base.layout.view(st.state.x, "u_i")])
            - np.concatenate([base.layout.view(st0.state.x, "u_f"),
                              base.layout.view(st0.state.x, "u_i")]))))
        worst_scale = max(worst_scale, gap, u_gap)
    ok_scale = worst_scale < 1e-8 and st0.converged

    g = Gains()
    slow = Gains(tau_g=g.tau_g * 10, tau_u=g.tau_u * 10, tau_mu=g.tau_mu * 10,
                 tau_lam=g.tau_lam * 10, tau_nu=g.tau_nu * 10, tau_phi=g.tau_phi)
    tr_slow = integrate(base_sc, RunOptions(dt=DT, backend=BACKEND, gains=slow))
    st_slow = tail_state(tr_slow, w, tol=1e-4)
    tau_gap = float(np.max(np.abs(base.layout.view(st_slow.state.x, "p_g") - pg0)))
    ok_tau = tau_gap < 1e-6 and st_slow.converged
    ok = ok_scale and ok_tau
    report(6, ok, f"factor-scaling worst gap {worst_scale:.2e} (<1e-8); "
                  f"10x gain sweep gap {tau_gap:.2e} (<1e-6)")
    assert ok


def test_criterion_7_constraint_respect(runs):
    """Box constraints hold (up to the stated transient allowance) in the
    coupled scenarios; isolated operation is flagged unconverged after the
    reversal."""
    tol = 1e-3
    ok_pg = True
    ok_u = True
    detail = []
    for mode in ("II", "III", "IV"):
        tr = runs[mode]
        pg = tr.block("p_g")
        lo, hi = float(pg.min()), float(pg.max())
        mode_ok = (lo >= -0.002 - tol) and (hi <= 0.003 + tol)
        ok_pg = ok_pg and mode_ok
        u = tr.voltages()
        ug = u[:, np.concatenate([tr.grid.g_idx, tr.grid.i_idx])]
        uf = tr.block("u_f")
        u_ok = (ug.min() >= 0.98 - tol and ug.max() <= 1.02 + tol
                and uf.min() >= 0.98 - tol and uf.max() <= 1.02 + tol)
        ok_u = ok_u and u_ok
        detail.append(f"{mode}: p_g [{lo:.5f},{hi:.5f}] U [{ug.min():.4f},{ug.max():.4f}]")
    tr1 = runs["I"]
    st = tail_state(tr1, (T5, tr1.scenario.t_end))
    ok_flag = not st.converged
    detail.append(f"I post-reversal window converged={st.converged} "
                  f"(residual {st.max_derivative:.1e}), expected unconverged")
    ok = ok_pg and ok_u and ok_flag
    report(7, ok, "; ".join(detail))
    assert ok


def test_criterion_8_step_refinement():
    """Halving the step changes the final state below tolerance (the
    published wall-clock table and exact trajectories are out of scope
    and replaced by this self-consistency check)."""
    sc = dataclasses.replace(zg.toy_3cell(), t_end=10.0)
    a = integrate(sc, RunOptions(dt=1e-3, backend=BACKEND))
    b = integrate(sc, RunOptions(dt=5e-4, backend=BACKEND))
    gap = float(np.max(np.abs(a.x[-1] - b.x[-1])))
    ok = gap < 1e-6
    report(8, ok, f"state change under step halving {gap:.2e} (tol 1e-6)")
    assert ok
