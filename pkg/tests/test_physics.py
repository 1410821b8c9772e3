"""Power-flow evaluation and physical DAE tests.

Hand values for the two-bus cases come from the sending-end formulas of
a series Pi branch evaluated directly; the lossy case is checked against
an independent complex-phasor branch computation inside the test.
"""

import dataclasses

import numpy as np
import pytest

from zonalgrid.netmodel import LineSpec, Network, NodeSpec
from zonalgrid import physics
from zonalgrid.physics import (AlgebraicSolveError, PhysState, dae_rhs,
                               dominant_flow, nodal_injections,
                               node_loss_terms, solve_load_algebraic)


def make_net(lines, kinds=("G", "L")):
    nodes = []
    for k, kind in enumerate(kinds):
        extra = dict(ppo=1, inertia=4.0, cost_weight=1.0, p_g_min=-0.002,
                     p_g_max=0.003, u_min=0.98, u_max=1.02) if kind != "L" else {}
        if kind == "G":
            extra.update(reactance_diff=0.15, tau_voltage=1.5)
        nodes.append(NodeSpec(id=k + 1, kind=kind, cell=1, damping=1.4, **extra))
    comm = tuple((a + 1, a + 2) for a in range(len(kinds) - 1))
    return Network(nodes=tuple(nodes), lines=tuple(lines), cells=(1,),
                   comm_intra=comm, comm_boundary=())


def make_network(lines, kinds=("G", "L")):
    return make_net(lines, kinds)


def test_flat_state_zero_injection():
    net = make_network([LineSpec(1, 2, 1.0, -5.0)])
    inj = nodal_injections(np.zeros(2), np.ones(2), net)
    assert np.allclose(inj.p, 0.0, atol=1e-15)
    assert np.allclose(inj.q, 0.0, atol=1e-15)


def test_lossless_two_bus_hand_values():
    net = make_network([LineSpec(1, 2, 0.0, -5.0)])
    th = np.array([0.1, 0.0])
    inj = nodal_injections(th, np.ones(2), net)
    assert inj.p_from[0] == pytest.approx(5 * np.sin(0.1), rel=1e-12)
    assert inj.p_to[0] == pytest.approx(-5 * np.sin(0.1), rel=1e-12)
    assert inj.q[0] == pytest.approx(5 * (1 - np.cos(0.1)), rel=1e-12)
    assert inj.p[0] == pytest.approx(5 * np.sin(0.1), rel=1e-12)


def test_lossy_two_bus_matches_complex_phasor_oracle():
    g, b = 1.0, -5.0
    net = make_network([LineSpec(1, 2, g, b)])
    th = np.array([0.1, 0.0])
    u = np.array([1.0, 1.0])
    inj = nodal_injections(th, u, net)
    # independent oracle: complex branch current of the series element
    v = u * np.exp(1j * th)
    y = g + 1j * b
    i12 = y * (v[0] - v[1])
    s12 = v[0] * np.conj(i12)
    s21 = v[1] * np.conj(-i12)
    assert inj.p_from[0] == pytest.approx(s12.real, rel=1e-12)
    assert inj.p_to[0] == pytest.approx(s21.real, rel=1e-12)
    loss = inj.p_from[0] + inj.p_to[0]
    assert loss == pytest.approx((abs(i12) ** 2) * g / (g * g + b * b), rel=1e-10)
    assert loss > 0


def test_loss_terms_zero_on_lossless_network():
    net = make_network([LineSpec(1, 2, 0.0, -5.0)])
    phi, phi_cell = node_loss_terms(np.array([0.2, -0.1]), np.array([1.0, 1.01]), net)
    assert np.allclose(phi, 0.0, atol=1e-14)
    assert np.allclose(phi_cell, 0.0, atol=1e-14)


def test_loss_identity_on_random_states():
    rng = np.random.default_rng(11)
    net = make_network([LineSpec(1, 2, 1.0, -5.0), LineSpec(2, 3, 0.4, -3.0),
                        LineSpec(1, 3, 0.2, -8.0)], kinds=("G", "I", "L"))
    for _ in range(25):
        th = rng.uniform(-0.3, 0.3, 3)
        u = rng.uniform(0.95, 1.05, 3)
        inj = nodal_injections(th, u, net)
        phi, phi_cell = node_loss_terms(th, u, net)
        assert np.sum(inj.p) == pytest.approx(np.sum(phi), abs=1e-10)
        assert np.sum(phi_cell) == pytest.approx(np.sum(phi), abs=1e-12)
        line_losses = np.sum(inj.p_from + inj.p_to)
        assert np.sum(inj.p) == pytest.approx(line_losses, abs=1e-10)


def test_lossless_antisymmetry():
    net = make_network([LineSpec(1, 2, 0.0, -5.0), LineSpec(2, 3, 0.0, -3.0)],
                       kinds=("G", "I", "L"))
    rng = np.random.default_rng(5)
    for _ in range(10):
        th = rng.uniform(-0.4, 0.4, 3)
        u = rng.uniform(0.95, 1.05, 3)
        p_fwd = nodal_injections(th, u, net).p
        p_rev = nodal_injections(-th, u, net).p
        assert np.allclose(p_fwd, -p_rev, atol=1e-12)


def test_dae_rhs_zero_at_equilibrium():
    net = make_network([LineSpec(1, 2, 1.0, -5.0)])
    th = np.array([0.05, 0.0])
    u = np.array([1.0, 0.99])
    inj = nodal_injections(th, u, net)
    p_load = -inj.p
    q_load = np.array([0.0, -inj.q[1]])
    u_f = u[:1] + 0.15 * inj.q[:1] / u[:1]
    st = PhysState(theta=th, omega=np.zeros(2), u=u, momentum=np.zeros(1))
    dth, dmom, du_g, r_p, r_q = dae_rhs(
        st, {"p_g": np.zeros(2), "u_f": u_f, "p_load": p_load, "q_load": q_load}, net)
    assert np.allclose(dth, 0) and np.allclose(dmom, 0, atol=1e-14)
    assert np.allclose(du_g, 0, atol=1e-14)
    assert np.allclose(r_p, 0, atol=1e-14) and np.allclose(r_q, 0, atol=1e-14)


def test_dae_rhs_isolated_injection():
    net = make_net([], kinds=("G",))
    st = PhysState(theta=np.zeros(1), omega=np.zeros(1), u=np.ones(1),
                   momentum=np.zeros(1))
    inputs = {"p_g": np.array([0.1]), "u_f": np.ones(1),
              "p_load": np.zeros(1), "q_load": np.zeros(1)}
    _, dmom, _, _, _ = dae_rhs(st, inputs, net)
    assert dmom[0] == pytest.approx(0.1)


def test_dae_rhs_load_bus_residual_sign():
    net = make_network([LineSpec(1, 2, 0.0, -5.0)])
    st = PhysState(theta=np.zeros(2), omega=np.array([0.0, 0.3]),
                   u=np.ones(2), momentum=np.zeros(1))
    inputs = {"p_g": np.zeros(2), "u_f": np.ones(1),
              "p_load": np.zeros(2), "q_load": np.zeros(2)}
    _, _, _, r_p, r_q = dae_rhs(st, inputs, net)
    assert r_p[0] == pytest.approx(-1.4 * 0.3)
    assert r_q[0] == pytest.approx(0.0)


def test_dae_rhs_rejects_zero_generator_voltage():
    net = make_network([LineSpec(1, 2, 0.0, -5.0)])
    st = PhysState(theta=np.zeros(2), omega=np.zeros(2),
                   u=np.array([0.0, 1.0]), momentum=np.zeros(1))
    with pytest.raises(physics.SingularVoltageError):
        dae_rhs(st, {"p_g": np.zeros(2), "u_f": np.ones(1),
                     "p_load": np.zeros(2), "q_load": np.zeros(2)}, net)


def test_load_algebra_flat_dead_network():
    net = make_network([LineSpec(1, 2, 0.0, -5.0)])
    omega_l, u_l = solve_load_algebraic(np.zeros(2), np.ones(2),
                                        np.zeros(2), np.zeros(2), net)
    assert np.allclose(omega_l, 0.0, atol=1e-12)
    assert np.allclose(u_l, 1.0, atol=1e-12)
    # guess independence
    _, u_l2 = solve_load_algebraic(np.zeros(2), np.ones(2), np.zeros(2),
                                   np.zeros(2), net, guess=np.array([1.04]))
    assert np.allclose(u_l2, 1.0, atol=1e-9)


def test_load_algebra_matches_dense_root_finder():
    net = make_network([LineSpec(1, 2, 0.5, -4.0), LineSpec(2, 3, 0.5, -4.0)],
                       kinds=("G", "L", "G"))
    th = np.array([0.02, 0.0, -0.01])
    u = np.array([1.0, 1.0, 1.01])
    p_load = np.array([0.0, 0.004, 0.0])
    q_load = np.array([0.0, 0.002, 0.0])
    omega_l, u_l = solve_load_algebraic(th, u.copy(), p_load, q_load, net)

    # independent oracle: bisection on the scalar reactive balance
    def q_residual(ul):
        uu = u.copy()
        uu[1] = ul
        return -q_load[1] - nodal_injections(th, uu, net).q[1]

    lo, hi = 0.5, 1.5
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if q_residual(mid) > 0:
            lo = mid
        else:
            hi = mid
    assert u_l[0] == pytest.approx(0.5 * (lo + hi), abs=1e-8)
    uu = u.copy()
    uu[1] = u_l[0]
    p_mid = nodal_injections(th, uu, net).p[1]
    assert omega_l[0] == pytest.approx(-(p_load[1] + p_mid) / 1.4, abs=1e-9)


def test_load_algebra_reports_infeasible_load():
    net = make_network([LineSpec(1, 2, 0.0, -2.0)])
    with pytest.raises(AlgebraicSolveError):
        solve_load_algebraic(np.zeros(2), np.ones(2), np.zeros(2),
                             np.array([0.0, 5.0]), net)


def test_dominant_flow_branches():
    assert dominant_flow(0.5, -0.5) == pytest.approx(0.5)
    assert dominant_flow(0.52, -0.50) == pytest.approx(0.52)
    assert dominant_flow(0.50, -0.52) == pytest.approx(0.52)
    assert dominant_flow(-0.52, 0.50) == pytest.approx(-0.52)
    arr = dominant_flow(np.array([0.1, -0.2]), np.array([-0.3, 0.1]))
    assert np.allclose(arr, [0.3, -0.2])
