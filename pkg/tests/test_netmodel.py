"""Data-model, validation and graph-matrix tests."""

import dataclasses

import numpy as np
import pytest

from zonalgrid.netmodel import (LineSpec, Network, NodeSpec, cell_laplacian,
                                extended_comm_incidence, incidence,
                                scenario_digest, scenario_from_json,
                                scenario_to_json, validate_network)
from zonalgrid.scenarios import (IEEE57_G, IEEE57_I, IEEE57_L, generate_ieee57,
                                 ieee57_cells, load_ieee57_branches, toy_2bus,
                                 toy_3cell)


def two_bus_network(**kw):
    nodes = (
        NodeSpec(id=1, kind="G", cell=1, ppo=1, damping=1.4, inertia=4.0,
                 reactance_diff=0.15, tau_voltage=1.5, cost_weight=1.0,
                 p_g_min=-0.002, p_g_max=0.003, u_min=0.98, u_max=1.02),
        NodeSpec(id=2, kind="L", cell=1, damping=1.4),
    )
    base = dict(nodes=nodes, lines=(LineSpec(1, 2, 0.5, -5.0),), cells=(1,),
                comm_intra=((1, 2),), comm_boundary=())
    base.update(kw)
    return Network(**base)


def test_minimal_network_valid():
    assert validate_network(two_bus_network()) == []


def test_missing_comm_edge_reported():
    net = two_bus_network(comm_intra=())
    msgs = validate_network(net)
    assert any("cell 1 communication graph disconnected" in m for m in msgs)


def test_generator_without_ppo_reported():
    nodes = (dataclasses.replace(two_bus_network().nodes[0], ppo=None),
             two_bus_network().nodes[1])
    msgs = validate_network(two_bus_network(nodes=nodes))
    assert any("node 1: generator without PPO" in m for m in msgs)


def test_load_node_with_generation_fields_reported():
    bad = NodeSpec(id=2, kind="L", cell=1, damping=1.4, cost_weight=1.0)
    msgs = validate_network(two_bus_network(nodes=(two_bus_network().nodes[0], bad)))
    assert any("load node carries generation field" in m for m in msgs)


def test_split_cell_reported():
    # two disconnected buses in the same cell
    nodes = two_bus_network().nodes
    net = two_bus_network(nodes=nodes, lines=(), comm_intra=((1, 2),))
    msgs = validate_network(net)
    assert any("physical subgraph disconnected" in m for m in msgs)


# -- incidence ---------------------------------------------------------------

def test_incidence_single_edge():
    D = incidence([(0, 1)], 2)
    assert np.array_equal(D, np.array([[1.0], [-1.0]]))


def test_incidence_path_columns_sum_zero():
    D = incidence([(0, 1), (1, 2)], 3)
    assert D.shape == (3, 2)
    assert np.allclose(D.sum(axis=0), 0.0)


def test_incidence_random_columns_sum_zero():
    rng = np.random.default_rng(3)
    edges = [(int(a), int(b)) for a, b in rng.integers(0, 9, size=(20, 2)) if a != b]
    D = incidence(edges, 9)
    assert np.allclose(np.ones(9) @ D, 0.0)


def test_incidence_rejects_out_of_range():
    with pytest.raises(ValueError):
        incidence([(0, 5)], 3)


# -- extended communication incidence ----------------------------------------

def boundary_pair_network():
    nodes = (
        NodeSpec(id=1, kind="G", cell=1, ppo=1, damping=1.4, inertia=4.0,
                 reactance_diff=0.15, tau_voltage=1.5, cost_weight=1.0,
                 p_g_min=-0.002, p_g_max=0.003, u_min=0.98, u_max=1.02),
        NodeSpec(id=2, kind="G", cell=2, ppo=2, damping=1.4, inertia=4.0,
                 reactance_diff=0.15, tau_voltage=1.5, cost_weight=1.0,
                 p_g_min=-0.002, p_g_max=0.003, u_min=0.98, u_max=1.02),
    )
    return Network(nodes=nodes, lines=(LineSpec(1, 2, 0.1, -5.0),),
                   cells=(1, 2), comm_intra=(), comm_boundary=((1, 2),))


def test_boundary_column_carries_factor_ratio():
    D = extended_comm_incidence(boundary_pair_network(), (2.0, 1.0))
    assert np.allclose(D[:, 0], [1.0, -2.0])


def test_uniform_factors_reduce_to_plain_incidence():
    D = extended_comm_incidence(boundary_pair_network(), (1.0, 1.0))
    assert np.allclose(D[:, 0], [1.0, -1.0])


def test_factor_scaling_leaves_weights_unchanged():
    net = boundary_pair_network()
    assert np.allclose(extended_comm_incidence(net, (4.0, 2.0)),
                       extended_comm_incidence(net, (2.0, 1.0)))


def test_nonpositive_factors_rejected():
    with pytest.raises(ValueError):
        extended_comm_incidence(boundary_pair_network(), (1.0, 0.0))


def test_price_kernel_matches_factor_profile():
    # a price proportional to its cell's factor lies in the left kernel
    sc = toy_3cell()
    kappa = np.array([1.0, 2.5, 0.7])
    D = extended_comm_incidence(sc.network, kappa)
    cell_pos = np.array([sc.network.cell_index()[n.cell] for n in sc.network.nodes])
    lam = 3.7 * kappa[cell_pos]
    assert np.max(np.abs(D.T @ lam)) < 1e-12
    # kernel dimension equals the number of weakly connected components (here 1)
    sv = np.linalg.svd(D.T, compute_uv=False)
    assert np.sum(sv < 1e-12 * sv[0]) == 1
    assert np.linalg.matrix_rank(D.T) == len(sc.network.nodes) - 1


# -- cell laplacian -----------------------------------------------------------

def test_cell_laplacian_single_tie():
    Dz, B = cell_laplacian(boundary_pair_network())
    assert np.allclose(B, [[1.0, -1.0], [-1.0, 1.0]])


def test_cell_laplacian_parallel_ties_add():
    net = boundary_pair_network()
    net = dataclasses.replace(net, lines=net.lines + (LineSpec(1, 2, 0.1, -4.0),))
    Dz, B = cell_laplacian(net)
    assert Dz.shape == (2, 2)
    assert np.allclose(B, [[2.0, -2.0], [-2.0, 2.0]])


def test_cell_laplacian_triangle_row_sums():
    sc = toy_3cell()
    Dz, B = cell_laplacian(sc.network)
    assert np.allclose(B.sum(axis=1), 0.0)
    assert np.allclose(B, B.T)
    assert np.all(np.linalg.eigvalsh(B) > -1e-12)


# -- the 57-bus family ---------------------------------------------------------

def test_branch_table_has_expected_shape():
    rows = load_ieee57_branches()
    assert len(rows) == 80
    assert (38, 48) in {(a, b) for a, b, *_ in rows}


def test_ieee57_node_kinds():
    fam = generate_ieee57(seed=7)
    sc = fam["III"]
    kinds = {n.id: n.kind for n in sc.network.nodes}
    assert kinds[2] == "G" and kinds[4] == "I" and kinds[1] == "L"
    assert tuple(sorted(b for b, k in kinds.items() if k == "G")) == tuple(sorted(IEEE57_G))
    assert tuple(sorted(b for b, k in kinds.items() if k == "I")) == tuple(sorted(IEEE57_I))
    assert tuple(sorted(b for b, k in kinds.items() if k == "L")) == tuple(sorted(IEEE57_L))


def test_ieee57_parameter_ranges_and_costs():
    fam = generate_ieee57(seed=3)
    for n in fam["III"].network.nodes:
        assert 1.2 <= n.damping <= 1.7
        if n.kind == "G":
            assert 20 <= n.inertia <= 27
            assert 0.12 <= n.reactance_diff <= 0.19
            assert 6.4 <= n.tau_voltage <= 7.7
        if n.kind == "I":
            assert 4 <= n.inertia <= 5.5
        if n.kind != "L":
            assert n.cost_weight == pytest.approx(1 + 0.04 * (n.id - 1))
            assert (n.p_g_min, n.p_g_max) == (-0.002, 0.003)
            assert (n.u_min, n.u_max) == (0.98, 1.02)


def test_ieee57_event_schedule():
    fam = generate_ieee57(seed=7)
    ev = fam["III"].events
    first = [e for e in ev if e.time == 300.0]
    assert len(first) == 1 and first[0].node == 28 and first[0].dp == 0.015 and first[0].dq == 0.0
    second = [e for e in ev if e.time == 600.0]
    assert second[0].node == 28 and second[0].dq == 0.015 and second[0].dp == 0.0
    third = {e.node for e in ev if e.time == 900.0}
    assert third == {20, 27}
    fourth = {e.node for e in ev if e.time == 1200.0}
    assert fourth == {20, 27, 28, 12, 13, 43}
    fifth = {e.node for e in ev if e.time == 1500.0}
    assert fifth == {12, 13, 43}
    assert list(e.time for e in ev) == sorted(e.time for e in ev)


def test_ieee57_modes_differ_in_topology():
    fam = generate_ieee57(seed=7)
    n_lines = {m: len(fam[m].network.lines) for m in fam}
    assert n_lines["I"] < n_lines["II"] == n_lines["III"] == n_lines["IV"]
    assert len(fam["I"].network.comm_boundary) == 0
    assert len(fam["II"].network.comm_boundary) == 0
    assert len(fam["III"].network.comm_boundary) == 11
    assert fam["IV"].kappa_controlled and not fam["III"].kappa_controlled
    # the watched line ties cell 1 to cell 2
    net = fam["III"].network
    cell_of = {n.id: n.cell for n in net.nodes}
    assert {cell_of[38], cell_of[48]} == {1, 2}
    assert cell_of[20] == cell_of[27] == cell_of[28] == 3
    assert {cell_of[12], cell_of[13], cell_of[43]} == {1, 2}


def test_ieee57_pure_function_of_seed():
    a = generate_ieee57(seed=11)["IV"]
    b = generate_ieee57(seed=11)["IV"]
    assert scenario_digest(a) == scenario_digest(b)
    c = generate_ieee57(seed=12)["IV"]
    assert scenario_digest(a) != scenario_digest(c)


def test_ieee57_networks_validate():
    fam = generate_ieee57(seed=5)
    for sc in fam.values():
        assert validate_network(sc.network) == []


def test_partition_covers_all_buses_once():
    cells = ieee57_cells()
    seen = [b for buses in cells.values() for b in buses]
    assert sorted(seen) == list(range(1, 58))


def test_scenario_json_round_trip():
    sc = toy_2bus(seed=4)
    back = scenario_from_json(scenario_to_json(sc))
    assert back == sc
    assert scenario_digest(back) == scenario_digest(sc)
