"""Network data model: buses, lines, cells, communication graphs.

A `Network` is an immutable description of the physical grid (buses and
Pi-equivalent series branches), its partition into price cells, the
producer (PPO) ownership of generation buses, and the communication
graphs used by the cell coordinators.  A `Scenario` wraps a network
together with a consistent initial operating point, a timed load-step
schedule, and the per-cell participation-factor policy.

All numeric quantities are in per unit on the network bases
(U_base = 135 kV, S_base = 100 MVA, C_base = 1 MU / S_base); angles are
in radians and times in seconds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

KIND_GENERATOR = "G"
KIND_INVERTER = "I"
KIND_LOAD = "L"
NODE_KINDS = (KIND_GENERATOR, KIND_INVERTER, KIND_LOAD)


@dataclass(frozen=True)
class NodeSpec:
    """One bus of the network.

    `kind` is "G" (synchronous generator), "I" (inverter-interfaced
    source behaving as a virtual swing node), or "L" (pure load bus).
    Generation-related fields (ppo, inertia, cost_weight, p_g bounds,
    voltage bounds) are required for G/I nodes and must be absent on L
    nodes; excitation-related fields (reactance_diff, tau_voltage) exist
    only on G nodes.
    """

    id: int
    kind: str
    cell: int
    ppo: int | None = None
    damping: float = 1.0                 # A_i > 0, p.u. power per Hz of deviation
    inertia: float | None = None         # M_i, G/I only
    reactance_diff: float | None = None  # d-axis synchronous minus transient reactance, G only
    tau_voltage: float | None = None     # open-circuit voltage time constant, seconds, G only
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    cost_weight: float | None = None     # quadratic cost is p^2 / (2 w)
    p_g_min: float | None = None
    p_g_max: float | None = None
    u_min: float | None = None
    u_max: float | None = None


@dataclass(frozen=True)
class LineSpec:
    """Series branch between buses `i` and `j`.

    `conductance`/`susceptance` are the physical series admittance
    components in p.u. (susceptance is negative for inductive lines).
    `flow_limit` is the maximum permissible active flow magnitude and
    `congestion_threshold` the fraction of the limit above which the
    congestion penalty engages; both are optional and only meaningful
    for inter-cell lines.
    """

    i: int
    j: int
    conductance: float
    susceptance: float
    flow_limit: float | None = None
    congestion_threshold: float | None = None


@dataclass(frozen=True)
class Network:
    """Immutable grid description; safe to share read-only across threads."""

    nodes: tuple[NodeSpec, ...]
    lines: tuple[LineSpec, ...]
    cells: tuple[int, ...]
    comm_intra: tuple[tuple[int, int], ...]     # intra-cell communication edges (node ids)
    comm_boundary: tuple[tuple[int, int], ...]  # cross-boundary communication edges (node ids)
    u_base_kv: float = 135.0
    s_base_mva: float = 100.0
    c_base: float = 1.0
    f_nominal: float = 50.0

    def node_index(self) -> dict[int, int]:
        return {n.id: k for k, n in enumerate(self.nodes)}

    def cell_index(self) -> dict[int, int]:
        return {c: k for k, c in enumerate(self.cells)}

    def inter_cell_lines(self) -> list[int]:
        """Positions (into `lines`) of branches whose endpoints lie in different cells."""
        cell_of = {n.id: n.cell for n in self.nodes}
        return [k for k, ln in enumerate(self.lines) if cell_of[ln.i] != cell_of[ln.j]]


@dataclass(frozen=True)
class LoadEvent:
    """Piecewise-constant load change: at `time`, add (dp, dq) to bus `node`."""

    time: float
    node: int
    dp: float
    dq: float


@dataclass(frozen=True)
class Scenario:
    """Network plus initial operating point, event schedule and pricing policy.

    The initial loads are constructed so that the power-flow equations
    hold at (theta0, u0) with zero generation commands, i.e. the closed
    loop starts at rest.  `kappa0` holds the per-cell participation
    factors (fixed for modes I-III, initial value for the controlled
    mode IV).
    """

    name: str
    mode: str                    # "I" | "II" | "III" | "IV"
    network: Network
    theta0: tuple[float, ...]
    u0: tuple[float, ...]
    p_load0: tuple[float, ...]
    q_load0: tuple[float, ...]
    events: tuple[LoadEvent, ...]
    kappa0: tuple[float, ...]
    kappa_controlled: bool
    seed: int
    t_end: float = 1800.0
    dt_output: float = 0.1


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _components(n_nodes: int, edges: Iterable[tuple[int, int]]) -> list[int]:
    """Union-find connected components; returns a root label per node index."""
    parent = list(range(n_nodes))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return [find(k) for k in range(n_nodes)]


def validate_network(net: Network) -> list[str]:
    """Check every structural invariant; returns one message per violation.

    An empty list means the network is well formed.  Violations are data,
    not exceptions: callers decide whether to abort.
    """
    out: list[str] = []
    ids = [n.id for n in net.nodes]
    if len(set(ids)) != len(ids):
        out.append("duplicate node ids")
    idx = net.node_index()
    cellset = set(net.cells)

    for n in net.nodes:
        if n.kind not in NODE_KINDS:
            out.append(f"node {n.id}: unknown kind {n.kind!r}")
            continue
        if n.damping <= 0:
            out.append(f"node {n.id}: damping must be positive")
        if n.cell not in cellset:
            out.append(f"node {n.id}: cell {n.cell} not declared")
        if n.kind in (KIND_GENERATOR, KIND_INVERTER):
            if n.ppo is None:
                out.append(f"node {n.id}: generator without PPO")
            if n.inertia is None or n.inertia <= 0:
                out.append(f"node {n.id}: generator needs positive inertia")
            if n.cost_weight is None or n.cost_weight <= 0:
                out.append(f"node {n.id}: generator needs positive cost weight")
            if n.p_g_min is None or n.p_g_max is None or n.p_g_min > n.p_g_max:
                out.append(f"node {n.id}: generation bounds missing or inverted")
            if n.u_min is None or n.u_max is None or not n.u_min < n.u_max:
                out.append(f"node {n.id}: voltage bounds missing or inverted")
        if n.kind == KIND_GENERATOR:
            if n.reactance_diff is None or n.tau_voltage is None or n.tau_voltage <= 0:
                out.append(f"node {n.id}: generator needs reactance_diff and tau_voltage")
        if n.kind == KIND_LOAD:
            for bad in ("ppo", "cost_weight", "p_g_min", "p_g_max", "inertia"):
                if getattr(n, bad) is not None:
                    out.append(f"node {n.id}: load node carries generation field {bad}")
                    break

    for k, ln in enumerate(net.lines):
        if ln.i == ln.j:
            out.append(f"line {k} ({ln.i},{ln.j}): self loop")
        if ln.i not in idx or ln.j not in idx:
            out.append(f"line {k} ({ln.i},{ln.j}): unknown endpoint")
            continue
        if ln.flow_limit is not None and ln.flow_limit <= 0:
            out.append(f"line {k} ({ln.i},{ln.j}): flow limit must be positive")
        if ln.congestion_threshold is not None and not 0 < ln.congestion_threshold < 1:
            out.append(f"line {k} ({ln.i},{ln.j}): congestion threshold outside (0,1)")

    if out:
        return out  # structural problems make the graph checks unreliable

    n_nodes = len(net.nodes)
    cell_of = {n.id: n.cell for n in net.nodes}

    # Every physical component must be a union of whole cells, and every
    # cell internally connected.  A fully partitioned grid (isolated-cell
    # operation) is legal; a cell broken in two is not.
    phys_edges = [(idx[ln.i], idx[ln.j]) for ln in net.lines]
    comp = _components(n_nodes, phys_edges)
    for c in net.cells:
        members = [k for k, n in enumerate(net.nodes) if n.cell == c]
        if not members:
            out.append(f"cell {c}: empty")
            continue
        intra = [(a, b) for (a, b) in phys_edges
                 if net.nodes[a].cell == c and net.nodes[b].cell == c]
        sub = _components(n_nodes, intra)
        if len({sub[k] for k in members}) > 1:
            out.append(f"cell {c}: physical subgraph disconnected")
        if len({comp[k] for k in members}) > 1:
            out.append(f"cell {c}: split across physical components")

    for a, b in net.comm_intra:
        if cell_of.get(a) != cell_of.get(b):
            out.append(f"communication edge ({a},{b}): declared intra-cell but crosses cells")
    for a, b in net.comm_boundary:
        if cell_of.get(a) == cell_of.get(b):
            out.append(f"communication edge ({a},{b}): declared boundary but stays in cell {cell_of.get(a)}")

    for c in net.cells:
        members = [k for k, n in enumerate(net.nodes) if n.cell == c]
        edges = [(idx[a], idx[b]) for (a, b) in net.comm_intra
                 if cell_of.get(a) == c and cell_of.get(b) == c]
        sub = _components(n_nodes, edges)
        if len({sub[k] for k in members}) > 1:
            out.append(f"cell {c} communication graph disconnected")

    return out


# ---------------------------------------------------------------------------
# graph matrices
# ---------------------------------------------------------------------------

def incidence(edges: Sequence[tuple[int, int]], n_nodes: int) -> np.ndarray:
    """Oriented incidence matrix; column for edge (i, j) is +1 at i, -1 at j.

    Edge endpoints are 0-based node positions.
    """
    D = np.zeros((n_nodes, len(edges)))
    for k, (a, b) in enumerate(edges):
        if not (0 <= a < n_nodes and 0 <= b < n_nodes):
            raise ValueError(f"edge ({a},{b}) out of range for {n_nodes} nodes")
        D[a, k] += 1.0
        D[b, k] -= 1.0
    return D


def extended_comm_incidence(net: Network, kappa: Sequence[float]) -> np.ndarray:
    """Weighted incidence of the union communication graph.

    Intra-cell columns are plain +1/-1.  A boundary column for edge
    (i, j) with i in cell k1 and j in cell k2 carries +1 at i and
    -kappa[k1]/kappa[k2] at j, so that a price vector lies in the left
    kernel exactly when lambda_i = (kappa_k1/kappa_k2) * lambda_j across
    every boundary.  `kappa` is ordered like `net.cells` and must be
    strictly positive.
    """
    kap = np.asarray(kappa, dtype=float)
    if kap.shape != (len(net.cells),) or np.any(kap <= 0):
        raise ValueError("kappa must be one strictly positive value per cell")
    idx = net.node_index()
    cidx = net.cell_index()
    cell_of = {n.id: n.cell for n in net.nodes}
    n = len(net.nodes)
    m = len(net.comm_intra) + len(net.comm_boundary)
    D = np.zeros((n, m))
    for k, (a, b) in enumerate(net.comm_intra):
        D[idx[a], k] += 1.0
        D[idx[b], k] -= 1.0
    off = len(net.comm_intra)
    for k, (a, b) in enumerate(net.comm_boundary):
        eta = kap[cidx[cell_of[a]]] / kap[cidx[cell_of[b]]]
        D[idx[a], off + k] += 1.0
        D[idx[b], off + k] -= eta
    return D


def cell_laplacian(net: Network) -> tuple[np.ndarray, np.ndarray]:
    """Incidence and Laplacian of the condensed cell graph.

    Each inter-cell line contributes its own column (parallel lines are
    kept separate), oriented from the cell of the line's first endpoint
    to the cell of its second.
    """
    cidx = net.cell_index()
    cell_of = {n.id: n.cell for n in net.nodes}
    cols = []
    for k in net.inter_cell_lines():
        ln = net.lines[k]
        cols.append((cidx[cell_of[ln.i]], cidx[cell_of[ln.j]]))
    Dz = incidence(cols, len(net.cells))
    return Dz, Dz @ Dz.T


# ---------------------------------------------------------------------------
# scenario (de)serialization
# ---------------------------------------------------------------------------

def scenario_to_dict(sc: Scenario) -> dict:
    net = sc.network
    return {
        "name": sc.name,
        "mode": sc.mode,
        "seed": sc.seed,
        "t_end": sc.t_end,
        "dt_output": sc.dt_output,
        "kappa0": list(sc.kappa0),
        "kappa_controlled": sc.kappa_controlled,
        "bases": {"u_kv": net.u_base_kv, "s_mva": net.s_base_mva,
                  "c": net.c_base, "f_hz": net.f_nominal},
        "cells": list(net.cells),
        "nodes": [
            {k: v for k, v in vars(n).items() if v is not None}
            for n in net.nodes
        ],
        "lines": [
            {k: v for k, v in vars(ln).items() if v is not None}
            for ln in net.lines
        ],
        "comm_intra": [list(e) for e in net.comm_intra],
        "comm_boundary": [list(e) for e in net.comm_boundary],
        "theta0": list(sc.theta0),
        "u0": list(sc.u0),
        "p_load0": list(sc.p_load0),
        "q_load0": list(sc.q_load0),
        "events": [[e.time, e.node, e.dp, e.dq] for e in sc.events],
    }


def scenario_from_dict(d: dict) -> Scenario:
    bases = d.get("bases", {})
    net = Network(
        nodes=tuple(NodeSpec(**nd) for nd in d["nodes"]),
        lines=tuple(LineSpec(**ld) for ld in d["lines"]),
        cells=tuple(d["cells"]),
        comm_intra=tuple((a, b) for a, b in d["comm_intra"]),
        comm_boundary=tuple((a, b) for a, b in d["comm_boundary"]),
        u_base_kv=bases.get("u_kv", 135.0),
        s_base_mva=bases.get("s_mva", 100.0),
        c_base=bases.get("c", 1.0),
        f_nominal=bases.get("f_hz", 50.0),
    )
    return Scenario(
        name=d["name"],
        mode=d["mode"],
        network=net,
        theta0=tuple(d["theta0"]),
        u0=tuple(d["u0"]),
        p_load0=tuple(d["p_load0"]),
        q_load0=tuple(d["q_load0"]),
        events=tuple(LoadEvent(*e) for e in d["events"]),
        kappa0=tuple(d["kappa0"]),
        kappa_controlled=d["kappa_controlled"],
        seed=d["seed"],
        t_end=d["t_end"],
        dt_output=d["dt_output"],
    )


def scenario_to_json(sc: Scenario) -> str:
    return json.dumps(scenario_to_dict(sc), indent=1, sort_keys=True)


def scenario_from_json(text: str) -> Scenario:
    return scenario_from_dict(json.loads(text))


def scenario_digest(sc: Scenario) -> str:
    """Stable content hash of a scenario (canonical JSON, sha256)."""
    blob = json.dumps(scenario_to_dict(sc), sort_keys=True,
                      separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
