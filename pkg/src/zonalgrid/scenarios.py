"""Built-in scenario families: the 57-bus study system and small fixtures.

The 57-bus system uses the standard published branch data (series R/X and
line charging, converted to series admittances on the system base, with
charging folded onto the terminal buses as shunts).  Node types follow
the fixed G/I/L assignment below; machine parameters are drawn uniformly
from their documented ranges with a seeded generator, so one seed fixes
the whole family.

The grid is partitioned into three cells.  The published material leaves
the exact bus-to-cell map open, so the partition below is a documented
default chosen to satisfy every stated structural property (cell 3 owns
buses 20/27/28, cells 1 and 2 split buses 43 and 12/13, and line (38,48)
ties cell 1 to cell 2); it can be overridden via `cells_override`.

Four topology modes of one seeded build:
  I   isolated cells: inter-cell lines and boundary communication removed
  II  physically coupled, communication still cell-local
  III fully coupled, uniform participation factors
  IV  fully coupled, participation factors driven by congestion control

Initial angles and voltages are constructed, not free-form sampled: a
power-flow solve places small seeded injections at every bus (zero at
the event buses, a deliberate sink at bus 12, and a calibrated transfer
loading line (38,48) to a prescribed fraction of its limit), with zero
reactive injection at generator and event buses.  Initial loads then
balance the flow equations exactly, so each run starts at rest.
"""

from __future__ import annotations

import importlib.resources as resources

import numpy as np

from .netmodel import (KIND_GENERATOR, KIND_INVERTER, KIND_LOAD, LineSpec,
                       LoadEvent, Network, NodeSpec, Scenario,
                       validate_network)

IEEE57_G = (2, 3, 6, 8, 9, 10, 19, 21, 29, 30, 32, 34, 37, 39, 40, 41, 44, 48, 55)
IEEE57_I = (4, 11, 14, 15, 16, 17, 18, 22, 24, 25, 26, 33, 36, 42, 45, 46, 49, 50, 53)
IEEE57_L = (1, 5, 7, 12, 13, 20, 23, 27, 28, 31, 35, 38, 43, 47, 51, 52, 54, 56, 57)

# documented default partition (cell id -> buses)
CELL_1 = tuple(range(34, 45)) + (56, 57)            # south
CELL_2 = tuple(range(1, 18)) + tuple(range(45, 52))  # north
CELL_3 = tuple(range(18, 34)) + (52, 53, 54, 55)     # west

PG_MIN, PG_MAX = -0.002, 0.003
U_MIN, U_MAX = 0.98, 1.02
FLOW_LIMIT = 0.01
CONGESTION_THRESHOLD = 0.8

EVENT_MINUTES = (5.0, 10.0, 15.0, 20.0, 25.0)
STEP_BIG = 0.015
STEP_SMALL = 0.0075

# Constructed base operating point.  Every tie line's standing flow is
# placed so that the event-driven swings of the whole schedule keep its
# congestion rate inside the control threshold, except the watched line
# (38,48), whose base sits just below the threshold so that the fourth
# load step (and only it) pushes the line over its limit.  BUS12_BASE_LOAD
# is the standing consumption at bus 12 whose reversal at the final event
# drives the largest frequency excursion.
TIE_BASE_FLOWS = {
    (4, 18): 0.0025,
    (7, 29): -0.0052,
    (34, 32): 0.002,
    (22, 38): 0.0018,
    (11, 43): -0.0031,
    (44, 45): -0.0002,
    (38, 49): -0.0001,
    (38, 48): 0.0072,
    (9, 55): 0.0064,
}
# The western ties import at the base point, giving that cell a standing
# positive demand: its clearing price then stays far enough above zero
# that the price undershoot after the fourth load step (the largest
# single shock) cannot drag high-weight producers more than the allowed
# excursion below their lower generation bound.
BUS12_BASE_LOAD = 0.0105
# Standing feed-ins at buses 13 and 43 (coupled modes).  Their reversals
# at the final event add load, slightly overcompensating the bus-12
# removal in aggregate: the reversed state's net demand stays marginally
# positive, so clearing prices do not dive negative (negative prices
# invert the participation mechanism's authority over cell generation,
# which runs the congestion loop against itself while a line is still
# above threshold), and no cell's net reversal is large enough to park a
# tie line beyond its limit.
BUS13_BASE_FEEDIN = 0.023
BUS43_BASE_FEEDIN = 0.013
# Isolated mode carries its own standing feed-in at bus 13 only: the
# northern cell's reversal balance (-0.022) then parks its two most
# generous producers at their lower bounds, and the resulting multiplier
# chatter keeps the post-reversal window detectably unconverged, while
# each cell's demand stays inside its total generation range.
BUS13_BASE_FEEDIN_ISOLATED = 0.0145
# Calibration transfer dipoles sit at or near their tie's endpoints, but
# never on an event bus (that would cancel the bus's prescribed standing
# load).  Line (11,41) carries no target of its own: bus 43 has degree
# two, so the flows of the two ties at bus 11 share a single angle degree
# of freedom and only one of them can be pinned.
TRANSFER_ANCHORS = {(11, 43): (11, 41)}
JITTER = 2e-4

# Series impedances are rebased by this factor relative to the published
# branch table (charging susceptance divided by it).  At the table's raw
# values the damping range above leaves the lossy swing modes of the
# closed loop slightly undamped (growth ~ +0.013/s); the rebase keeps
# every structural property (R/X ratios, topology, relative line
# strengths) while placing the coupling scale where the loop is small-
# signal stable with margin.
IMPEDANCE_SCALE = 10.0


def load_ieee57_branches() -> list[tuple[int, int, float, float, float]]:
    """Branch records (from, to, R, X, B_charging) from the packaged table."""
    text = resources.files("zonalgrid.data").joinpath("ieee57_branches.txt").read_text()
    out = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        a, b, r, x, c = line.split()
        out.append((int(a), int(b), float(r), float(x), float(c)))
    if len(out) != 80:
        raise RuntimeError(f"expected 80 branch records, found {len(out)}")
    return out


def ieee57_cells() -> dict[int, tuple[int, ...]]:
    return {1: CELL_1, 2: CELL_2, 3: CELL_3}


def _series_admittance(r: float, x: float) -> tuple[float, float]:
    z2 = r * r + x * x
    return r / z2, -x / z2


def _build_ieee57_network(mode: str, params: dict,
                          cells_map: dict[int, tuple[int, ...]]) -> Network:
    cell_of = {b: c for c, buses in cells_map.items() for b in buses}
    branches = load_ieee57_branches()
    shunt_b = {b: 0.0 for b in range(1, 58)}
    lines = []
    for a, b, r, x, chg in branches:
        g, bs = _series_admittance(r * IMPEDANCE_SCALE, x * IMPEDANCE_SCALE)
        shunt_b[a] += chg / (2.0 * IMPEDANCE_SCALE)
        shunt_b[b] += chg / (2.0 * IMPEDANCE_SCALE)
        inter = cell_of[a] != cell_of[b]
        if mode == "I" and inter:
            continue
        lines.append(LineSpec(i=a, j=b, conductance=g, susceptance=bs,
                              flow_limit=FLOW_LIMIT if inter else None,
                              congestion_threshold=CONGESTION_THRESHOLD if inter else None))
    nodes = []
    for b in range(1, 58):
        if b in IEEE57_G:
            kind = KIND_GENERATOR
        elif b in IEEE57_I:
            kind = KIND_INVERTER
        else:
            kind = KIND_LOAD
        gen = kind != KIND_LOAD
        nodes.append(NodeSpec(
            id=b, kind=kind, cell=cell_of[b],
            ppo=cell_of[b] if gen else None,
            damping=params["damping"][b],
            inertia=params["inertia"].get(b) if gen else None,
            reactance_diff=params["xd_diff"].get(b) if kind == KIND_GENERATOR else None,
            tau_voltage=params["tau_u"].get(b) if kind == KIND_GENERATOR else None,
            shunt_g=0.0, shunt_b=shunt_b[b],
            cost_weight=1.0 + 0.04 * (b - 1) if gen else None,
            p_g_min=PG_MIN if gen else None,
            p_g_max=PG_MAX if gen else None,
            u_min=U_MIN if gen else None,
            u_max=U_MAX if gen else None,
        ))
    comm_intra = []
    comm_boundary = []
    for a, b, *_ in branches:
        if cell_of[a] == cell_of[b]:
            comm_intra.append((a, b))
        elif mode in ("III", "IV"):
            comm_boundary.append((a, b))
    return Network(nodes=tuple(nodes), lines=tuple(lines),
                   cells=tuple(sorted(cells_map)),
                   comm_intra=tuple(comm_intra),
                   comm_boundary=tuple(comm_boundary))


def _craft_initial_state(net: Network, rng, tie_targets=None,
                         feedin_13=0.0, feedin_43=0.0):
    """Construct (theta0, u0) hitting seeded injection targets.

    Zero active targets at the event buses except the standing sink at
    bus 12; zero reactive injection at generator and event buses; one
    slack per physical component absorbs the jitter imbalance.
    `tie_targets` maps endpoint pairs to standing-flow values; a transfer
    injection across each pair is calibrated by damped Newton iteration
    (finite-difference sensitivities) until the first line of each pair
    carries its target.
    """
    from . import physics
    grid = physics.compile_network(net)
    n = grid.n
    pos = {int(b): k for k, b in enumerate(grid.ids)}

    p_targets = rng.uniform(-JITTER, JITTER, size=n)
    for b in (20, 27, 28):
        if b in pos:
            p_targets[pos[b]] = 0.0
    if 12 in pos:
        p_targets[pos[12]] = -BUS12_BASE_LOAD
    if 13 in pos:
        p_targets[pos[13]] = feedin_13
    if 43 in pos:
        p_targets[pos[43]] = feedin_43

    u_init = np.ones(n)
    q_free = np.zeros(n, dtype=bool)
    q_free[grid.g_idx] = True
    for b in (12, 13, 20, 27, 28, 43):
        if b in pos:
            q_free[pos[b]] = True
    fixed = ~q_free
    u_init[fixed] = 1.0 + rng.uniform(-JITTER, JITTER, size=int(np.sum(fixed)))

    # one slack per physical component: its lowest generator bus
    from .netmodel import _components
    comp = _components(n, [(pos[ln.i], pos[ln.j]) for ln in net.lines])
    slack = []
    for root in sorted(set(comp)):
        gens = [k for k in grid.gi_idx if comp[k] == root]
        slack.append(min(gens))

    pairs = [] if not tie_targets else list(tie_targets.items())
    line_of_pair = []
    anchors = []
    for (a, b), _ in pairs:
        hit = [k for k, ln in enumerate(net.lines) if (ln.i, ln.j) == (a, b)]
        if not hit:
            raise ValueError(f"tie line ({a},{b}) not present")
        line_of_pair.append(hit[0])
        # transfer injections may not sit on an event bus, or they would
        # silently cancel that bus's prescribed standing load
        anchors.append(TRANSFER_ANCHORS.get((a, b), (a, b)))
    target = np.array([t for _, t in pairs])

    def solve(x):
        pt = p_targets.copy()
        for (a, b), xv in zip(anchors, x):
            pt[pos[a]] += xv
            pt[pos[b]] -= xv
        th, u = physics.solve_power_flow(grid, pt, q_free, u_init, slack)
        return th, u

    def flows(th, u):
        inj = physics.nodal_injections(th, u, grid)
        return inj.p_from[line_of_pair]

    m = len(pairs)
    x = target.copy()
    th, u = solve(x)
    if m == 0:
        return th, u
    f = flows(th, u)
    for _ in range(25):
        if np.max(np.abs(f - target)) < 1e-10:
            break
        h = 1e-5
        S = np.zeros((m, m))
        for c in range(m):
            xp = x.copy()
            xp[c] += h
            thp, up = solve(xp)
            S[:, c] = (flows(thp, up) - f) / h
        dx = np.linalg.solve(S, target - f)
        big = float(np.max(np.abs(dx)))
        if big > 0.02:
            dx *= 0.02 / big
        x = x + dx
        th, u = solve(x)
        f = flows(th, u)
    if np.max(np.abs(f - target)) > 1e-8:
        raise RuntimeError("tie-flow calibration did not converge: "
                           f"residual {np.max(np.abs(f - target)):.2e}")
    return th, u


def _ieee57_events(p_load0: np.ndarray, q_load0: np.ndarray,
                   pos: dict[int, int]) -> tuple[LoadEvent, ...]:
    t1, t2, t3, t4, t5 = (60.0 * m for m in EVENT_MINUTES)
    ev = [
        LoadEvent(t1, 28, STEP_BIG, 0.0),
        LoadEvent(t2, 28, 0.0, STEP_BIG),
        LoadEvent(t3, 20, STEP_SMALL, STEP_SMALL),
        LoadEvent(t3, 27, STEP_SMALL, STEP_SMALL),
        LoadEvent(t4, 20, -STEP_SMALL, -STEP_SMALL),
        LoadEvent(t4, 27, -STEP_SMALL, -STEP_SMALL),
        LoadEvent(t4, 28, -STEP_BIG, -STEP_BIG),
        LoadEvent(t4, 12, STEP_SMALL, STEP_SMALL),
        LoadEvent(t4, 13, STEP_SMALL, STEP_SMALL),
        LoadEvent(t4, 43, STEP_SMALL, STEP_SMALL),
    ]
    # reversed load flow: total consumption at the stepped buses flips sign
    for b in (12, 13, 43):
        p_now = p_load0[pos[b]] + STEP_SMALL
        q_now = q_load0[pos[b]] + STEP_SMALL
        ev.append(LoadEvent(t5, b, -2.0 * p_now, -2.0 * q_now))
    return tuple(ev)


def generate_ieee57(seed: int, cells_override: dict[int, tuple[int, ...]] | None = None
                    ) -> dict[str, Scenario]:
    """Seeded 57-bus scenario family; a pure function of (seed, partition)."""
    from .oracle import balance_initial_loads

    cells_map = cells_override if cells_override is not None else ieee57_cells()
    ss = np.random.SeedSequence(seed)
    params_rng, full_rng, cut_rng = (np.random.default_rng(s) for s in ss.spawn(3))

    damping = {b: params_rng.uniform(1.2, 1.7) for b in range(1, 58)}
    inertia = {}
    xd_diff = {}
    tau_u = {}
    for b in range(1, 58):
        if b in IEEE57_G:
            inertia[b] = params_rng.uniform(20.0, 27.0)
            xd_diff[b] = params_rng.uniform(0.12, 0.19)
            tau_u[b] = params_rng.uniform(6.4, 7.7)
        elif b in IEEE57_I:
            inertia[b] = params_rng.uniform(4.0, 5.5)
    params = {"damping": damping, "inertia": inertia,
              "xd_diff": xd_diff, "tau_u": tau_u}

    out: dict[str, Scenario] = {}
    nets = {mode: _build_ieee57_network(mode, params, cells_map)
            for mode in ("I", "II", "III", "IV")}
    for mode in ("I", "II", "III", "IV"):
        net = nets[mode]
        bad = validate_network(net)
        if bad:
            raise RuntimeError("generated network invalid: " + "; ".join(bad))

    # one constructed operating point for the coupled modes, one for mode I
    full = nets["II"]
    th_full, u_full = _craft_initial_state(full, full_rng,
                                           tie_targets=TIE_BASE_FLOWS,
                                           feedin_13=BUS13_BASE_FEEDIN,
                                           feedin_43=BUS43_BASE_FEEDIN)
    th_cut, u_cut = _craft_initial_state(nets["I"], cut_rng,
                                         feedin_13=BUS13_BASE_FEEDIN_ISOLATED)

    for mode in ("I", "II", "III", "IV"):
        net = nets[mode]
        th0, u0 = (th_cut, u_cut) if mode == "I" else (th_full, u_full)
        p0, q0 = balance_initial_loads(net, th0, u0)
        pos = {nd.id: k for k, nd in enumerate(net.nodes)}
        events = _ieee57_events(p0, q0, pos)
        out[mode] = Scenario(
            name=f"ieee57-{mode}", mode=mode, network=net,
            theta0=tuple(th0), u0=tuple(u0),
            p_load0=tuple(p0), q_load0=tuple(q0),
            events=events, kappa0=(1.0, 1.0, 1.0),
            kappa_controlled=(mode == "IV"), seed=seed,
            t_end=1800.0, dt_output=0.1)
    return out


# ---------------------------------------------------------------------------
# small fixtures
# ---------------------------------------------------------------------------

def toy_2bus(seed: int = 0, step: float = 0.002) -> Scenario:
    """One generator feeding one load bus over a lossy line; single cell."""
    nodes = (
        NodeSpec(id=1, kind=KIND_GENERATOR, cell=1, ppo=1, damping=1.4,
                 inertia=4.0, reactance_diff=0.15, tau_voltage=1.5,
                 cost_weight=1.0, p_g_min=PG_MIN, p_g_max=PG_MAX,
                 u_min=U_MIN, u_max=U_MAX),
        NodeSpec(id=2, kind=KIND_LOAD, cell=1, damping=1.4),
    )
    lines = (LineSpec(i=1, j=2, conductance=0.5, susceptance=-5.0),)
    net = Network(nodes=nodes, lines=lines, cells=(1,),
                  comm_intra=((1, 2),), comm_boundary=())
    events = (LoadEvent(1.0, 2, step, step / 2),) if step else ()
    return Scenario(name="toy-2bus", mode="III", network=net,
                    theta0=(0.0, 0.0), u0=(1.0, 1.0),
                    p_load0=(0.0, 0.0), q_load0=(0.0, 0.0),
                    events=events, kappa0=(1.0,), kappa_controlled=False,
                    seed=seed, t_end=100.0, dt_output=0.05)


def toy_3cell(seed: int = 0, step: float = 0.002, kappa=(1.0, 1.0, 1.0),
              kappa_controlled: bool = False, t_end: float = 120.0) -> Scenario:
    """Three two-bus cells in a ring; tie lines carry limits and thresholds."""
    nodes = []
    for c in (1, 2, 3):
        gb, lb = 2 * c - 1, 2 * c
        nodes.append(NodeSpec(id=gb, kind=KIND_GENERATOR, cell=c, ppo=c,
                              damping=1.4, inertia=4.0, reactance_diff=0.15,
                              tau_voltage=1.5,
                              cost_weight=1.0 + 0.04 * (gb - 1),
                              p_g_min=PG_MIN, p_g_max=PG_MAX,
                              u_min=U_MIN, u_max=U_MAX))
        nodes.append(NodeSpec(id=lb, kind=KIND_LOAD, cell=c, damping=1.4))
    lines = (
        LineSpec(1, 2, 0.8, -8.0),
        LineSpec(3, 4, 0.8, -8.0),
        LineSpec(5, 6, 0.8, -8.0),
        LineSpec(2, 3, 0.5, -5.0, flow_limit=FLOW_LIMIT,
                 congestion_threshold=CONGESTION_THRESHOLD),
        LineSpec(4, 5, 0.5, -5.0, flow_limit=FLOW_LIMIT,
                 congestion_threshold=CONGESTION_THRESHOLD),
        LineSpec(6, 1, 0.5, -5.0, flow_limit=FLOW_LIMIT,
                 congestion_threshold=CONGESTION_THRESHOLD),
    )
    net = Network(nodes=tuple(nodes), lines=lines, cells=(1, 2, 3),
                  comm_intra=((1, 2), (3, 4), (5, 6)),
                  comm_boundary=((2, 3), (4, 5), (6, 1)))
    events = (LoadEvent(1.0, 4, step, step / 2),) if step else ()
    return Scenario(name="toy-3cell", mode="IV" if kappa_controlled else "III",
                    network=net, theta0=(0.0,) * 6, u0=(1.0,) * 6,
                    p_load0=(0.0,) * 6, q_load0=(0.0,) * 6,
                    events=events, kappa0=tuple(kappa),
                    kappa_controlled=kappa_controlled, seed=seed,
                    t_end=t_end, dt_output=0.05)


def random_small_scenario(seed: int) -> Scenario:
    """Randomized strictly convex instance with at most six buses.

    Machine constants are kept small so the swing modes settle within the
    horizon; the structure (kinds, cells, line admittances, one or two
    load steps) is drawn from the seed.
    """
    rng = np.random.default_rng(np.random.SeedSequence([987, seed]))
    n = int(rng.integers(3, 7))
    kinds = [KIND_GENERATOR]
    for _ in range(n - 1):
        kinds.append((KIND_GENERATOR, KIND_INVERTER, KIND_LOAD)[int(rng.integers(0, 3))])
    n_cells = 1 if n < 4 else int(rng.integers(1, 3))
    split = n // 2 if n_cells == 2 else n
    nodes = []
    for k in range(n):
        b = k + 1
        cell = 1 if k < split else 2
        kind = kinds[k]
        gen = kind != KIND_LOAD
        nodes.append(NodeSpec(
            id=b, kind=kind, cell=cell, ppo=cell if gen else None,
            damping=float(rng.uniform(1.2, 1.7)),
            inertia=float(rng.uniform(2.0, 5.0)) if gen else None,
            reactance_diff=float(rng.uniform(0.12, 0.19)) if kind == KIND_GENERATOR else None,
            tau_voltage=float(rng.uniform(1.0, 2.0)) if kind == KIND_GENERATOR else None,
            cost_weight=1.0 + 0.04 * k if gen else None,
            p_g_min=PG_MIN if gen else None, p_g_max=PG_MAX if gen else None,
            u_min=U_MIN if gen else None, u_max=U_MAX if gen else None))
    edges = [(k + 1, k + 2) for k in range(n - 1)]  # path keeps it connected
    if n > 3 and rng.random() < 0.7:
        edges.append((1, n))
    lines = tuple(LineSpec(a, b,
                           conductance=float(rng.uniform(0.2, 1.5)),
                           susceptance=float(-rng.uniform(3.0, 12.0)))
                  for a, b in edges)
    cell_of = {nd.id: nd.cell for nd in nodes}
    comm_intra = tuple(e for e in edges if cell_of[e[0]] == cell_of[e[1]])
    comm_boundary = tuple(e for e in edges if cell_of[e[0]] != cell_of[e[1]])
    net = Network(nodes=tuple(nodes), lines=lines,
                  cells=tuple(sorted({nd.cell for nd in nodes})),
                  comm_intra=comm_intra, comm_boundary=comm_boundary)

    n_gen = sum(1 for k in kinds if k != KIND_LOAD)
    total = float(rng.uniform(0.2, 0.6)) * n_gen * PG_MAX
    bus = int(rng.integers(1, n + 1))
    events = (LoadEvent(1.0, bus, total, total / 4),)
    return Scenario(name=f"random-{seed}", mode="III", network=net,
                    theta0=(0.0,) * n, u0=(1.0,) * n,
                    p_load0=(0.0,) * n, q_load0=(0.0,) * n,
                    events=events,
                    kappa0=tuple(1.0 for _ in range(len(net.cells))),
                    kappa_controlled=False, seed=seed,
                    t_end=100.0, dt_output=0.1)


BUILTIN_NAMES = ("ieee57-I", "ieee57-II", "ieee57-III", "ieee57-IV",
                 "toy-2bus", "toy-3cell")


def builtin_scenario(name: str, seed: int) -> Scenario:
    """Scenario for a built-in name; deterministic in (name, seed)."""
    if name.startswith("ieee57-"):
        mode = name.split("-", 1)[1]
        fam = generate_ieee57(seed)
        if mode not in fam:
            raise KeyError(f"unknown mode {mode!r}")
        return fam[mode]
    if name == "toy-2bus":
        return toy_2bus(seed)
    if name == "toy-3cell":
        return toy_3cell(seed)
    raise KeyError(f"unknown scenario {name!r}; choose from {BUILTIN_NAMES}")
