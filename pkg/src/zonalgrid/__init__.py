"""Distributed real-time zonal pricing on lossy AC networks: simulation
and verification tooling."""

from .netmodel import (LineSpec, LoadEvent, Network, NodeSpec, Scenario,
                       cell_laplacian, extended_comm_incidence, incidence,
                       scenario_digest, scenario_from_json, scenario_to_json,
                       validate_network)
from .physics import (PhysState, PowerInjections, dae_rhs, dominant_flow,
                      nodal_injections, node_loss_terms, solve_load_algebraic)
from .ppo import CostModel, PpoGains, PpoState, cost_gradient, ppo_rhs, proj_plus
from .cc import CcState, cc_rhs, rebuild_boundary_weights
from .congestion import CongestionState, barrier, congestion_snapshot, kappa_rhs
from .simulator import (Gains, RunOptions, SimState, Trajectory, apply_event,
                        event_windows, export_csv, integrate, run_manifest,
                        steady_state)
from .oracle import (KktReport, balance_initial_loads, economic_report,
                     kkt_residuals, solve_centralized)
from .scenarios import (builtin_scenario, generate_ieee57, random_small_scenario,
                        toy_2bus, toy_3cell)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
