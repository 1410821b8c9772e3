"""Cell-coordinator price dynamics on the communication graph.

Nodal prices integrate the local supply/demand/loss mismatch; the edge
multipliers integrate price differences along communication edges and
feed back into the price flow, driving intra-cell consensus and, across
boundary edges, the configured inter-cell price ratios.  Boundary edge
weights are the ratio of the participation factors of the two endpoint
cells, so a price vector is stationary for the consensus part exactly
when every nodal price equals its cell's factor times one common value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics import Grid, _as_grid


@dataclass
class CcState:
    """Prices per node and one multiplier per communication edge.

    Edge ordering is all intra-cell edges first, then boundary edges.
    Boundary-edge multipliers are bookkept by the lexicographically
    smaller of the two cell ids; this assignment is organizational only
    and does not enter the dynamics.
    """

    lam: np.ndarray
    nu: np.ndarray


def boundary_eta(net, kappa: np.ndarray) -> np.ndarray:
    """Boundary-edge weights: factor of the first endpoint's cell over the second's."""
    grid = _as_grid(net)
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa <= 0):
        raise ValueError("participation factors must be strictly positive")
    if len(grid.cb_a) == 0:
        return np.zeros(0)
    return kappa[grid.cb_ca] / kappa[grid.cb_cb]


def rebuild_boundary_weights(net, kappa: np.ndarray) -> np.ndarray:
    """Weighted incidence of the union communication graph for given factors.

    Intra-cell columns are plain +1/-1 and are never touched; boundary
    columns carry +1 at the first endpoint and -eta at the second, with
    eta recomputed from the instantaneous `kappa`.  Scaling every factor
    by a common constant leaves the result unchanged.
    """
    grid = _as_grid(net)
    eta = boundary_eta(grid, kappa)
    n = grid.n
    D = np.zeros((n, len(grid.ci_a) + len(grid.cb_a)))
    D[:, :len(grid.ci_a)] = grid.D_intra
    off = len(grid.ci_a)
    for k in range(len(grid.cb_a)):
        D[grid.cb_a[k], off + k] += 1.0
        D[grid.cb_b[k], off + k] -= eta[k]
    return D


def cc_rhs(s: CcState, p_g_node: np.ndarray, phi: np.ndarray,
           p_load: np.ndarray, d_plus: np.ndarray,
           tau_lam: float = 0.01, tau_nu: float = 0.01
           ) -> tuple[np.ndarray, np.ndarray]:
    """Price and multiplier derivatives.

    `p_g_node` is the full-length generation vector (zero at load buses),
    `phi` the per-node loss shares, and `d_plus` the weighted incidence
    from `rebuild_boundary_weights`.  With uniform factors the column
    sums of `d_plus` vanish, so the total price moves only with the
    aggregate imbalance.
    """
    dlam = (-p_g_node + phi + p_load - d_plus @ s.nu) / tau_lam
    dnu = (d_plus.T @ s.lam) / tau_nu
    return dlam, dnu
