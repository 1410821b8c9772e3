"""Flow-based congestion management on the condensed cell graph.

Each inter-cell line has a congestion rate (dominant directional flow
over its limit) and an odd barrier penalty that is zero below the line's
threshold and grows without bound as the rate approaches one.  The
per-cell log participation factors follow a Laplacian flow driven by the
barrier vector mapped onto cells, so congestion on a line tilts the
price ratio of the two cells it couples until the flow retreats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .physics import _as_grid, dominant_flow, nodal_injections

BARRIER_CAP = 50.0   # explicit fixed-step integration needs a modest slope ceiling
BARRIER_EDGE = 1e-6  # |rate| >= 1 - BARRIER_EDGE counts as a violation


@dataclass
class CongestionState:
    """Log participation factors per cell; factors are their exponential."""

    phi: np.ndarray

    @property
    def kappa(self) -> np.ndarray:
        return np.exp(self.phi)


def barrier(c, c_min):
    """Barrier value(s) for congestion rate(s) `c` with threshold `c_min`.

    Zero for |c| < c_min, then c * (|c| - c_min) / ((1 - |c|)(1 - c_min)),
    an odd, continuous function increasing without bound as |c|
    approaches 1.  The value saturates at +/- BARRIER_CAP (and hard at
    |c| >= 1 - 1e-6) so the fixed-step closed loop stays integrable; use
    `violation` to detect the hard-saturation regime.
    """
    c = np.asarray(c, dtype=float)
    c_min = np.asarray(c_min, dtype=float)
    a = np.abs(c)
    inside = a < c_min
    saturated = a >= 1.0 - BARRIER_EDGE
    denom = np.where(saturated, 1.0, (1.0 - a) * (1.0 - c_min))
    g = np.where(inside, 0.0, c * (a - c_min) / denom)
    g = np.where(saturated, np.sign(c) * BARRIER_CAP, g)
    return np.clip(g, -BARRIER_CAP, BARRIER_CAP)


def violation(c) -> np.ndarray:
    """True where a congestion rate is at or beyond the saturation edge."""
    return np.abs(np.asarray(c, dtype=float)) >= 1.0 - BARRIER_EDGE


def kappa_rhs(state: CongestionState, gamma: np.ndarray,
              lap: np.ndarray, dz: np.ndarray,
              tau_phi: float = 10.0) -> np.ndarray:
    """Log-factor derivatives: Laplacian consensus plus barrier drive.

    With uniform tau_phi the total of the log factors obeys
    d(sum phi)/dt = -(1^T dz gamma)/tau_phi, which vanishes identically
    because incidence columns sum to zero: the flow redistributes
    participation without changing its total.
    """
    if tau_phi <= 0:
        raise ValueError("tau_phi must be positive")
    return (-(lap @ state.phi) - dz @ gamma) / tau_phi


def congestion_snapshot(theta: np.ndarray, u: np.ndarray, net,
                        kappa: np.ndarray) -> dict:
    """Per-inter-cell-line flows, rates and barriers plus the cell factors.

    Lines without a configured limit report a rate and barrier of zero.
    """
    grid = _as_grid(net)
    inj = nodal_injections(theta, u, grid)
    sel = grid.inter_idx
    p_m = dominant_flow(inj.p_from[sel], inj.p_to[sel])
    limit = grid.line_limit[sel]
    cmin = grid.line_cmin[sel]
    have = np.isfinite(limit)
    rate = np.where(have, p_m / np.where(have, limit, 1.0), 0.0)
    gam = np.where(have & np.isfinite(cmin), barrier(rate, np.where(np.isfinite(cmin), cmin, 0.5)), 0.0)
    return {
        "line_index": sel.copy(),
        "p_m": p_m,
        "rate": rate,
        "gamma": gam,
        "violated": violation(rate) & have,
        "kappa": np.asarray(kappa, dtype=float).copy(),
    }
