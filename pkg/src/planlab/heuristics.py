"""Cost-to-horizon estimators.

The planning window ends at the last distance cell or the last time cell,
whichever a trajectory touches first, so an estimator must lower-bound the
cost of reaching either. Three estimators live here:

* zero (uninformed baseline),
* a dynamic-programming relaxation over (distance cell, velocity level) that
  drops lanes, lane-change costs and every obstacle, combined with the
  idle-to-time-horizon lower bound,
* a learned regressor clamped into the band [h, eps*h] around the DP value,
  which keeps any model eps-admissible by construction.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ValidationError
from .lattice import LatticeParams, Node, OccupancyGrid, render_situation


@dataclass(frozen=True, slots=True)
class EpsilonBand:
    """Admissibility inflation factor; 1.0 collapses the band onto the DP value."""

    epsilon: float = 1.5

    def __post_init__(self):
        if self.epsilon < 1.0:
            raise ValidationError(f"epsilon must be >= 1, got {self.epsilon}")


class DpTable:
    """Minimal relaxed cost to the last distance cell, per (ks, kv).

    The relaxation keeps the velocity dynamics and the time/acceleration cost
    terms but ignores lanes and obstacles, so it never overestimates the real
    cost of any trajectory that ends at the distance horizon.
    """

    __slots__ = ("values", "params")

    def __init__(self, values: np.ndarray, params: LatticeParams):
        self.values = values
        self.values.setflags(write=False)
        self.params = params


def build_dp_table(params: LatticeParams) -> DpTable:
    """Label-setting sweep over (ks, kv), backward in ks.

    Transitions mirror the lattice: kv' = kv + a, ks' = ks + kv', landing at
    or beyond the last cell absorbs with that step's cost. Within one ks
    column only kv 1 -> kv 0 crosses laterally (a = -1 at kv 1), so computing
    kv 0 first makes a single descending pass exact; staying at kv 0 is a
    positive-cost self-loop and never part of a shortest path.
    """
    n_ks, n_kv = params.n_ks, params.n_kv
    w_t, w_a = params.w_t, params.w_a
    values = np.zeros((n_ks, n_kv), dtype=np.float64)
    for ks in range(n_ks - 2, -1, -1):
        values[ks, 0] = w_t + w_a + values[min(ks + 1, n_ks - 1), 1]
        for kv in range(1, n_kv):
            best = np.inf
            for a in (-1, 0, 1):
                kv2 = kv + a
                if kv2 < 0 or kv2 > n_kv - 1:
                    continue
                ks2 = ks + kv2
                if ks2 >= n_ks - 1:
                    rest = 0.0
                elif kv2 == 0:
                    rest = values[ks, 0]
                else:
                    rest = values[ks2, kv2]
                cost = w_t + w_a * abs(a) + rest
                if cost < best:
                    best = cost
            values[ks, kv] = best
    return DpTable(values, params)


def h_dp(node: Node, table: DpTable, params: LatticeParams) -> float:
    """Admissible, consistent cost-to-horizon bound.

    Minimum of the relaxed drive-out cost and the idle lower bound
    w_t * (remaining time steps); the window is reached through whichever
    boundary is cheaper.
    """
    drive = table.values[node.ks, node.kv]
    idle = params.w_t * (params.n_kt - 1 - node.kt)
    return float(min(drive, idle))


def h_zero(node: Node) -> float:
    """Uninformed baseline; turns the search into uniform-cost expansion."""
    return 0.0


def h_ml_clamped(node, tensor, model, table: DpTable, band: EpsilonBand, params: LatticeParams) -> float:
    """Model prediction clamped into [h_dp, eps * h_dp].

    The clamp makes any model eps-admissible for every node, trained or not;
    at a horizon node the band collapses to zero.
    """
    from .mlp import encode, predict

    lo = h_dp(node, table, params)
    hi = band.epsilon * lo
    raw = predict(model, encode(tensor, params))
    return float(min(max(raw, lo), hi))


class ZeroHeuristic:
    """Callable adapter for the search loop."""

    name = "zero"

    def __call__(self, node: Node, grid: OccupancyGrid) -> float:
        return 0.0


class DpHeuristic:
    name = "dp"

    def __init__(self, table: DpTable, params: LatticeParams):
        self.table = table
        self.params = params

    def __call__(self, node: Node, grid: OccupancyGrid) -> float:
        return h_dp(node, self.table, self.params)


class MlHeuristic:
    """Renders the situation tensor per node and clamps the model output."""

    def __init__(self, model, table: DpTable, band: EpsilonBand, params: LatticeParams):
        from .mlp import input_dim

        expected = input_dim(params)
        if model.layer_dims[0] != expected:
            raise ConfigError(
                f"model input size {model.layer_dims[0]} does not match "
                f"lattice encoding size {expected}"
            )
        self.model = model
        self.table = table
        self.band = band
        self.params = params
        self.name = f"ml(eps={band.epsilon:g})"

    def __call__(self, node: Node, grid: OccupancyGrid) -> float:
        tensor = render_situation(node, grid)
        return h_ml_clamped(node, tensor, self.model, self.table, self.band, self.params)


def dp_table_to_csv(table: DpTable) -> str:
    """Debug dump, one row per (ks, kv)."""
    buf = io.StringIO()
    buf.write("ks,kv,value\r\n")
    n_ks, n_kv = table.values.shape
    for ks in range(n_ks):
        for kv in range(n_kv):
            buf.write(f"{ks},{kv},{table.values[ks, kv]!r}\r\n")
    return buf.getvalue()
