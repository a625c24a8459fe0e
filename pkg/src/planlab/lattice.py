"""Discretized driving world: lattice states, obstacles, occupancy grids.

The search space is a 3D cell lattice over longitudinal distance (ks), time
(kt) and lane (l), with a discrete velocity level (kv) attached to each search
state. Obstacles are rasterized once per planning instance into an
:class:`OccupancyGrid`; a node plus grid render to a :class:`SituationTensor`
whose ego projection marks the cells the vehicle would occupy if it kept its
current velocity.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import _kernels as K
from .errors import SearchContractError, ValidationError

# Cell codes. EGO_VIRTUAL appears only in situation tensors, never in grids.
FREE = 0
VEHICLE = 1
RED_LIGHT = 2
LC_FORBIDDEN = 3
EGO_VIRTUAL = 4

CELL_CODES = (FREE, VEHICLE, RED_LIGHT, LC_FORBIDDEN, EGO_VIRTUAL)


@dataclass(frozen=True, slots=True)
class LatticeParams:
    """Lattice dimensions, cell resolution and step-cost weights.

    n_ks/n_kt/n_kl are the distance/time/lane cell counts, n_kv the number of
    velocity levels (cells advanced per time step). ds/dt give the physical
    size of one cell. A step costs w_t + w_a*|a| + w_lc*|dl|; w_t must be
    positive so every step has strictly positive cost.
    """

    n_ks: int = 30
    n_kt: int = 15
    n_kl: int = 3
    n_kv: int = 4
    ds: float = 5.0
    dt: float = 1.0
    w_t: float = 1.0
    w_a: float = 0.5
    w_lc: float = 2.0

    def __post_init__(self):
        if self.n_ks < 2 or self.n_kt < 2 or self.n_kl < 1 or self.n_kv < 2:
            raise ValidationError(
                f"lattice too small: n_ks={self.n_ks} n_kt={self.n_kt} "
                f"n_kl={self.n_kl} n_kv={self.n_kv}"
            )
        if self.w_t <= 0:
            raise ValidationError("w_t must be positive")
        if self.w_a < 0 or self.w_lc < 0:
            raise ValidationError("cost weights must be nonnegative")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n_ks, self.n_kt, self.n_kl)

    def to_dict(self) -> dict:
        return {
            "n_ks": self.n_ks,
            "n_kt": self.n_kt,
            "n_kl": self.n_kl,
            "n_kv": self.n_kv,
            "ds": self.ds,
            "dt": self.dt,
            "w_t": self.w_t,
            "w_a": self.w_a,
            "w_lc": self.w_lc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeParams":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True, slots=True)
class MovingVehicle:
    """Constant-velocity vehicle pinned to one lane; occupies (s0 + v*kt, kt, lane)."""

    lane: int
    s0: int
    v: int

    kind = "vehicle"


@dataclass(frozen=True, slots=True)
class TrafficLight:
    """Stop line across all lanes at s_tl; phase[kt] True means red at step kt."""

    s_tl: int
    phase: tuple[bool, ...]

    kind = "light"

    def __post_init__(self):
        object.__setattr__(self, "phase", tuple(bool(p) for p in self.phase))


@dataclass(frozen=True, slots=True)
class ForbiddenLaneChange:
    """Band [s_from, s_to] on the origin lane where leaving the lane is banned."""

    s_from: int
    s_to: int
    lane_pair: tuple[int, int]

    kind = "no_lc"

    def __post_init__(self):
        object.__setattr__(self, "lane_pair", tuple(int(x) for x in self.lane_pair))


Obstacle = Union[MovingVehicle, TrafficLight, ForbiddenLaneChange]


@dataclass(frozen=True, slots=True)
class Scenario:
    """A driving situation: lattice parameters plus a fixed obstacle set.

    Regenerating from (seed, params) is bit-identical, so datasets only need
    to store the scenario description, not its grid.
    """

    params: LatticeParams
    obstacles: tuple[Obstacle, ...]
    id: str
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    @property
    def has_dynamic_obstacles(self) -> bool:
        return any(isinstance(o, (MovingVehicle, TrafficLight)) for o in self.obstacles)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "seed": self.seed,
            "params": self.params.to_dict(),
            "obstacles": [obstacle_to_dict(o) for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            params=LatticeParams.from_dict(d["params"]),
            obstacles=tuple(obstacle_from_dict(o) for o in d["obstacles"]),
            id=d["id"],
            seed=int(d["seed"]),
        )


def obstacle_to_dict(o: Obstacle) -> dict:
    if isinstance(o, MovingVehicle):
        return {"kind": "vehicle", "lane": o.lane, "s0": o.s0, "v": o.v}
    if isinstance(o, TrafficLight):
        return {"kind": "light", "s_tl": o.s_tl, "phase": list(o.phase)}
    if isinstance(o, ForbiddenLaneChange):
        return {
            "kind": "no_lc",
            "s_from": o.s_from,
            "s_to": o.s_to,
            "lane_pair": list(o.lane_pair),
        }
    raise ValidationError(f"unknown obstacle type {type(o).__name__}")


def obstacle_from_dict(d: dict) -> Obstacle:
    kind = d.get("kind")
    if kind == "vehicle":
        return MovingVehicle(lane=int(d["lane"]), s0=int(d["s0"]), v=int(d["v"]))
    if kind == "light":
        return TrafficLight(s_tl=int(d["s_tl"]), phase=tuple(d["phase"]))
    if kind == "no_lc":
        return ForbiddenLaneChange(
            s_from=int(d["s_from"]), s_to=int(d["s_to"]), lane_pair=tuple(d["lane_pair"])
        )
    raise ValidationError(f"unknown obstacle kind {kind!r}")


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario.to_dict(), f, indent=2)
        f.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        return Scenario.from_dict(json.load(f))


@dataclass(frozen=True, slots=True)
class MotionPrimitive:
    """One-step action: velocity-level change a and lane change dl, both in {-1,0,1}."""

    a: int
    dl: int

    def __post_init__(self):
        if self.a not in (-1, 0, 1) or self.dl not in (-1, 0, 1):
            raise ValidationError(f"primitive out of range: a={self.a} dl={self.dl}")


# Singletons so expansion does not allocate primitives per child.
PRIMITIVES = {(a, dl): MotionPrimitive(a, dl) for a in (-1, 0, 1) for dl in (-1, 0, 1)}


def step_cost(primitive: MotionPrimitive, params: LatticeParams) -> float:
    return params.w_t + params.w_a * abs(primitive.a) + params.w_lc * abs(primitive.dl)


@dataclass(eq=False, slots=True)
class Node:
    """Search state (l, ks, kt, kv) with accumulated cost and parent link.

    Identity for duplicate detection is the state tuple only; g/h/parent are
    search bookkeeping. f is always g + h.
    """

    l: int
    ks: int
    kt: int
    kv: int
    g: float = 0.0
    h: float = 0.0
    parent: Optional["Node"] = None
    action: Optional[MotionPrimitive] = None

    @property
    def f(self) -> float:
        return self.g + self.h

    @property
    def key(self) -> tuple[int, int, int, int]:
        return (self.l, self.ks, self.kt, self.kv)

    def __repr__(self):
        return (
            f"Node(l={self.l}, ks={self.ks}, kt={self.kt}, kv={self.kv}, "
            f"g={self.g:.3f}, h={self.h:.3f})"
        )


class OccupancyGrid:
    """Dense cell-code array for one scenario, indexed (ks, kt, l).

    Built once per planning instance and treated as immutable afterwards (the
    cell buffer is write-locked).
    """

    __slots__ = ("cells", "dims")

    def __init__(self, cells: np.ndarray):
        if cells.ndim != 3:
            raise ValidationError("grid cells must be a 3D (ks, kt, l) array")
        self.cells = np.ascontiguousarray(cells, dtype=np.int8)
        self.cells.setflags(write=False)
        self.dims = self.cells.shape

    def code_at(self, ks: int, kt: int, l: int) -> int:
        return int(self.cells[ks, kt, l])


class SituationTensor:
    """Occupancy grid overlaid with the node's constant-velocity ego projection."""

    __slots__ = ("cells", "dims", "kv", "kt", "l", "ks")

    def __init__(self, cells: np.ndarray, node: Node):
        self.cells = cells
        self.cells.setflags(write=False)
        self.dims = cells.shape
        self.kv = node.kv
        self.kt = node.kt
        self.l = node.l
        self.ks = node.ks

    @property
    def scalars(self) -> tuple[int, int, int, int]:
        return (self.kv, self.kt, self.l, self.ks)


def validate_scenario(scenario: Scenario) -> None:
    """Check every obstacle against the lattice bounds.

    Raises ValidationError naming the offending obstacle index.
    """
    p = scenario.params
    for i, o in enumerate(scenario.obstacles):
        if isinstance(o, MovingVehicle):
            if not (0 <= o.lane < p.n_kl):
                raise ValidationError(f"obstacle {i}: vehicle lane {o.lane} out of bounds")
            if not (0 <= o.s0 < p.n_ks):
                raise ValidationError(f"obstacle {i}: vehicle s0 {o.s0} out of bounds")
            if o.v < 0:
                raise ValidationError(f"obstacle {i}: vehicle velocity {o.v} negative")
        elif isinstance(o, TrafficLight):
            if not (0 <= o.s_tl < p.n_ks):
                raise ValidationError(f"obstacle {i}: stop line {o.s_tl} out of bounds")
            if len(o.phase) != p.n_kt:
                raise ValidationError(
                    f"obstacle {i}: phase length {len(o.phase)} != n_kt {p.n_kt}"
                )
        elif isinstance(o, ForbiddenLaneChange):
            if not (0 <= o.s_from <= o.s_to < p.n_ks):
                raise ValidationError(
                    f"obstacle {i}: band [{o.s_from}, {o.s_to}] out of bounds"
                )
            lf, lt = o.lane_pair
            if not (0 <= lf < p.n_kl and 0 <= lt < p.n_kl):
                raise ValidationError(f"obstacle {i}: lane pair {o.lane_pair} out of bounds")
        else:
            raise ValidationError(f"obstacle {i}: unknown type {type(o).__name__}")


def paint_obstacles(
    cells: np.ndarray, scenario: Scenario, s_offset: int = 0, t_offset: int = 0
) -> None:
    """Rasterize obstacles into cells, shifted by a window offset.

    Cells falling outside the window are dropped. Paint order is lowest
    priority first so vehicle > red light > no-lane-change survives overlaps.
    """
    n_ks, n_kt, n_kl = cells.shape
    for o in scenario.obstacles:
        if isinstance(o, ForbiddenLaneChange):
            lo = max(0, o.s_from - s_offset)
            hi = min(n_ks - 1, o.s_to - s_offset)
            if lo <= hi:
                cells[lo : hi + 1, :, o.lane_pair[0]] = LC_FORBIDDEN
    for o in scenario.obstacles:
        if isinstance(o, TrafficLight):
            s = o.s_tl - s_offset
            if not (0 <= s < n_ks):
                continue
            period = len(o.phase)
            for kt in range(n_kt):
                if o.phase[(kt + t_offset) % period]:
                    cells[s, kt, :] = RED_LIGHT
    for o in scenario.obstacles:
        if isinstance(o, MovingVehicle):
            for kt in range(n_kt):
                s = o.s0 + o.v * (kt + t_offset) - s_offset
                if 0 <= s < n_ks:
                    cells[s, kt, o.lane] = VEHICLE


def build_occupancy_grid(scenario: Scenario) -> OccupancyGrid:
    """Rasterize a validated scenario into a fresh occupancy grid."""
    validate_scenario(scenario)
    cells = np.zeros(scenario.params.dims, dtype=np.int8)
    paint_obstacles(cells, scenario)
    return OccupancyGrid(cells)


def render_situation(node: Node, grid: OccupancyGrid) -> SituationTensor:
    """Copy the grid and overlay the node's ego projection.

    The projection covers (ks + kv*(kt'-kt), kt', l) for kt' from the node's
    time step to the horizon, until it leaves the distance range. It
    overwrites whatever code was underneath. The source grid is untouched.
    """
    n_ks, n_kt, n_kl = grid.dims
    if not (0 <= node.ks < n_ks and 0 <= node.kt < n_kt and 0 <= node.l < n_kl):
        raise ValidationError(f"node {node.key} outside grid dims {grid.dims}")
    cells = grid.cells.copy()
    cells.setflags(write=True)
    K.overlay_ego(cells, node.l, node.ks, node.kt, node.kv)
    return SituationTensor(cells, node)


def primitive_is_valid(node: Node, primitive: MotionPrimitive, params: LatticeParams) -> bool:
    kv2 = node.kv + primitive.a
    if kv2 < 0 or kv2 > params.n_kv - 1:
        return False
    if primitive.dl != 0 and kv2 == 0:
        return False
    l2 = node.l + primitive.dl
    return 0 <= l2 < params.n_kl


def collision_check(node: Node, primitive: MotionPrimitive, grid: OccupancyGrid) -> bool:
    """True iff applying the primitive sweeps through an occupied cell.

    Checks vehicle and red-light codes on the arrival lane over the swept
    range [ks+1, ks'] (the current cell when standing still), and the
    no-lane-change code on the origin lane when dl != 0. The primitive must be
    valid for the node; only the guards needed for safe indexing are enforced
    here since the velocity ceiling is not part of the grid.
    """
    n_ks, n_kt, n_kl = grid.dims
    kv2 = node.kv + primitive.a
    l2 = node.l + primitive.dl
    if (
        kv2 < 0
        or not (0 <= l2 < n_kl)
        or (primitive.dl != 0 and kv2 == 0)
        or node.kt >= n_kt - 1
    ):
        raise ValidationError(f"primitive {primitive} invalid for node {node.key}")
    return bool(K.move_blocked(grid.cells, node.l, node.ks, node.kt, kv2, l2, primitive.dl))


def is_horizon(node: Node, params: LatticeParams) -> bool:
    return node.ks == params.n_ks - 1 or node.kt == params.n_kt - 1


def expand(
    node: Node, grid: OccupancyGrid, params: LatticeParams
) -> list[tuple[Node, float]]:
    """All valid, collision-free one-step successors with their step costs.

    Children advance one time cell; a child crossing the last distance cell is
    clamped onto it. Enumeration order is deterministic (a ascending, dl
    ascending). Expanding a horizon node is a contract violation.
    """
    if is_horizon(node, params):
        raise SearchContractError(f"cannot expand horizon node {node.key}")
    out_idx = np.empty((9, 5), dtype=np.int64)
    out_cost = np.empty(9, dtype=np.float64)
    m = K.expand_node(
        grid.cells,
        node.l,
        node.ks,
        node.kt,
        node.kv,
        params.n_kv,
        params.w_t,
        params.w_a,
        params.w_lc,
        out_idx,
        out_cost,
    )
    children = []
    for i in range(m):
        a, dl, l2, ks2, kv2 = (int(x) for x in out_idx[i])
        cost = float(out_cost[i])
        child = Node(
            l=l2,
            ks=ks2,
            kt=node.kt + 1,
            kv=kv2,
            g=node.g + cost,
            h=0.0,
            parent=node,
            action=PRIMITIVES[(a, dl)],
        )
        children.append((child, cost))
    return children


def _draw_obstacles(rng: random.Random, params: LatticeParams) -> list[Obstacle]:
    obstacles: list[Obstacle] = []
    for _ in range(rng.randint(0, 3)):
        obstacles.append(
            MovingVehicle(
                lane=rng.randrange(params.n_kl),
                s0=rng.randrange(params.n_ks),
                v=rng.randrange(params.n_kv),
            )
        )
    if rng.random() < 0.5:
        obstacles.append(
            TrafficLight(
                s_tl=rng.randrange(params.n_ks),
                phase=tuple(rng.random() < 0.5 for _ in range(params.n_kt)),
            )
        )
    if params.n_kl > 1 and rng.random() < 0.4:
        s_from = rng.randrange(params.n_ks)
        s_to = min(params.n_ks - 1, s_from + rng.randint(0, max(1, params.n_ks // 4)))
        lane_from = rng.randrange(params.n_kl)
        lane_to = lane_from + rng.choice((-1, 1))
        if not (0 <= lane_to < params.n_kl):
            lane_to = lane_from - (lane_to - lane_from)
        obstacles.append(
            ForbiddenLaneChange(s_from=s_from, s_to=s_to, lane_pair=(lane_from, lane_to))
        )
    return obstacles


def random_scenario(params: LatticeParams, seed: int) -> Scenario:
    """Deterministic random scenario; the ego start cell (l 0, ks 0, kt 0) is free.

    Draws up to 3 constant-velocity vehicles, at most one traffic light and an
    optional no-lane-change band, redrawing wholesale until the start cell is
    free.
    """
    rng = random.Random(seed)
    scenario_id = f"scn-{seed:012d}"
    while True:
        obstacles = _draw_obstacles(rng, params)
        scenario = Scenario(params=params, obstacles=tuple(obstacles), id=scenario_id, seed=seed)
        grid = build_occupancy_grid(scenario)
        if grid.code_at(0, 0, 0) == FREE:
            return scenario
