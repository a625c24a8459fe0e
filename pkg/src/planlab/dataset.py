"""Training-data generation from exhaustively searched planning instances.

Each instance draws a random scenario and start pose, drains the search
completely, then harvests labels backward: every node on a parent chain of a
horizon node gets the remaining cost to that horizon (final g minus own g) and
is consumed, so a state is labeled at most once per instance. Explored nodes
the chains missed are labeled through the explored closure; the ones with no
collision-free continuation become dead-end records. Labels are costs to the
window boundary, so they are invariant to shifting the start node's
accumulated cost.
"""

from __future__ import annotations

import gzip
import json
import random
from dataclasses import dataclass, field
from typing import Optional

from .errors import ValidationError
from .heuristics import DpHeuristic, build_dp_table
from .lattice import (
    RED_LIGHT,
    VEHICLE,
    LatticeParams,
    Node,
    Scenario,
    build_occupancy_grid,
    expand,
    random_scenario,
)
from .search import ClosedSet, exhaustive_search

GENERATOR_VERSION = "dataset-1"


@dataclass(frozen=True, slots=True)
class DatasetRecord:
    """One labeled lattice state; label is None iff dead_end."""

    sid: str
    l: int
    ks: int
    kt: int
    kv: int
    label: Optional[float]
    dead_end: bool

    def node_key(self):
        return (self.l, self.ks, self.kt, self.kv)

    def to_dict(self) -> dict:
        return {
            "sid": self.sid,
            "l": self.l,
            "ks": self.ks,
            "kt": self.kt,
            "kv": self.kv,
            "label": self.label,
            "dead_end": self.dead_end,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetRecord":
        label = d["label"]
        return cls(
            sid=d["sid"],
            l=int(d["l"]),
            ks=int(d["ks"]),
            kt=int(d["kt"]),
            kv=int(d["kv"]),
            label=None if label is None else float(label),
            dead_end=bool(d["dead_end"]),
        )


@dataclass(slots=True)
class Dataset:
    scenarios: list[Scenario] = field(default_factory=list)
    records: list[DatasetRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)


def label_branch(n_h: Node, closed: ClosedSet, scenario_id: str = "") -> list[DatasetRecord]:
    """Harvest one horizon branch backward, consuming nodes from closed.

    The walk follows parent links all the way to the start; nodes already
    consumed by an earlier branch are passed through silently so a shared
    prefix deeper than a consumed node still gets labeled.
    """
    records = []
    node = n_h
    while node is not None:
        if node.key in closed:
            records.append(
                DatasetRecord(
                    sid=scenario_id,
                    l=node.l,
                    ks=node.ks,
                    kt=node.kt,
                    kv=node.kv,
                    label=n_h.g - node.g,
                    dead_end=False,
                )
            )
            del closed[node.key]
        node = node.parent
    return records


def extract_records(
    closed: ClosedSet,
    horizon_nodes: list[Node],
    scenario_id: str,
    grid,
    params: LatticeParams,
) -> list[DatasetRecord]:
    """Label every explored node; consumes the closed set.

    Horizon branches are harvested first, in extraction order. Nodes the
    chains never covered are not necessarily doomed (their children may
    simply have kept cheaper parents in the search tree), so leftovers are
    resolved by a backward pass over the explored closure: a leftover gets
    the cheapest step-plus-label continuation through already labeled
    states. Only nodes with no collision-free continuation at all become
    dead-end records. Every label is a realizable cost to a horizon and
    independent of the start node's accumulated cost.
    """
    records: list[DatasetRecord] = []
    values: dict = {}
    for n_h in horizon_nodes:
        branch = label_branch(n_h, closed, scenario_id)
        for record in branch:
            values[record.node_key()] = record.label
        records.extend(branch)
    # Children live one time cell ahead and every generated child was closed,
    # so descending kt resolves leftovers in one pass.
    leftovers = sorted(closed.values(), key=lambda n: -n.kt)
    for node in leftovers:
        best = None
        for child, cost in expand(node, grid, params):
            v = values.get(child.key)
            if v is not None and (best is None or cost + v < best):
                best = cost + v
        if best is not None:
            values[node.key] = best
        records.append(
            DatasetRecord(
                sid=scenario_id,
                l=node.l,
                ks=node.ks,
                kt=node.kt,
                kv=node.kv,
                label=best,
                dead_end=best is None,
            )
        )
    closed.clear()
    return records


def _draw_start(rng: random.Random, params: LatticeParams, grid) -> Node:
    # Start poses anchor at ks=0, kt=0 with random lane and velocity so labels
    # stay comparable across scenarios; redraw while the start cell is
    # occupied (lane 0 is guaranteed free by scenario generation).
    while True:
        l = rng.randrange(params.n_kl)
        kv = rng.randrange(params.n_kv)
        if grid.code_at(0, 0, l) not in (VEHICLE, RED_LIGHT):
            return Node(l=l, ks=0, kt=0, kv=kv)


def generate_dataset(k_max: int, params: LatticeParams, master_seed: int) -> Dataset:
    """Run k_max labeled planning instances; deterministic in the seed.

    Scenario and pose seeds derive injectively from (master_seed, k), so the
    scenario ids are unique and regeneration is exact.
    """
    if k_max < 1:
        raise ValidationError(f"k_max must be >= 1, got {k_max}")
    table = build_dp_table(params)
    heuristic = DpHeuristic(table, params)
    dataset = Dataset(
        meta={"version": GENERATOR_VERSION, "k_max": k_max, "master_seed": master_seed}
    )
    for k in range(1, k_max + 1):
        scen_seed = master_seed * 100003 + 2 * k
        pose_seed = master_seed * 100003 + 2 * k + 1
        scenario = random_scenario(params, scen_seed)
        grid = build_occupancy_grid(scenario)
        start = _draw_start(random.Random(pose_seed), params, grid)
        closed, horizon_nodes = exhaustive_search(start, grid, params, heuristic)
        dataset.scenarios.append(scenario)
        dataset.records.extend(
            extract_records(closed, horizon_nodes, scenario.id, grid, params)
        )
    return dataset


def split_dataset(
    dataset: Dataset, fractions: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Partition by scenario so no scenario leaks across splits.

    Split sizes come from cumulative rounding of the fractions over the
    shuffled scenario list; records keep their original order.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValidationError(f"fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(dataset.scenarios)
    if n < 3:
        raise ValidationError(f"need at least 3 scenarios to split, got {n}")

    order = list(dataset.scenarios)
    random.Random(seed).shuffle(order)
    c1 = int(fractions[0] * n)
    c2 = int((fractions[0] + fractions[1]) * n) - c1
    buckets = [order[:c1], order[c1 : c1 + c2], order[c1 + c2 :]]

    names = ("train", "validation", "test")
    sid_to_part = {}
    parts = []
    for name, scenarios in zip(names, buckets):
        meta = dict(dataset.meta)
        meta["split"] = name
        meta["split_seed"] = seed
        parts.append(Dataset(scenarios=list(scenarios), records=[], meta=meta))
        for s in scenarios:
            sid_to_part[s.id] = parts[-1]
    for record in dataset.records:
        sid_to_part[record.sid].records.append(record)
    return tuple(parts)


def _open_text(path, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def save_dataset(dataset: Dataset, path) -> None:
    """JSON Lines: meta line, one line per scenario, one line per record."""
    with _open_text(path, "w") as f:
        f.write(json.dumps(dataset.meta, separators=(",", ":")) + "\n")
        for scenario in dataset.scenarios:
            f.write(json.dumps({"scenario": scenario.to_dict()}, separators=(",", ":")) + "\n")
        for record in dataset.records:
            f.write(json.dumps(record.to_dict(), separators=(",", ":")) + "\n")


def load_dataset(path) -> Dataset:
    dataset = Dataset()
    with _open_text(path, "r") as f:
        first = f.readline()
        if not first:
            raise ValidationError(f"{path}: empty dataset file")
        dataset.meta = json.loads(first)
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if "scenario" in doc:
                dataset.scenarios.append(Scenario.from_dict(doc["scenario"]))
            else:
                dataset.records.append(DatasetRecord.from_dict(doc))
    return dataset
