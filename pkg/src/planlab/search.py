"""Best-first lattice search over occupancy grids.

Two drivers share one loop: :func:`plan` stops at the first horizon node
extracted from the open list, :func:`exhaustive_search` drains the open list
completely and records every horizon node in extraction order (horizon nodes
are absorbing, they are never expanded). Extraction order is total and
deterministic: lowest f, then lowest h, then first-in-first-out by insertion
index. A node already expanded is never reopened; a cheaper path to a node
still in the open list updates its cost and parent in place.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import SearchContractError
from .lattice import LatticeParams, Node, OccupancyGrid, expand, is_horizon

# Heuristics are callables (node, grid) -> float, total on all in-bounds nodes.
Heuristic = Callable[[Node, OccupancyGrid], float]

NodeKey = tuple[int, int, int, int]
ClosedSet = dict[NodeKey, Node]


@dataclass(slots=True)
class SearchStats:
    nodes_explored: int = 0
    open_peak: int = 0
    expansions: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "nodes_explored": self.nodes_explored,
            "open_peak": self.open_peak,
            "expansions": self.expansions,
            "wall_time": self.wall_time,
        }


@dataclass(slots=True)
class SearchResult:
    solution: Optional[list[Node]]
    cost: Optional[float]
    stats: SearchStats = field(default_factory=SearchStats)

    @property
    def solved(self) -> bool:
        return self.solution is not None


def reconstruct_chain(n_h: Node) -> list[Node]:
    """Walk parent links back to the start; returns [start, ..., n_h]."""
    chain = [n_h]
    seen = {id(n_h)}
    node = n_h.parent
    while node is not None:
        if id(node) in seen:
            raise SearchContractError("cyclic parent links")
        seen.add(id(node))
        chain.append(node)
        node = node.parent
    chain.reverse()
    return chain


class _OpenList:
    """f-ordered priority queue with lazy deletion.

    Entries record the g at push time; an entry whose node has since been
    improved (or closed) is stale and skipped on pop. Ties break on lower h,
    then insertion order, so runs are bit-reproducible.
    """

    __slots__ = ("_heap", "_members", "_counter")

    def __init__(self):
        self._heap: list = []
        self._members: dict[NodeKey, Node] = {}
        self._counter = itertools.count()

    def __len__(self):
        return len(self._members)

    def push(self, node: Node) -> None:
        self._members[node.key] = node
        heapq.heappush(self._heap, (node.g + node.h, node.h, next(self._counter), node.g, node))

    def reposition(self, node: Node) -> None:
        # The improved node keeps its identity; the old heap entry goes stale.
        heapq.heappush(self._heap, (node.g + node.h, node.h, next(self._counter), node.g, node))

    def get(self, key: NodeKey) -> Optional[Node]:
        return self._members.get(key)

    def pop(self) -> Optional[Node]:
        while self._heap:
            _, _, _, g_at_push, node = heapq.heappop(self._heap)
            if node.key not in self._members or node.g != g_at_push:
                continue
            del self._members[node.key]
            return node
        return None


def _search_loop(
    start: Node,
    grid: OccupancyGrid,
    params: LatticeParams,
    heuristic: Heuristic,
    stop_at_first_horizon: bool,
):
    t0 = time.perf_counter()
    stats = SearchStats()
    closed: ClosedSet = {}
    horizon_nodes: list[Node] = []
    open_list = _OpenList()

    # Private copy so the caller's node survives h/g bookkeeping across runs.
    root = Node(
        l=start.l,
        ks=start.ks,
        kt=start.kt,
        kv=start.kv,
        g=start.g,
        parent=start.parent,
        action=start.action,
    )
    root.h = heuristic(root, grid)
    open_list.push(root)
    stats.open_peak = 1

    while True:
        node = open_list.pop()
        if node is None:
            break
        closed[node.key] = node
        stats.nodes_explored += 1
        if is_horizon(node, params):
            horizon_nodes.append(node)
            if stop_at_first_horizon:
                break
            continue
        for child, _cost in expand(node, grid, params):
            stats.expansions += 1
            key = child.key
            if key in closed:
                continue
            incumbent = open_list.get(key)
            if incumbent is not None:
                if child.g < incumbent.g:
                    incumbent.g = child.g
                    incumbent.parent = node
                    incumbent.action = child.action
                    open_list.reposition(incumbent)
                continue
            child.h = heuristic(child, grid)
            open_list.push(child)
        if len(open_list) > stats.open_peak:
            stats.open_peak = len(open_list)

    stats.wall_time = time.perf_counter() - t0
    return closed, horizon_nodes, stats


def plan(
    start: Node,
    grid: OccupancyGrid,
    params: LatticeParams,
    heuristic: Heuristic,
) -> SearchResult:
    """Single-trajectory search: first horizon node popped wins.

    With an admissible consistent heuristic the returned cost is optimal.
    Returns a result with solution None when the open list drains without
    reaching either horizon.
    """
    _closed, horizon_nodes, stats = _search_loop(
        start, grid, params, heuristic, stop_at_first_horizon=True
    )
    if not horizon_nodes:
        return SearchResult(solution=None, cost=None, stats=stats)
    n_h = horizon_nodes[0]
    return SearchResult(solution=reconstruct_chain(n_h), cost=n_h.g, stats=stats)


def exhaustive_search(
    start: Node,
    grid: OccupancyGrid,
    params: LatticeParams,
    heuristic: Heuristic,
) -> tuple[ClosedSet, list[Node]]:
    """Drain the open list fully; horizon nodes absorb instead of expanding.

    Returns the closed set (insertion-ordered by extraction, owned by the
    caller) and the horizon nodes in extraction order. An empty horizon list
    is a valid outcome.
    """
    closed, horizon_nodes, _stats = _search_loop(
        start, grid, params, heuristic, stop_at_first_horizon=False
    )
    return closed, horizon_nodes
