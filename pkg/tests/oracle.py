"""Independent reference computations for the test suite.

These deliberately avoid the package's search machinery: optimal costs come
from backward induction over time layers, reachability from a plain FIFO
breadth-first sweep, and small-instance optima additionally from exhaustive
trajectory enumeration. Transition rules are restated here from scratch so a
shared bug with the production expansion cannot hide.
"""

import math
from collections import deque

FREE, VEHICLE, RED_LIGHT, LC_FORBIDDEN = 0, 1, 2, 3


def moves(cells, params, l, ks, kt, kv):
    """Yield (l2, ks2, kv2, cost) for every legal collision-free step."""
    n_ks, n_kt, n_kl = cells.shape
    for a in (-1, 0, 1):
        kv2 = kv + a
        if not (0 <= kv2 <= params.n_kv - 1):
            continue
        for dl in (-1, 0, 1):
            if dl != 0 and kv2 == 0:
                continue
            l2 = l + dl
            if not (0 <= l2 <= n_kl - 1):
                continue
            ks2 = min(ks + kv2, n_ks - 1)
            swept = range(ks + 1, ks2 + 1) if kv2 > 0 else (ks,)
            if any(cells[s, kt + 1, l2] in (VEHICLE, RED_LIGHT) for s in swept):
                continue
            if dl != 0 and any(cells[s, kt + 1, l] == LC_FORBIDDEN for s in swept):
                continue
            yield l2, ks2, kv2, params.w_t + params.w_a * abs(a) + params.w_lc * abs(dl)


def cost_to_horizon_table(cells, params):
    """Optimal cost-to-horizon for every state, by backward induction in time.

    Returns a dict (l, ks, kt, kv) -> cost, math.inf where no collision-free
    continuation reaches either window boundary.
    """
    n_ks, n_kt, n_kl = cells.shape
    n_kv = params.n_kv
    V = {}
    for kt in range(n_kt - 1, -1, -1):
        for l in range(n_kl):
            for ks in range(n_ks):
                for kv in range(n_kv):
                    if ks == n_ks - 1 or kt == n_kt - 1:
                        V[(l, ks, kt, kv)] = 0.0
                        continue
                    best = math.inf
                    for l2, ks2, kv2, cost in moves(cells, params, l, ks, kt, kv):
                        total = cost + V[(l2, ks2, kt + 1, kv2)]
                        if total < best:
                            best = total
                    V[(l, ks, kt, kv)] = best
    return V


def reachable_states(cells, params, start):
    """Breadth-first closure from the start; horizon states absorb."""
    n_ks, n_kt, _ = cells.shape
    seen = {start}
    queue = deque([start])
    while queue:
        l, ks, kt, kv = queue.popleft()
        if ks == n_ks - 1 or kt == n_kt - 1:
            continue
        for l2, ks2, kv2, _cost in moves(cells, params, l, ks, kt, kv):
            state = (l2, ks2, kt + 1, kv2)
            if state not in seen:
                seen.add(state)
                queue.append(state)
    return seen


def enumerate_trajectory_costs(cells, params, start):
    """Depth-first enumeration of every trajectory cost to a horizon.

    Only viable on tiny lattices; exists as a third, dumbest oracle for
    cross-checking the backward-induction table.
    """
    n_ks, n_kt, _ = cells.shape
    out = []

    def walk(l, ks, kt, kv, g):
        if ks == n_ks - 1 or kt == n_kt - 1:
            out.append(g)
            return
        for l2, ks2, kv2, cost in moves(cells, params, l, ks, kt, kv):
            walk(l2, ks2, kt + 1, kv2, g + cost)

    walk(*start, 0.0)
    return out
