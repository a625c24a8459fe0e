"""Hot per-node kernels, JIT-compiled with numba when available.

Every kernel exists in two flavors compiled from the same body: the numba
build and a plain-Python twin suffixed ``_py``. The active set (module
attributes without the suffix) is chosen at import time; numba is the default
and ``PLANLAB_NUMBA=0`` in the environment forces the pure path. Call
:func:`select` to switch at runtime (used by the backend benchmark and the
equivalence tests).

Cell codes inside grids: 0 free, 1 vehicle, 2 red light, 3 no-lane-change
band, 4 ego projection. Grids are int8 arrays indexed (ks, kt, l).
"""

import os

import numpy as np


def _move_blocked_body(cells, l, ks, kt, kv2, l2, dl):
    # Swept cells at arrival time kt+1 on the target lane: [ks+1, ks'] when
    # moving, the current cell when standing. Lane changes additionally fail
    # on no-lane-change cells of the origin lane.
    n_ks = cells.shape[0]
    kt2 = kt + 1
    if kv2 == 0:
        c = cells[ks, kt2, l2]
        if c == 1 or c == 2:
            return True
        if dl != 0 and cells[ks, kt2, l] == 3:
            return True
        return False
    ks2 = ks + kv2
    if ks2 > n_ks - 1:
        ks2 = n_ks - 1
    for s in range(ks + 1, ks2 + 1):
        c = cells[s, kt2, l2]
        if c == 1 or c == 2:
            return True
    if dl != 0:
        for s in range(ks + 1, ks2 + 1):
            if cells[s, kt2, l] == 3:
                return True
    return False


def _expand_node_body(cells, l, ks, kt, kv, n_kv, w_t, w_a, w_lc, out_idx, out_cost):
    # Enumeration order is fixed: acceleration ascending, lane change
    # ascending. Children whose ks lands beyond the last cell are clamped onto
    # it (they crossed the distance horizon mid-step). The swept-cell check is
    # inlined and must stay in sync with _move_blocked_body. Rows of out_idx
    # are (a, dl, l', ks', kv'); returns the number of surviving children.
    n_ks = cells.shape[0]
    n_kl = cells.shape[2]
    kt2 = kt + 1
    m = 0
    for a in (-1, 0, 1):
        kv2 = kv + a
        if kv2 < 0 or kv2 > n_kv - 1:
            continue
        for dl in (-1, 0, 1):
            if dl != 0 and kv2 == 0:
                continue
            l2 = l + dl
            if l2 < 0 or l2 > n_kl - 1:
                continue
            ks2 = ks + kv2
            if ks2 > n_ks - 1:
                ks2 = n_ks - 1
            blocked = False
            if kv2 == 0:
                c = cells[ks, kt2, l2]
                if c == 1 or c == 2:
                    blocked = True
                elif dl != 0 and cells[ks, kt2, l] == 3:
                    blocked = True
            else:
                for s in range(ks + 1, ks2 + 1):
                    c = cells[s, kt2, l2]
                    if c == 1 or c == 2:
                        blocked = True
                        break
                if not blocked and dl != 0:
                    for s in range(ks + 1, ks2 + 1):
                        if cells[s, kt2, l] == 3:
                            blocked = True
                            break
            if blocked:
                continue
            out_idx[m, 0] = a
            out_idx[m, 1] = dl
            out_idx[m, 2] = l2
            out_idx[m, 3] = ks2
            out_idx[m, 4] = kv2
            out_cost[m] = w_t + w_a * abs(a) + w_lc * abs(dl)
            m += 1
    return m


def _overlay_ego_body(cells, l, ks, kt, kv):
    # Project the state forward at constant velocity and mark code 4 until the
    # projection leaves the grid. Mutates cells in place (caller owns a copy).
    n_ks = cells.shape[0]
    n_kt = cells.shape[1]
    for kt2 in range(kt, n_kt):
        s = ks + kv * (kt2 - kt)
        if s > n_ks - 1:
            break
        cells[s, kt2, l] = 4


def _encode_into_body(cells, l, ks, kt, kv, n_kv, out):
    # One-hot channel per non-free code in (channel, ks, kt, l) order, then
    # four normalized scalars kv, kt, ks, l. All entries land in [0, 1].
    n_ks = cells.shape[0]
    n_kt = cells.shape[1]
    n_kl = cells.shape[2]
    ncell = n_ks * n_kt * n_kl
    for i in range(4 * ncell + 4):
        out[i] = 0.0
    idx = 0
    for s in range(n_ks):
        for t in range(n_kt):
            for li in range(n_kl):
                c = cells[s, t, li]
                if c > 0:
                    out[(c - 1) * ncell + idx] = 1.0
                idx += 1
    lane_den = n_kl - 1
    if lane_den < 1:
        lane_den = 1
    base = 4 * ncell
    out[base] = kv / (n_kv - 1)
    out[base + 1] = kt / (n_kt - 1)
    out[base + 2] = ks / (n_ks - 1)
    out[base + 3] = l / lane_den
    return out


_BODIES = {
    "move_blocked": _move_blocked_body,
    "expand_node": _expand_node_body,
    "overlay_ego": _overlay_ego_body,
    "encode_into": _encode_into_body,
}

move_blocked_py = _move_blocked_body
expand_node_py = _expand_node_body
overlay_ego_py = _overlay_ego_body
encode_into_py = _encode_into_body

_JITTED = None


def _compile():
    global _JITTED
    from numba import njit

    _JITTED = {name: njit(cache=True)(body) for name, body in _BODIES.items()}
    return _JITTED


def select(backend):
    """Bind the active kernel set. backend is 'numba' or 'numpy'."""
    global move_blocked, expand_node, overlay_ego, encode_into, ACTIVE_BACKEND
    if backend == "numba":
        table = _JITTED if _JITTED is not None else _compile()
    elif backend == "numpy":
        table = _BODIES
    else:
        raise ValueError(f"unknown kernel backend {backend!r}")
    move_blocked = table["move_blocked"]
    expand_node = table["expand_node"]
    overlay_ego = table["overlay_ego"]
    encode_into = table["encode_into"]
    ACTIVE_BACKEND = backend


_DEFAULT = "numpy"
if os.environ.get("PLANLAB_NUMBA", "1") != "0":
    try:
        import numba  # noqa: F401

        _DEFAULT = "numba"
    except ImportError:
        pass

select(_DEFAULT)
