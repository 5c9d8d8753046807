"""Pure-numpy twins of the simulator kernels.

Same random words, same merge rules, same outputs as ``_sim_numba``; each
step is vectorized over particles instead of looping.  The walk is advanced
one step at a time (no block jumps), which is slower but obviously correct
and serves as the reference the block-jump kernel is tested against.
"""

from __future__ import annotations

import numpy as np

from .rng import counter_word_np, word_to_normal_np, word_to_uniform_np

BRIDGE_CUTOFF = 40.0
_ONE = np.uint64(1)


def _leftmost_survivor(keep: np.ndarray) -> np.ndarray:
    """Index of the nearest kept entry at or to the left of each entry."""
    idx = np.where(keep, np.arange(keep.size), 0)
    return np.maximum.accumulate(idx)


# random walk

def rw_step(pos, rid, parent, step, key):
    """One lattice step; returns the new ``(pos, rid)`` arrays."""
    words = counter_word_np(np.uint64(key), step >> 6, rid)
    bits = ((words >> np.uint64(step & 63)) & _ONE).astype(np.int64)
    return _rw_apply(pos + 2 * bits - 1, rid, parent)


def _rw_apply(pos, rid, parent):
    same = pos[1:] == pos[:-1]
    if not same.any():
        return pos, rid
    keep = np.ones(pos.size, bool)
    keep[1:] = ~same
    head = _leftmost_survivor(keep)
    gone = ~keep
    parent[rid[gone]] = rid[head[gone]]
    return pos[keep], rid[keep]


def rw_run(n_grid, n_steps, key):
    pos = 2 * np.arange(n_grid, dtype=np.int64)
    rid = np.arange(n_grid, dtype=np.int64)
    parent = np.arange(n_grid, dtype=np.int64)
    key = np.uint64(key)
    for blk in range((n_steps + 63) // 64):
        nb = min(64, n_steps - 64 * blk)
        words = counter_word_np(key, blk, rid)
        for s in range(nb):
            bits = ((words >> np.uint64(s)) & _ONE).astype(np.int64)
            pos = pos + 2 * bits - 1
            same = pos[1:] == pos[:-1]
            if same.any():
                keep = np.ones(pos.size, bool)
                keep[1:] = ~same
                head = _leftmost_survivor(keep)
                gone = ~keep
                parent[rid[gone]] = rid[head[gone]]
                pos, rid, words = pos[keep], rid[keep], words[keep]
    return pos, rid, parent


# Gaussian increments with bridge correction

def gb_step(pos, rid, parent, step, dt, key_inc, key_br):
    """One Gaussian step; returns the new ``(pos, rid)`` arrays."""
    m = pos.size
    new = pos + np.sqrt(dt) * word_to_normal_np(counter_word_np(np.uint64(key_inc), step, rid))
    if m == 1:
        return new, rid
    d0 = np.diff(pos)
    d1 = np.diff(new)
    merge = d1 <= 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        ex = d0 * d1 / dt
    cand = ~merge & (ex < BRIDGE_CUTOFF)
    if cand.any():
        u = word_to_uniform_np(counter_word_np(np.uint64(key_br), step, rid[1:][cand]))
        merge[cand] = u < np.exp(-ex[cand])
    start = np.empty(m, bool)
    start[0] = True
    start[1:] = ~merge
    heads = np.flatnonzero(start)
    group = np.cumsum(start) - 1
    gpos = new[heads]
    # a group survives only if it lies strictly right of everything before it
    prev_max = np.empty_like(gpos)
    prev_max[0] = -np.inf
    prev_max[1:] = np.maximum.accumulate(gpos)[:-1]
    keep_g = gpos > prev_max
    final_head = heads[_leftmost_survivor(keep_g)[group]]
    moved = final_head != np.arange(m)
    parent[rid[moved]] = rid[final_head[moved]]
    return gpos[keep_g], rid[heads[keep_g]]


def gb_run(x0, n_steps, dt, dt_last, key_inc, key_br):
    n = x0.size
    pos = np.array(x0, dtype=float)
    rid = np.arange(n, dtype=np.int64)
    parent = np.arange(n, dtype=np.int64)
    for step in range(n_steps):
        h = dt_last if step == n_steps - 1 else dt
        pos, rid = gb_step(pos, rid, parent, step, h, key_inc, key_br)
    return pos, rid, parent


# summaries

def labels_from_parent(parent):
    lab = parent.copy()
    while True:
        nxt = lab[lab]
        if np.array_equal(nxt, lab):
            return lab
        lab = nxt


def summarize(labels, pos, lo, hi, edges, pos_lo, pos_hi):
    cs = np.zeros(labels.size, np.int64)
    cs[1:] = np.cumsum(labels[1:] != labels[:-1])
    nu = 1 + int(cs[hi] - cs[lo])
    blocks = 1 + cs[edges[1:]] - cs[edges[:-1]]
    n_in = int(np.count_nonzero((pos >= pos_lo) & (pos <= pos_hi)))
    return nu, n_in, blocks


def rw_batch(n_grid, n_steps, keys, lo, hi, edges, pos_lo, pos_hi):
    nrep = keys.size
    nu = np.empty(nrep, np.int64)
    n_in = np.empty(nrep, np.int64)
    blocks = np.zeros((nrep, max(edges.size - 1, 0)), np.int64)
    for r in range(nrep):
        pos, _, parent = rw_run(n_grid, n_steps, keys[r])
        nu[r], n_in[r], blocks[r] = summarize(
            labels_from_parent(parent), pos.astype(float), lo, hi, edges, pos_lo, pos_hi
        )
    return nu, n_in, blocks


def gb_batch(x0, n_steps, dt, dt_last, keys_inc, keys_br, lo, hi, edges, pos_lo, pos_hi):
    nrep = keys_inc.size
    nu = np.empty(nrep, np.int64)
    n_in = np.empty(nrep, np.int64)
    blocks = np.zeros((nrep, max(edges.size - 1, 0)), np.int64)
    for r in range(nrep):
        pos, _, parent = gb_run(x0, n_steps, dt, dt_last, keys_inc[r], keys_br[r])
        nu[r], n_in[r], blocks[r] = summarize(
            labels_from_parent(parent), pos, lo, hi, edges, pos_lo, pos_hi
        )
    return nu, n_in, blocks
