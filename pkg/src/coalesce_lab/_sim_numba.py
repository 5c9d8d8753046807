"""numba kernels for the coalescing-particle simulator.

Conventions shared with ``_sim_numpy``:

* particles are indexed by their grid index; ``rid[j]`` is the grid index of
  the representative of the j-th surviving cluster and is always the root of
  that cluster in the union-find forest ``parent``;
* when two clusters merge the right one is attached to the left one and the
  merged cluster keeps following the left representative's path, so
  ``parent[i] <= i`` for every i;
* random-walk positions are integers in units of half the grid spacing (all
  particles keep a common parity, so meetings are exact coincidences);
* the walk consumes bit ``step % 64`` of word ``(step // 64, rid)`` of its
  stream; the Gaussian scheme consumes word ``(step, rid)`` of the increment
  stream and of the bridge stream.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit, prange
from .rng import counter_word, popcount64, word_to_normal, word_to_uniform

_ONE = np.uint64(1)
_ALL = np.uint64(0xFFFFFFFFFFFFFFFF)
BRIDGE_CUTOFF = 40.0


@njit
def _low_mask(nbits):
    if nbits >= 64:
        return _ALL
    return (_ONE << np.uint64(nbits)) - _ONE


# random walk

@njit
def rw_step(pos, rid, parent, m, step, key):
    """One lattice step for the first ``m`` clusters, in place; returns new m."""
    blk = step >> 6
    sh = np.uint64(step & 63)
    w = 0
    for i in range(m):
        bit = np.int64((counter_word(key, blk, rid[i]) >> sh) & _ONE)
        p = pos[i] + 2 * bit - 1
        r = rid[i]
        if w > 0 and pos[w - 1] == p:
            parent[r] = rid[w - 1]
        else:
            pos[w] = p
            rid[w] = r
            w += 1
    return w


@njit
def _walk_chain(pos, rid, words, parent, live, first, last, nb, off):
    c = 0
    for i in range(first, last + 1):
        live[c] = i
        c += 1
    for s in range(nb):
        sh = np.uint64(off + s)
        w = 0
        for r in range(c):
            i = live[r]
            p = pos[i] + 2 * np.int64((words[i] >> sh) & _ONE) - 1
            pos[i] = p
            if w > 0 and pos[live[w - 1]] == p:
                parent[rid[i]] = rid[live[w - 1]]
                rid[i] = -1
            else:
                live[w] = i
                w += 1
        c = w
        if c == 1:
            rest = nb - s - 1
            if rest > 0:
                i = live[0]
                bits = (words[i] >> np.uint64(off + s + 1)) & _low_mask(rest)
                pos[i] += 2 * popcount64(bits) - rest
            return


JUMP_STEPS = 16


@njit
def rw_run(n_grid, n_steps, key):
    """Walk ``n_steps`` lattice steps from grid ``0..n_grid-1``.

    Works in sub-blocks of ``JUMP_STEPS`` steps.  A cluster farther than
    ``2 * JUMP_STEPS`` lattice units from both neighbours cannot meet anyone
    inside the sub-block, so it jumps by a popcount of its bits; chains of
    close clusters are walked step by step.  The outcome is identical to
    calling :func:`rw_step` ``n_steps`` times.
    """
    pos = np.empty(n_grid, np.int64)
    rid = np.empty(n_grid, np.int64)
    parent = np.empty(n_grid, np.int64)
    for i in range(n_grid):
        pos[i] = 2 * i
        rid[i] = i
        parent[i] = i
    words = np.empty(n_grid, np.uint64)
    live = np.empty(n_grid, np.int64)
    m = n_grid
    per_word = 64 // JUMP_STEPS
    n_sub = (n_steps + JUMP_STEPS - 1) // JUMP_STEPS
    for sb in range(n_sub):
        first = sb * JUMP_STEPS
        nb = min(JUMP_STEPS, n_steps - first)
        reach = 2 * nb
        mask = _low_mask(nb)
        off = np.uint64(first & 63)
        if sb % per_word == 0:
            blk = first >> 6
            for j in range(m):
                words[j] = counter_word(key, blk, rid[j])
        merged = False
        j = 0
        while j < m:
            e = j
            while e + 1 < m and pos[e + 1] - pos[e] <= reach:
                e += 1
            if e == j:
                pos[j] += 2 * popcount64((words[j] >> off) & mask) - nb
            else:
                _walk_chain(pos, rid, words, parent, live, j, e, nb, first & 63)
                merged = True
            j = e + 1
        if merged:
            w = 0
            for i in range(m):
                if rid[i] >= 0:
                    pos[w] = pos[i]
                    rid[w] = rid[i]
                    words[w] = words[i]
                    w += 1
            m = w
    return pos[:m].copy(), rid[:m].copy(), parent


# Gaussian increments with Brownian-bridge meeting correction

@njit
def gb_step(pos, rid, parent, m, step, dt, key_inc, key_br, new):
    """One Gaussian step of length ``dt`` in place; returns new m.

    Adjacent pairs merge when their order flips or, otherwise, with the
    probability ``exp(-d0 * d1 / dt)`` that the difference of two Brownian
    motions (variance rate 2) touched zero between gaps d0 and d1.  Merged
    clusters sit at the left representative's new position; a single
    left-to-right pass against the last surviving cluster restores order.
    """
    sq = math.sqrt(dt)
    for j in range(m):
        new[j] = pos[j] + sq * word_to_normal(counter_word(key_inc, step, rid[j]))
    prev_old = pos[0]
    pos[0] = new[0]
    w = 1
    for j in range(1, m):
        old_j = pos[j]
        d0 = old_j - prev_old
        d1 = new[j] - new[j - 1]
        prev_old = old_j
        r = rid[j]
        merge = d1 <= 0.0
        if not merge:
            ex = d0 * d1 / dt
            if ex < BRIDGE_CUTOFF:
                merge = word_to_uniform(counter_word(key_br, step, r)) < math.exp(-ex)
        if merge or new[j] <= pos[w - 1]:
            parent[r] = rid[w - 1]
        else:
            pos[w] = new[j]
            rid[w] = r
            w += 1
    return w


@njit
def gb_run(x0, n_steps, dt, dt_last, key_inc, key_br):
    n = x0.shape[0]
    pos = x0.copy()
    rid = np.empty(n, np.int64)
    parent = np.empty(n, np.int64)
    for i in range(n):
        rid[i] = i
        parent[i] = i
    new = np.empty(n)
    m = n
    for step in range(n_steps):
        h = dt_last if step == n_steps - 1 else dt
        m = gb_step(pos, rid, parent, m, step, h, key_inc, key_br, new)
    return pos[:m].copy(), rid[:m].copy(), parent


# summaries

@njit
def labels_from_parent(parent):
    # parent[i] <= i, so one forward pass resolves every root
    n = parent.shape[0]
    lab = np.empty(n, np.int64)
    for i in range(n):
        p = parent[i]
        lab[i] = i if p == i else lab[p]
    return lab


@njit
def summarize(labels, pos, lo, hi, edges, pos_lo, pos_hi, blocks_out):
    n = labels.shape[0]
    cs = np.zeros(n, np.int64)
    for i in range(1, n):
        cs[i] = cs[i - 1] + (1 if labels[i] != labels[i - 1] else 0)
    nu = 1 + cs[hi] - cs[lo]
    for k in range(edges.shape[0] - 1):
        blocks_out[k] = 1 + cs[edges[k + 1]] - cs[edges[k]]
    n_in = 0
    for j in range(pos.shape[0]):
        if pos_lo <= pos[j] <= pos_hi:
            n_in += 1
    return nu, n_in


@njit(parallel=True)
def rw_batch(n_grid, n_steps, keys, lo, hi, edges, pos_lo, pos_hi):
    nrep = keys.shape[0]
    nblk = max(edges.shape[0] - 1, 0)
    nu = np.empty(nrep, np.int64)
    n_in = np.empty(nrep, np.int64)
    blocks = np.zeros((nrep, nblk), np.int64)
    for r in prange(nrep):
        pos, rid, parent = rw_run(n_grid, n_steps, keys[r])
        lab = labels_from_parent(parent)
        a, b = summarize(lab, pos.astype(np.float64), lo, hi, edges, pos_lo, pos_hi, blocks[r])
        nu[r] = a
        n_in[r] = b
    return nu, n_in, blocks


@njit(parallel=True)
def gb_batch(x0, n_steps, dt, dt_last, keys_inc, keys_br, lo, hi, edges, pos_lo, pos_hi):
    nrep = keys_inc.shape[0]
    nblk = max(edges.shape[0] - 1, 0)
    nu = np.empty(nrep, np.int64)
    n_in = np.empty(nrep, np.int64)
    blocks = np.zeros((nrep, nblk), np.int64)
    for r in prange(nrep):
        pos, rid, parent = gb_run(x0, n_steps, dt, dt_last, keys_inc[r], keys_br[r])
        lab = labels_from_parent(parent)
        a, b = summarize(lab, pos, lo, hi, edges, pos_lo, pos_hi, blocks[r])
        nu[r] = a
        n_in[r] = b
    return nu, n_in, blocks
