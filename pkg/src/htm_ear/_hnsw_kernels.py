"""Compiled inner loops of the HNSW graph.

All state lives in flat arrays owned by :class:`htm_ear.ann_index.HNSWIndex`:

* ``vecs[slot]``            stored vector
* ``links[slot, layer, :]`` neighbour slots, first ``nlinks[slot, layer]`` valid
* ``dead[slot]``            tombstone flag
* ``visited`` / ``tag``     epoch-stamped visited marks (``tag`` is a 1-element array)

Similarity is the inner product; larger is closer.
"""

from __future__ import annotations

import heapq

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _dot(vecs, i, q):
    s = 0.0
    for t in range(q.shape[0]):
        s += vecs[i, t] * q[t]
    return s


@njit(cache=True)
def _next_tag(visited, tag):
    tag[0] += 1
    if tag[0] >= 2_000_000_000:
        visited[:] = 0
        tag[0] = 1
    return tag[0]


@njit(cache=True)
def greedy_step(q, ep, ep_sim, layer, vecs, links, nlinks):
    """Hill-climb on one layer from ``ep`` until no neighbour is closer."""
    changed = True
    while changed:
        changed = False
        for j in range(nlinks[ep, layer]):
            e = links[ep, layer, j]
            s = _dot(vecs, e, q)
            if s > ep_sim or (s == ep_sim and e < ep):
                ep_sim = s
                ep = e
                changed = True
    return ep, ep_sim


@njit(cache=True)
def search_layer(q, entries, ef, layer, vecs, links, nlinks, dead, visited, tag, skip_dead):
    """Best-first beam search on one layer.

    Returns ``(ids, sims)`` sorted by similarity descending (ties: smaller
    slot first). With ``skip_dead`` tombstoned nodes are expanded but never
    enter the result set.
    """
    stamp = _next_tag(visited, tag)
    # candidates: max-heap via negated sim; results: min-heap keyed (sim, -slot)
    cand = [(0.0, 0)]
    cand.pop()
    res = [(0.0, 0)]
    res.pop()
    for i in range(entries.shape[0]):
        e = entries[i]
        if visited[e] == stamp:
            continue
        visited[e] = stamp
        s = _dot(vecs, e, q)
        heapq.heappush(cand, (-s, e))
        if not (skip_dead and dead[e]):
            heapq.heappush(res, (s, -e))
            if len(res) > ef:
                heapq.heappop(res)

    while len(cand) > 0:
        negs, c = heapq.heappop(cand)
        if len(res) >= ef and -negs < res[0][0]:
            break
        for j in range(nlinks[c, layer]):
            e = links[c, layer, j]
            if visited[e] == stamp:
                continue
            visited[e] = stamp
            s = _dot(vecs, e, q)
            if len(res) < ef or s > res[0][0]:
                heapq.heappush(cand, (-s, e))
                if not (skip_dead and dead[e]):
                    heapq.heappush(res, (s, -e))
                    if len(res) > ef:
                        heapq.heappop(res)

    n = len(res)
    ids = np.empty(n, dtype=np.int64)
    sims = np.empty(n, dtype=np.float64)
    # popping the min-heap yields ascending (sim, -slot); fill from the back
    for i in range(n - 1, -1, -1):
        s, neg = heapq.heappop(res)
        ids[i] = -neg
        sims[i] = s
    return ids, sims


@njit(cache=True)
def select_neighbors(base, cand_ids, cand_sims, m, vecs):
    """Diversity heuristic with pruned-candidate backfill.

    ``cand_ids`` must be sorted by similarity to ``base`` descending. A
    candidate is kept when it is closer to ``base`` than to every neighbour
    already kept; the remaining slots are filled with the closest discarded
    candidates so that near-equidistant clusters stay connected.
    """
    n = cand_ids.shape[0]
    out = np.empty(min(m, n), dtype=np.int64)
    pruned = np.empty(n, dtype=np.int64)
    k = 0
    p = 0
    for i in range(n):
        if k >= m:
            break
        e = cand_ids[i]
        good = True
        for r in range(k):
            if _dot(vecs, e, vecs[out[r]]) > cand_sims[i]:
                good = False
                break
        if good:
            out[k] = e
            k += 1
        else:
            pruned[p] = e
            p += 1
    i = 0
    while k < out.shape[0] and i < p:
        out[k] = pruned[i]
        k += 1
        i += 1
    return out[:k]


@njit(cache=True)
def _connect(src, dst, layer, mmax, vecs, links, nlinks):
    cnt = nlinks[src, layer]
    for j in range(cnt):
        if links[src, layer, j] == dst:
            return
    if cnt < mmax:
        links[src, layer, cnt] = dst
        nlinks[src, layer] = cnt + 1
        return
    # overflow: re-select among existing neighbours plus the new one
    ids = np.empty(cnt + 1, dtype=np.int64)
    sims = np.empty(cnt + 1, dtype=np.float64)
    base = vecs[src]
    for j in range(cnt):
        ids[j] = links[src, layer, j]
        sims[j] = _dot(vecs, ids[j], base)
    ids[cnt] = dst
    sims[cnt] = _dot(vecs, dst, base)
    order = np.argsort(-sims, kind="mergesort")
    ids = ids[order]
    sims = sims[order]
    keep = select_neighbors(base, ids, sims, mmax, vecs)
    for j in range(keep.shape[0]):
        links[src, layer, j] = keep[j]
    nlinks[src, layer] = keep.shape[0]


@njit(cache=True)
def insert_node(
    node, level, entry, max_level, m, m0, ef_construction,
    vecs, links, nlinks, dead, visited, tag,
):
    """Wire ``node`` (already written into ``vecs``) into the graph.

    The caller updates the entry point / max level afterwards.
    """
    q = vecs[node]
    ep = entry
    ep_sim = _dot(vecs, ep, q)
    for layer in range(max_level, level, -1):
        ep, ep_sim = greedy_step(q, ep, ep_sim, layer, vecs, links, nlinks)

    entries = np.empty(1, dtype=np.int64)
    entries[0] = ep
    for layer in range(min(level, max_level), -1, -1):
        ids, sims = search_layer(
            q, entries, ef_construction, layer, vecs, links, nlinks, dead, visited, tag, False
        )
        chosen = select_neighbors(q, ids, sims, m, vecs)
        for j in range(chosen.shape[0]):
            links[node, layer, j] = chosen[j]
        nlinks[node, layer] = chosen.shape[0]
        mmax = m0 if layer == 0 else m
        for j in range(chosen.shape[0]):
            _connect(chosen[j], node, layer, mmax, vecs, links, nlinks)
        entries = ids


@njit(cache=True)
def knn(q, k, ef, entry, max_level, vecs, links, nlinks, dead, visited, tag):
    ep = entry
    ep_sim = _dot(vecs, ep, q)
    for layer in range(max_level, 0, -1):
        ep, ep_sim = greedy_step(q, ep, ep_sim, layer, vecs, links, nlinks)
    entries = np.empty(1, dtype=np.int64)
    entries[0] = ep
    ids, sims = search_layer(
        q, entries, max(ef, k), 0, vecs, links, nlinks, dead, visited, tag, True
    )
    return ids, sims
