"""Pure-Python graph kernels (reference backend).

All kernels work on CSR adjacency (indptr, nbr, wgt as int64 numpy arrays),
return int64 numpy arrays, and encode "unreachable" as -1. Thresholds use
INF for "no bound". The compiled backend mirrors these signatures exactly.
"""

import heapq

import numpy as np

INF = 2**63 - 1

__all__ = [
    "INF", "dijkstra", "dijkstra_lex", "dijkstra_hops", "cluster_dijkstra",
    "bellman_ford",
]


def dijkstra(indptr, nbr, wgt, src):
    n = len(indptr) - 1
    ip = indptr.tolist()
    nb = nbr.tolist()
    wg = wgt.tolist()
    dist = [-1] * n
    dist[src] = 0
    heap = [(0, src)]
    while heap:
        d, v = heapq.heappop(heap)
        if d != dist[v]:
            continue
        for e in range(ip[v], ip[v + 1]):
            u = nb[e]
            cand = d + wg[e]
            du = dist[u]
            if du == -1 or cand < du:
                dist[u] = cand
                heapq.heappush(heap, (cand, u))
    return np.array(dist, dtype=np.int64)


def dijkstra_lex(indptr, nbr, wgt, init_v, init_d, init_o, limit):
    """Multi-source Dijkstra with lexicographic (dist, origin) ordering.

    limit < 0 means unbounded; otherwise only values <= limit are admitted.
    Returns (dist, origin); unreached entries are -1.
    """
    n = len(indptr) - 1
    ip = indptr.tolist()
    nb = nbr.tolist()
    wg = wgt.tolist()
    dist = [-1] * n
    orig = [-1] * n
    heap = []
    for v, d, o in zip(init_v.tolist(), init_d.tolist(), init_o.tolist()):
        if limit >= 0 and d > limit:
            continue
        if dist[v] == -1 or (d, o) < (dist[v], orig[v]):
            dist[v] = d
            orig[v] = o
            heap.append((d, o, v))
    heapq.heapify(heap)
    while heap:
        d, o, v = heapq.heappop(heap)
        if (d, o) != (dist[v], orig[v]):
            continue
        for e in range(ip[v], ip[v + 1]):
            u = nb[e]
            cand = d + wg[e]
            if limit >= 0 and cand > limit:
                continue
            du = dist[u]
            if du == -1 or (cand, o) < (du, orig[u]):
                dist[u] = cand
                orig[u] = o
                heapq.heappush(heap, (cand, o, u))
    return np.array(dist, dtype=np.int64), np.array(orig, dtype=np.int64)


def dijkstra_hops(indptr, nbr, wgt, src):
    """Per vertex: (d(src,v), minimum edge count among shortest paths)."""
    n = len(indptr) - 1
    ip = indptr.tolist()
    nb = nbr.tolist()
    wg = wgt.tolist()
    dist = [-1] * n
    hops = [-1] * n
    dist[src] = 0
    hops[src] = 0
    heap = [(0, 0, src)]
    while heap:
        d, h, v = heapq.heappop(heap)
        if (d, h) != (dist[v], hops[v]):
            continue
        for e in range(ip[v], ip[v + 1]):
            u = nb[e]
            cand = d + wg[e]
            ch = h + 1
            du = dist[u]
            if du == -1 or (cand, ch) < (du, hops[u]):
                dist[u] = cand
                hops[u] = ch
                heapq.heappush(heap, (cand, ch, u))
    return np.array(dist, dtype=np.int64), np.array(hops, dtype=np.int64)


def cluster_dijkstra(indptr, nbr, wgt, center, thr):
    """Truncated Dijkstra: settle v only while d(center,v) < thr[v].

    Returns (vertices, distances) of the settled set, ascending vertex id.
    """
    n = len(indptr) - 1
    ip = indptr.tolist()
    nb = nbr.tolist()
    wg = wgt.tolist()
    th = thr.tolist()
    dist = [-1] * n
    if th[center] > 0:
        dist[center] = 0
        heap = [(0, center)]
    else:
        heap = []
    while heap:
        d, v = heapq.heappop(heap)
        if d != dist[v]:
            continue
        for e in range(ip[v], ip[v + 1]):
            u = nb[e]
            cand = d + wg[e]
            if cand >= th[u]:
                continue
            du = dist[u]
            if du == -1 or cand < du:
                dist[u] = cand
                heapq.heappush(heap, (cand, u))
    vs = [v for v in range(n) if dist[v] != -1]
    ds = [dist[v] for v in vs]
    return np.array(vs, dtype=np.int64), np.array(ds, dtype=np.int64)


def bellman_ford(indptr, nbr, wgt, init_v, init_d, init_o, h, limit, thr):
    """Synchronous h-iteration Bellman-Ford with optional admission rules.

    init_o empty -> plain minimum (origin output all -1); otherwise the
    estimate order is lexicographic (dist, origin). thr empty -> no
    threshold; otherwise a candidate is admitted at v only if cand < thr[v].
    limit < 0 -> unbounded; otherwise only cand <= limit admitted.
    Early-stops once an iteration admits no change. Returns
    (dist, origin, iterations-that-changed-something).
    """
    n = len(indptr) - 1
    ip = indptr.tolist()
    nb = nbr.tolist()
    wg = wgt.tolist()
    use_o = len(init_o) > 0
    use_t = len(thr) > 0
    th = thr.tolist() if use_t else None
    dist = [-1] * n
    orig = [-1] * n
    frontier = []
    for idx in range(len(init_v)):
        v = int(init_v[idx])
        d = int(init_d[idx])
        o = int(init_o[idx]) if use_o else -1
        if limit >= 0 and d > limit:
            continue
        if use_t and d >= th[v]:
            continue
        if dist[v] == -1 or (d, o) < (dist[v], orig[v]):
            if dist[v] == -1:
                frontier.append(v)
            dist[v] = d
            orig[v] = o
    frontier = sorted(set(frontier))
    iters = 0
    while frontier and iters < h:
        pending = {}
        for v in frontier:
            dv = dist[v]
            ov = orig[v]
            for e in range(ip[v], ip[v + 1]):
                u = nb[e]
                cand = dv + wg[e]
                if limit >= 0 and cand > limit:
                    continue
                if use_t and cand >= th[u]:
                    continue
                cur = pending.get(u)
                if cur is None or (cand, ov) < cur:
                    pending[u] = (cand, ov)
        frontier = []
        for u, (cand, o) in pending.items():
            du = dist[u]
            if du == -1 or (cand, o) < (du, orig[u]):
                dist[u] = cand
                orig[u] = o
                frontier.append(u)
        frontier.sort()
        if frontier:
            iters += 1
    return (np.array(dist, dtype=np.int64), np.array(orig, dtype=np.int64),
            iters)
