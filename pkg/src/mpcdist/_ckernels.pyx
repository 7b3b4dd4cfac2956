# cython: language_level=3
"""Compiled graph kernels; signature-compatible with _pykernels."""

from libc.stdlib cimport malloc, realloc, free

import numpy as np

cimport numpy as cnp

cnp.import_array()

INF = 2**63 - 1

ctypedef cnp.int64_t i64


cdef struct Heap:
    i64 *k1
    i64 *k2
    i64 *v
    Py_ssize_t size
    Py_ssize_t cap


cdef inline int heap_init(Heap *h, Py_ssize_t cap) except -1:
    if cap < 16:
        cap = 16
    h.k1 = <i64 *>malloc(cap * sizeof(i64))
    h.k2 = <i64 *>malloc(cap * sizeof(i64))
    h.v = <i64 *>malloc(cap * sizeof(i64))
    if h.k1 == NULL or h.k2 == NULL or h.v == NULL:
        raise MemoryError()
    h.size = 0
    h.cap = cap
    return 0


cdef inline void heap_free(Heap *h) noexcept:
    free(h.k1)
    free(h.k2)
    free(h.v)


cdef inline int heap_push(Heap *h, i64 a, i64 b, i64 vv) except -1:
    cdef Py_ssize_t i, p
    cdef i64 *nk1
    cdef i64 *nk2
    cdef i64 *nv
    if h.size == h.cap:
        h.cap *= 2
        nk1 = <i64 *>realloc(h.k1, h.cap * sizeof(i64))
        nk2 = <i64 *>realloc(h.k2, h.cap * sizeof(i64))
        nv = <i64 *>realloc(h.v, h.cap * sizeof(i64))
        if nk1 == NULL or nk2 == NULL or nv == NULL:
            raise MemoryError()
        h.k1 = nk1
        h.k2 = nk2
        h.v = nv
    i = h.size
    h.size += 1
    while i > 0:
        p = (i - 1) >> 1
        if (h.k1[p] < a) or (h.k1[p] == a and h.k2[p] <= b):
            break
        h.k1[i] = h.k1[p]
        h.k2[i] = h.k2[p]
        h.v[i] = h.v[p]
        i = p
    h.k1[i] = a
    h.k2[i] = b
    h.v[i] = vv
    return 0


cdef inline void heap_pop(Heap *h, i64 *a, i64 *b, i64 *vv) noexcept:
    cdef Py_ssize_t i = 0, c
    cdef i64 la, lb, lv
    a[0] = h.k1[0]
    b[0] = h.k2[0]
    vv[0] = h.v[0]
    h.size -= 1
    if h.size == 0:
        return
    la = h.k1[h.size]
    lb = h.k2[h.size]
    lv = h.v[h.size]
    while True:
        c = 2 * i + 1
        if c >= h.size:
            break
        if c + 1 < h.size and ((h.k1[c + 1] < h.k1[c]) or
                               (h.k1[c + 1] == h.k1[c] and h.k2[c + 1] < h.k2[c])):
            c += 1
        if (la < h.k1[c]) or (la == h.k1[c] and lb <= h.k2[c]):
            break
        h.k1[i] = h.k1[c]
        h.k2[i] = h.k2[c]
        h.v[i] = h.v[c]
        i = c
    h.k1[i] = la
    h.k2[i] = lb
    h.v[i] = lv


def dijkstra(cnp.ndarray[i64, ndim=1] indptr, cnp.ndarray[i64, ndim=1] nbr,
             cnp.ndarray[i64, ndim=1] wgt, Py_ssize_t src):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[i64, ndim=1] dist = np.full(n, -1, dtype=np.int64)
    cdef i64[:] dv = dist
    cdef i64[:] ip = indptr
    cdef i64[:] nb = nbr
    cdef i64[:] wg = wgt
    cdef Heap h
    cdef i64 d, dummy, v, u, cand
    cdef Py_ssize_t e
    heap_init(&h, 1024)
    try:
        dv[src] = 0
        heap_push(&h, 0, src, src)
        while h.size > 0:
            heap_pop(&h, &d, &dummy, &v)
            if d != dv[v]:
                continue
            for e in range(ip[v], ip[v + 1]):
                u = nb[e]
                cand = d + wg[e]
                if dv[u] == -1 or cand < dv[u]:
                    dv[u] = cand
                    heap_push(&h, cand, u, u)
    finally:
        heap_free(&h)
    return dist


def dijkstra_lex(cnp.ndarray[i64, ndim=1] indptr, cnp.ndarray[i64, ndim=1] nbr,
                 cnp.ndarray[i64, ndim=1] wgt,
                 cnp.ndarray[i64, ndim=1] init_v,
                 cnp.ndarray[i64, ndim=1] init_d,
                 cnp.ndarray[i64, ndim=1] init_o, i64 limit):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[i64, ndim=1] dist = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] orig = np.full(n, -1, dtype=np.int64)
    cdef i64[:] dv = dist
    cdef i64[:] ov = orig
    cdef i64[:] ip = indptr
    cdef i64[:] nb = nbr
    cdef i64[:] wg = wgt
    cdef Heap h
    cdef i64 d, o, v, u, cand
    cdef Py_ssize_t e, idx
    heap_init(&h, 1024)
    try:
        for idx in range(init_v.shape[0]):
            v = init_v[idx]
            d = init_d[idx]
            o = init_o[idx]
            if limit >= 0 and d > limit:
                continue
            if dv[v] == -1 or d < dv[v] or (d == dv[v] and o < ov[v]):
                dv[v] = d
                ov[v] = o
                heap_push(&h, d, o, v)
        while h.size > 0:
            heap_pop(&h, &d, &o, &v)
            if d != dv[v] or o != ov[v]:
                continue
            for e in range(ip[v], ip[v + 1]):
                u = nb[e]
                cand = d + wg[e]
                if limit >= 0 and cand > limit:
                    continue
                if dv[u] == -1 or cand < dv[u] or (cand == dv[u] and o < ov[u]):
                    dv[u] = cand
                    ov[u] = o
                    heap_push(&h, cand, o, u)
    finally:
        heap_free(&h)
    return dist, orig


def dijkstra_hops(cnp.ndarray[i64, ndim=1] indptr, cnp.ndarray[i64, ndim=1] nbr,
                  cnp.ndarray[i64, ndim=1] wgt, Py_ssize_t src):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[i64, ndim=1] dist = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] hops = np.full(n, -1, dtype=np.int64)
    cdef i64[:] dv = dist
    cdef i64[:] hv = hops
    cdef i64[:] ip = indptr
    cdef i64[:] nb = nbr
    cdef i64[:] wg = wgt
    cdef Heap h
    cdef i64 d, hh, v, u, cand, ch
    cdef Py_ssize_t e
    heap_init(&h, 1024)
    try:
        dv[src] = 0
        hv[src] = 0
        heap_push(&h, 0, 0, src)
        while h.size > 0:
            heap_pop(&h, &d, &hh, &v)
            if d != dv[v] or hh != hv[v]:
                continue
            for e in range(ip[v], ip[v + 1]):
                u = nb[e]
                cand = d + wg[e]
                ch = hh + 1
                if dv[u] == -1 or cand < dv[u] or (cand == dv[u] and ch < hv[u]):
                    dv[u] = cand
                    hv[u] = ch
                    heap_push(&h, cand, ch, u)
    finally:
        heap_free(&h)
    return dist, hops


def cluster_dijkstra(cnp.ndarray[i64, ndim=1] indptr,
                     cnp.ndarray[i64, ndim=1] nbr,
                     cnp.ndarray[i64, ndim=1] wgt, Py_ssize_t center,
                     cnp.ndarray[i64, ndim=1] thr):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[i64, ndim=1] dist = np.full(n, -1, dtype=np.int64)
    cdef i64[:] dv = dist
    cdef i64[:] th = thr
    cdef i64[:] ip = indptr
    cdef i64[:] nb = nbr
    cdef i64[:] wg = wgt
    cdef Heap h
    cdef i64 d, dummy, v, u, cand
    cdef Py_ssize_t e
    cdef Py_ssize_t cnt = 0
    heap_init(&h, 1024)
    try:
        if th[center] > 0:
            dv[center] = 0
            heap_push(&h, 0, center, center)
        while h.size > 0:
            heap_pop(&h, &d, &dummy, &v)
            if d != dv[v]:
                continue
            for e in range(ip[v], ip[v + 1]):
                u = nb[e]
                cand = d + wg[e]
                if cand >= th[u]:
                    continue
                if dv[u] == -1 or cand < dv[u]:
                    dv[u] = cand
                    heap_push(&h, cand, u, u)
    finally:
        heap_free(&h)
    for v in range(n):
        if dv[v] != -1:
            cnt += 1
    cdef cnp.ndarray[i64, ndim=1] vs = np.empty(cnt, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] ds = np.empty(cnt, dtype=np.int64)
    cnt = 0
    for v in range(n):
        if dv[v] != -1:
            vs[cnt] = v
            ds[cnt] = dv[v]
            cnt += 1
    return vs, ds


def bellman_ford(cnp.ndarray[i64, ndim=1] indptr, cnp.ndarray[i64, ndim=1] nbr,
                 cnp.ndarray[i64, ndim=1] wgt,
                 cnp.ndarray[i64, ndim=1] init_v,
                 cnp.ndarray[i64, ndim=1] init_d,
                 cnp.ndarray[i64, ndim=1] init_o, i64 h, i64 limit,
                 cnp.ndarray[i64, ndim=1] thr):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef bint use_o = init_o.shape[0] > 0
    cdef bint use_t = thr.shape[0] > 0
    cdef cnp.ndarray[i64, ndim=1] dist = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] orig = np.full(n, -1, dtype=np.int64)
    cdef i64[:] dv = dist
    cdef i64[:] ov = orig
    cdef i64[:] ip = indptr
    cdef i64[:] nb = nbr
    cdef i64[:] wg = wgt
    cdef i64[:] th = thr
    # pending buffers with a stamp so they need no per-iteration clearing
    cdef cnp.ndarray[i64, ndim=1] pd_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] po_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] st_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] fr_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] tf_arr = np.empty(n, dtype=np.int64)
    cdef i64[:] pd = pd_arr
    cdef i64[:] po = po_arr
    cdef i64[:] st = st_arr
    cdef i64[:] fr = fr_arr
    cdef i64[:] tf = tf_arr
    cdef Py_ssize_t fr_n = 0, tf_n, idx, e, i
    cdef i64 v, d, o, u, cand, stamp = 0, iters = 0, dvv, ovv
    for idx in range(init_v.shape[0]):
        v = init_v[idx]
        d = init_d[idx]
        o = init_o[idx] if use_o else -1
        if limit >= 0 and d > limit:
            continue
        if use_t and d >= th[v]:
            continue
        if dv[v] == -1 or d < dv[v] or (d == dv[v] and o < ov[v]):
            if dv[v] == -1:
                fr[fr_n] = v
                fr_n += 1
            dv[v] = d
            ov[v] = o
    # sort + dedup the initial frontier for canonical order
    if fr_n > 1:
        fr_arr[:fr_n].sort()
    while fr_n > 0 and iters < h:
        stamp += 1
        tf_n = 0
        for i in range(fr_n):
            v = fr[i]
            d = dv[v]
            o = ov[v]
            for e in range(ip[v], ip[v + 1]):
                u = nb[e]
                cand = d + wg[e]
                if limit >= 0 and cand > limit:
                    continue
                if use_t and cand >= th[u]:
                    continue
                if st[u] != stamp:
                    st[u] = stamp
                    pd[u] = cand
                    po[u] = o
                    tf[tf_n] = u
                    tf_n += 1
                elif cand < pd[u] or (cand == pd[u] and o < po[u]):
                    pd[u] = cand
                    po[u] = o
        fr_n = 0
        for i in range(tf_n):
            u = tf[i]
            cand = pd[u]
            o = po[u]
            dvv = dv[u]
            ovv = ov[u]
            if dvv == -1 or cand < dvv or (cand == dvv and o < ovv):
                dv[u] = cand
                ov[u] = o
                fr[fr_n] = u
                fr_n += 1
        if fr_n > 1:
            fr_arr[:fr_n].sort()
        if fr_n > 0:
            iters += 1
    return dist, orig, int(iters)
