"""Graph kernels with a compiled fast path and a pure-Python fallback.

Both backends expose the same five functions with identical semantics and
value-identical outputs:

- ``dijkstra(indptr, nbr, wgt, src) -> dist``
- ``dijkstra_lex(indptr, nbr, wgt, init_v, init_d, init_o, limit)
  -> (dist, origin)``
- ``dijkstra_hops(indptr, nbr, wgt, src) -> (dist, hops)``
- ``cluster_dijkstra(indptr, nbr, wgt, center, thr) -> (vs, ds)``
- ``bellman_ford(indptr, nbr, wgt, init_v, init_d, init_o, h, limit, thr)
  -> (dist, origin, iters)``

Conventions: CSR arrays are int64; ``-1`` marks an unreachable vertex in
returned arrays; ``limit < 0`` means unbounded; a length-0 ``init_o`` means
"no tie-break origins" and a length-0 ``thr`` means "no per-vertex threshold".
The compiled backend is used unless the environment variable
``MPCDIST_PURE=1`` is set or the extension failed to build.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

INF = _pykernels.INF

_EMPTY = np.empty(0, dtype=np.int64)

if os.environ.get("MPCDIST_PURE") == "1":
    _backend = _pykernels
    HAVE_COMPILED = False
else:
    try:
        from . import _ckernels as _backend  # type: ignore[no-redef]

        HAVE_COMPILED = True
    except ImportError:  # pragma: no cover - depends on build environment
        _backend = _pykernels
        HAVE_COMPILED = False

BACKEND_NAME = "compiled" if HAVE_COMPILED else "pure"


def _as_i64(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("expected a 1-d int64 array")
    return np.ascontiguousarray(arr)


def dijkstra(indptr, nbr, wgt, src):
    """Single-source shortest-path distances; -1 for unreachable vertices."""
    return _backend.dijkstra(_as_i64(indptr), _as_i64(nbr), _as_i64(wgt),
                             int(src))


def dijkstra_lex(indptr, nbr, wgt, init_v, init_d, init_o, limit=-1):
    """Multi-source Dijkstra minimizing ``(distance, origin)`` per vertex.

    Entries with distance above ``limit`` (when ``limit >= 0``) are never
    admitted.  Returns ``(dist, origin)``.
    """
    return _backend.dijkstra_lex(_as_i64(indptr), _as_i64(nbr), _as_i64(wgt),
                                 _as_i64(init_v), _as_i64(init_d),
                                 _as_i64(init_o), int(limit))


def dijkstra_hops(indptr, nbr, wgt, src):
    """Distances plus the minimum hop count among shortest paths."""
    return _backend.dijkstra_hops(_as_i64(indptr), _as_i64(nbr), _as_i64(wgt),
                                  int(src))


def cluster_dijkstra(indptr, nbr, wgt, center, thr):
    """Grow a ball around ``center`` keeping vertices with ``d < thr[v]``.

    Returns ``(vs, ds)`` sorted by vertex id.  ``thr[center] <= 0`` yields an
    empty ball.
    """
    return _backend.cluster_dijkstra(_as_i64(indptr), _as_i64(nbr),
                                     _as_i64(wgt), int(center), _as_i64(thr))


def bellman_ford(indptr, nbr, wgt, init_v, init_d, init_o=None, h=-1,
                 limit=-1, thr=None):
    """Synchronous hop-limited relaxation with optional lex tie-breaks.

    Runs at most ``h`` change-producing iterations (``h < 0`` means ``n``),
    admitting a candidate at ``v`` only when it is ``<= limit`` (if set) and
    ``< thr[v]`` (if given).  Returns ``(dist, origin, iters)`` where
    ``iters`` counts iterations that changed at least one value.
    """
    indptr = _as_i64(indptr)
    n = indptr.shape[0] - 1
    if h is None or h < 0:
        h = n
    init_o = _EMPTY if init_o is None else _as_i64(init_o)
    thr = _EMPTY if thr is None else _as_i64(thr)
    return _backend.bellman_ford(indptr, _as_i64(nbr), _as_i64(wgt),
                                 _as_i64(init_v), _as_i64(init_d), init_o,
                                 int(h), int(limit), thr)
