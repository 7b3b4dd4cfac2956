"""Weighted undirected graphs: construction, generators, I/O, distances.

Graphs are immutable once built.  Vertices are ``0..n-1``; edges carry
positive integer weights.  Parallel edges collapse to the minimum weight and
self-loops are rejected.  Internally the edge set is stored both as a
canonical sorted list of ``(u, v, w)`` with ``u < v`` and as CSR arrays for
the kernels.
"""

from __future__ import annotations

import hashlib
import random
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import kernels
from .errors import ConnectivityFailure, Disconnected, NegativeWeight, Overflow, ParseError

UNREACHABLE = -1

_PATH_SUM_BOUND = 1 << 62

# Resampling budget for generators that must return a connected graph.
_CONNECT_RETRIES = 50


def derive(seed: int, salt: int) -> int:
    """Derive a deterministic substream seed from ``seed`` and ``salt``."""
    return (seed * 1000003 + salt) % (1 << 63)


# Shared substream salts: every executor derives its stage seeds with these,
# which is what makes independently driven builds value-identical.
STAGE_HIER = 11
STAGE_HOPSET = 22
STAGE_SPANNER = 33


class Graph:
    """An immutable weighted undirected graph in CSR form."""

    __slots__ = ("n", "m", "indptr", "nbr", "wgt", "_edges", "_w_max")

    def __init__(self, n: int, edges: Iterable[tuple[int, int, int]]):
        if n < 0:
            raise ValueError("vertex count must be nonnegative")
        collapsed: dict[tuple[int, int], int] = {}
        for u, v, w in edges:
            u = int(u)
            v = int(v)
            w = int(w)
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge endpoint out of range: ({u}, {v})")
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if w < 1:
                raise NegativeWeight(f"edge ({u}, {v}) has weight {w}; "
                                     "weights must be positive integers")
            key = (u, v) if u < v else (v, u)
            old = collapsed.get(key)
            if old is None or w < old:
                collapsed[key] = w
        elist = sorted((u, v, w) for (u, v), w in collapsed.items())
        self.n = n
        self.m = len(elist)
        self._edges = elist
        self._w_max = max((w for _, _, w in elist), default=0)
        if n > 1 and (n - 1) * self._w_max >= _PATH_SUM_BOUND:
            raise Overflow("path sums may exceed the 2**62 arithmetic bound")
        deg = np.zeros(n + 1, dtype=np.int64)
        for u, v, _ in elist:
            deg[u + 1] += 1
            deg[v + 1] += 1
        indptr = np.cumsum(deg, dtype=np.int64)
        nbr = np.zeros(2 * self.m, dtype=np.int64)
        wgt = np.zeros(2 * self.m, dtype=np.int64)
        cursor = indptr[:-1].copy()
        for u, v, w in elist:
            nbr[cursor[u]] = v
            wgt[cursor[u]] = w
            cursor[u] += 1
            nbr[cursor[v]] = u
            wgt[cursor[v]] = w
            cursor[v] += 1
        # neighbor lists sorted by vertex id for deterministic iteration
        for v in range(n):
            lo, hi = indptr[v], indptr[v + 1]
            order = np.argsort(nbr[lo:hi], kind="stable")
            nbr[lo:hi] = nbr[lo:hi][order]
            wgt[lo:hi] = wgt[lo:hi][order]
        self.indptr = indptr
        self.nbr = nbr
        self.wgt = wgt

    # -- basic accessors ---------------------------------------------------

    @property
    def edges(self) -> list[tuple[int, int, int]]:
        """Canonical edge list: sorted ``(u, v, w)`` with ``u < v``."""
        return list(self._edges)

    @property
    def w_max(self) -> int:
        return self._w_max

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int) -> Iterator[tuple[int, int]]:
        lo, hi = int(self.indptr[v]), int(self.indptr[v + 1])
        for e in range(lo, hi):
            yield int(self.nbr[e]), int(self.wgt[e])

    def edge_weight(self, u: int, v: int) -> int | None:
        """Weight of edge ``(u, v)`` or None when absent."""
        lo, hi = int(self.indptr[u]), int(self.indptr[u + 1])
        idx = int(np.searchsorted(self.nbr[lo:hi], v)) + lo
        if idx < hi and self.nbr[idx] == v:
            return int(self.wgt[idx])
        return None

    def union_edges(self, extra: Iterable[tuple[int, int, int]]) -> "Graph":
        """New graph over the same vertices with extra edges folded in."""
        return Graph(self.n, self._edges + list(extra))

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, Graph) and other.n == self.n
                and other._edges == self._edges)

    def __hash__(self):
        return hash((self.n, tuple(self._edges)))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m})"

    # -- connectivity ------------------------------------------------------

    def component_of(self, root: int) -> list[int]:
        """Vertices reachable from ``root``, ascending."""
        seen = np.zeros(self.n, dtype=bool)
        seen[root] = True
        stack = [root]
        while stack:
            v = stack.pop()
            for u in self.nbr[self.indptr[v]:self.indptr[v + 1]]:
                if not seen[u]:
                    seen[u] = True
                    stack.append(int(u))
        return [int(v) for v in np.flatnonzero(seen)]

    def components(self) -> list[list[int]]:
        out = []
        seen = np.zeros(self.n, dtype=bool)
        for r in range(self.n):
            if not seen[r]:
                comp = self.component_of(r)
                for v in comp:
                    seen[v] = True
                out.append(comp)
        return out

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        return len(self.component_of(0)) == self.n

    def require_connected(self) -> None:
        if not self.is_connected():
            raise Disconnected("graph is not connected")

    # -- distances ---------------------------------------------------------

    def sssp(self, src: int) -> np.ndarray:
        """Exact shortest-path distances; UNREACHABLE (-1) where not reached."""
        return kernels.dijkstra(self.indptr, self.nbr, self.wgt, src)

    def sssp_hops(self, src: int) -> tuple[np.ndarray, np.ndarray]:
        """Distances plus minimum hop counts among shortest paths."""
        return kernels.dijkstra_hops(self.indptr, self.nbr, self.wgt, src)

    def hop_restricted_sssp(self, src: int, h: int,
                            limit: int = -1) -> np.ndarray:
        """Best distance using at most ``h`` edges (synchronous relaxation)."""
        init_v = np.array([src], dtype=np.int64)
        init_d = np.zeros(1, dtype=np.int64)
        dist, _, _ = kernels.bellman_ford(self.indptr, self.nbr, self.wgt,
                                          init_v, init_d, None, h, limit,
                                          None)
        return dist

    def all_pairs(self) -> np.ndarray:
        """Dense ``n x n`` distance matrix (UNREACHABLE = -1 off-component)."""
        out = np.empty((self.n, self.n), dtype=np.int64)
        for s in range(self.n):
            out[s] = self.sssp(s)
        return out

    def eccentricity(self, src: int) -> int:
        """Largest finite distance from ``src``."""
        dist = self.sssp(src)
        finite = dist[dist >= 0]
        return int(finite.max()) if finite.size else 0

    def diameter(self) -> int:
        """Largest finite distance over all pairs (exact; n Dijkstra runs)."""
        best = 0
        for s in range(self.n):
            e = self.eccentricity(s)
            if e > best:
                best = e
        return best

    def diameter_upper_bound(self) -> int:
        """Cheap bound: twice the eccentricity of one root per component."""
        seen = np.zeros(self.n, dtype=bool)
        bound = 0
        for r in range(self.n):
            if seen[r]:
                continue
            dist = self.sssp(r)
            reached = dist >= 0
            seen |= reached
            ecc = int(dist[reached].max()) if reached.any() else 0
            bound = max(bound, 2 * ecc)
        return bound

    def shortest_path_diameter(self) -> int:
        """Max over pairs of the minimum hop count among shortest paths."""
        best = 0
        for s in range(self.n):
            _, hops = self.sssp_hops(s)
            h = int(hops.max())
            if h > best:
                best = h
        return best


# -- file format -----------------------------------------------------------


def save_graph(g: Graph, path: str) -> None:
    """Write a graph as a plain edge list (header line, then ``u v w``)."""
    with open(path, "w", encoding="ascii") as f:
        f.write(canonical_text(g))


def canonical_text(g: Graph) -> str:
    lines = [f"{g.n} {g.m}"]
    lines.extend(f"{u} {v} {w}" for u, v, w in g.edges)
    return "\n".join(lines) + "\n"


def graph_digest(g: Graph) -> str:
    """Stable hex digest of the canonical edge-list text."""
    return hashlib.sha256(canonical_text(g).encode("ascii")).hexdigest()


def load_graph(path: str) -> Graph:
    """Parse the edge-list format written by :func:`save_graph`.

    Blank lines and ``#`` comments are ignored.  Raises :class:`ParseError`
    with a 1-based line number on malformed input.
    """
    header: tuple[int, int] | None = None
    edges: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, raw in enumerate(f, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if header is None:
                if len(parts) != 2:
                    raise ParseError(lineno, "expected header 'n m'")
                try:
                    n, m = int(parts[0]), int(parts[1])
                except ValueError:
                    raise ParseError(lineno, "header fields must be integers")
                if n < 0 or m < 0:
                    raise ParseError(lineno, "header fields must be >= 0")
                header = (n, m)
                continue
            if len(parts) != 3:
                raise ParseError(lineno, "expected edge line 'u v w'")
            try:
                u, v, w = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise ParseError(lineno, "edge fields must be integers")
            n = header[0]
            if not (0 <= u < n and 0 <= v < n):
                raise ParseError(lineno, f"endpoint out of range 0..{n - 1}")
            if u == v:
                raise ParseError(lineno, "self-loops are not allowed")
            if w < 1:
                raise ParseError(lineno, "weights must be positive integers")
            edges.append((u, v, w))
    if header is None:
        raise ParseError(0, "empty graph file")
    if len(edges) != header[1]:
        raise ParseError(0, f"header declares {header[1]} edges, "
                            f"found {len(edges)}")
    return Graph(header[0], edges)


# -- generators ------------------------------------------------------------


def _uniform_weight(rng: random.Random, w_max: int) -> int:
    return rng.randint(1, w_max)


def gen_path(n: int, w_max: int, seed: int) -> Graph:
    """Path 0-1-...-(n-1) with uniform random weights."""
    rng = random.Random(seed)
    edges = [(v, v + 1, _uniform_weight(rng, w_max)) for v in range(n - 1)]
    return Graph(n, edges)


def gen_grid(rows: int, cols: int, w_max: int, seed: int) -> Graph:
    """rows x cols grid; vertex ``(r, c)`` is ``r * cols + c``."""
    rng = random.Random(seed)
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1, _uniform_weight(rng, w_max)))
            if r + 1 < rows:
                edges.append((v, v + cols, _uniform_weight(rng, w_max)))
    return Graph(rows * cols, edges)


def gen_erdos_renyi(n: int, p: float, w_max: int, seed: int) -> Graph:
    """G(n, p) with uniform weights, resampled until connected."""
    if n == 0:
        return Graph(0, [])
    for attempt in range(_CONNECT_RETRIES):
        rng = random.Random(derive(seed, attempt))
        edges = []
        for u in range(n):
            for v in range(u + 1, n):
                if rng.random() < p:
                    edges.append((u, v, _uniform_weight(rng, w_max)))
        g = Graph(n, edges)
        if g.is_connected():
            return g
    raise ConnectivityFailure(
        f"no connected G({n}, {p}) sample in {_CONNECT_RETRIES} attempts")


def gen_preferential(n: int, mdeg: int, w_max: int, seed: int) -> Graph:
    """Degree-proportional attachment; connected by construction.

    Starts from a clique on ``mdeg + 1`` vertices; each later vertex attaches
    to ``mdeg`` distinct earlier vertices sampled proportional to degree.
    """
    if mdeg < 1:
        raise ValueError("attachment degree must be >= 1")
    rng = random.Random(seed)
    m0 = min(mdeg + 1, n)
    edges = [(u, v, _uniform_weight(rng, w_max))
             for u in range(m0) for v in range(u + 1, m0)]
    # endpoint pool: each vertex appears once per incident edge
    pool: list[int] = []
    for u, v, _ in edges:
        pool.append(u)
        pool.append(v)
    for v in range(m0, n):
        targets: set[int] = set()
        want = min(mdeg, v)
        while len(targets) < want:
            targets.add(pool[rng.randrange(len(pool))] if pool
                        else rng.randrange(v))
        for u in sorted(targets):
            edges.append((u, v, _uniform_weight(rng, w_max)))
            pool.append(u)
            pool.append(v)
    return Graph(n, edges)


def gen_random_connected(n: int, avg_deg: float, w_max: int,
                         seed: int) -> Graph:
    """Random tree plus extra random edges hitting a target average degree.

    Unlike :func:`gen_erdos_renyi` this never resamples: the uniform random
    spanning tree guarantees connectivity and extra edges are drawn directly.
    """
    rng = random.Random(seed)
    edges = []
    for v in range(1, n):
        u = rng.randrange(v)
        edges.append((u, v, _uniform_weight(rng, w_max)))
    target_m = max(n - 1, int(round(avg_deg * n / 2)))
    max_m = n * (n - 1) // 2
    target_m = min(target_m, max_m)
    have = {(u, v) for u, v, _ in edges}
    while len(have) < target_m:
        u = rng.randrange(n)
        v = rng.randrange(n)
        if u == v:
            continue
        key = (u, v) if u < v else (v, u)
        if key in have:
            continue
        have.add(key)
        edges.append((key[0], key[1], _uniform_weight(rng, w_max)))
    return Graph(n, edges)


def generate(kind: str, n: int, density: float, w_max: int,
             seed: int) -> Graph:
    """Dispatch used by the command-line tool.

    ``density`` means: columns for ``grid``, edge probability for ``er``,
    attachment degree for ``pref``, target average degree for ``random``;
    ``path`` ignores it.
    """
    if kind == "path":
        return gen_path(n, w_max, seed)
    if kind == "grid":
        cols = max(1, int(density))
        rows = (n + cols - 1) // cols
        return gen_grid(rows, cols, w_max, seed)
    if kind == "er":
        return gen_erdos_renyi(n, density, w_max, seed)
    if kind == "pref":
        return gen_preferential(n, max(1, int(density)), w_max, seed)
    if kind == "random":
        return gen_random_connected(n, density, w_max, seed)
    raise ValueError(f"unknown graph kind: {kind!r}")


def sample_pairs(n: int, count: int, seed: int) -> list[tuple[int, int]]:
    """Deterministic sample of distinct ordered-canonical vertex pairs."""
    rng = random.Random(seed)
    total = n * (n - 1) // 2
    if count >= total:
        return [(u, v) for u in range(n) for v in range(u + 1, n)]
    seen: set[tuple[int, int]] = set()
    out: list[tuple[int, int]] = []
    while len(out) < count:
        u = rng.randrange(n)
        v = rng.randrange(n)
        if u == v:
            continue
        pair = (u, v) if u < v else (v, u)
        if pair in seen:
            continue
        seen.add(pair)
        out.append(pair)
    return out
