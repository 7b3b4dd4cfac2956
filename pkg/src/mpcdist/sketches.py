"""Compact distance sketches built from a sampled vertex hierarchy.

A ``k``-level hierarchy assigns every vertex an exact level in ``0..k-1``
(level ``i`` membership means "level >= i"; higher levels are geometrically
rarer).  Each vertex stores, per level ``j``, its nearest level-``j`` vertex
(the *pivot*) with the distance, plus a *bunch*: every vertex ``w`` that is
strictly closer to it than its pivot one level above ``w``'s own level.  Two
such sketches answer an approximate distance query with no access to the
graph.

All executors (sequential, MPC simulation, congested clique) produce the
same numeric arrays and feed them through :func:`assemble_sketches`, so the
serialized output is byte-identical across them by construction.
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import Disconnected, SketchMismatch
from .graphs import Graph

INF = kernels.INF

# Multiplier in the per-vertex bunch size budget C_B * k * n^(1/k) * ln n.
C_B = 4

MAGIC = b"TZSK"
VERSION = 1
_NO_PIVOT32 = 0xFFFFFFFF
_NO_DIST64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class SketchParams:
    """Identity of a sketch family; queries require equal params."""

    n: int
    k: int
    seed: int


class LevelHierarchy:
    """Exact level per vertex under geometric promotion sampling."""

    __slots__ = ("n", "k", "seed", "level")

    def __init__(self, n: int, k: int, seed: int, level: np.ndarray):
        self.n = n
        self.k = k
        self.seed = seed
        self.level = level

    def exact_level(self, v: int) -> int:
        return int(self.level[v])

    def members(self, i: int) -> list[int]:
        """Vertices with level >= i, ascending; empty list for i >= k."""
        if i >= self.k:
            return []
        return [int(v) for v in np.flatnonzero(self.level >= i)]

    def level_counts(self) -> list[int]:
        return [len(self.members(i)) for i in range(self.k)]

    def params(self) -> SketchParams:
        return SketchParams(self.n, self.k, self.seed)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, LevelHierarchy) and other.n == self.n
                and other.k == self.k and other.seed == self.seed
                and bool(np.array_equal(other.level, self.level)))


def max_levels(n: int) -> int:
    """Largest admissible level count for an n-vertex graph."""
    return max(1, math.ceil(math.log2(n)) + 1) if n > 1 else 1


def sample_hierarchy(n: int, k: int, seed: int) -> LevelHierarchy:
    """Sample exact levels: promote past level i with probability n^(-1/k).

    Vertices are processed in ascending id order; each consumes one draw per
    promotion attempt and stops at its first failure, so a vertex's draws
    never depend on later vertices.
    """
    if n < 1:
        raise ValueError("hierarchy needs at least one vertex")
    if not (1 <= k <= max_levels(n)):
        raise ValueError(f"level count must satisfy 1 <= k <= "
                         f"{max_levels(n)} for n={n}, got {k}")
    rng = random.Random(seed)
    p = n ** (-1.0 / k)
    level = np.zeros(n, dtype=np.int64)
    for v in range(n):
        lvl = 0
        for i in range(1, k):
            if rng.random() < p:
                lvl = i
            else:
                break
        level[v] = lvl
    return LevelHierarchy(n, k, seed, level)


class VertexSketch:
    """One vertex's pivot table and bunch."""

    __slots__ = ("owner", "params", "pivots", "bunch")

    def __init__(self, owner: int, params: SketchParams,
                 pivots: tuple[tuple[int | None, int], ...],
                 bunch: dict[int, tuple[int, int]]):
        self.owner = owner
        self.params = params
        self.pivots = pivots          # per level: (pivot id or None, dist)
        self.bunch = bunch            # w -> (exact level of w, dist)

    def bunch_slice(self, i: int) -> dict[int, int]:
        """Members of the bunch whose exact level is ``i`` (w -> dist)."""
        return {w: d for w, (lvl, d) in self.bunch.items() if lvl == i}

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, VertexSketch) and other.owner == self.owner
                and other.params == self.params
                and other.pivots == self.pivots and other.bunch == self.bunch)

    def __repr__(self) -> str:
        return (f"VertexSketch(owner={self.owner}, k={self.params.k}, "
                f"|bunch|={len(self.bunch)})")


class SketchSet:
    """All vertices' sketches for one graph/hierarchy."""

    __slots__ = ("params", "sketches")

    def __init__(self, params: SketchParams, sketches: list[VertexSketch]):
        self.params = params
        self.sketches = sketches

    def __getitem__(self, v: int) -> VertexSketch:
        return self.sketches[v]

    def __len__(self) -> int:
        return len(self.sketches)

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, SketchSet) and other.params == self.params
                and other.sketches == self.sketches)


# -- building --------------------------------------------------------------


def level_distances(g: Graph, hier: LevelHierarchy, hop_limit: int | None = None
                    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per level j: distance to the level-j set and the lex-min pivot.

    Level 0 contains every vertex, so ``dist[0] == 0`` and each vertex is its
    own pivot.  Empty levels yield all ``-1`` arrays.  With ``hop_limit`` the
    exploration is a synchronous relaxation capped at that many hops
    (matching the distributed executors); callers must pass a limit at least
    the graph's shortest-path hop diameter to get exact values.
    """
    n = g.n
    dists: list[np.ndarray] = []
    pivs: list[np.ndarray] = []
    dists.append(np.zeros(n, dtype=np.int64))
    pivs.append(np.arange(n, dtype=np.int64))
    for j in range(1, hier.k):
        members = hier.members(j)
        if not members:
            dists.append(np.full(n, -1, dtype=np.int64))
            pivs.append(np.full(n, -1, dtype=np.int64))
            continue
        init_v = np.array(members, dtype=np.int64)
        init_d = np.zeros(len(members), dtype=np.int64)
        init_o = init_v.copy()
        if hop_limit is None:
            d, o = kernels.dijkstra_lex(g.indptr, g.nbr, g.wgt, init_v,
                                        init_d, init_o, -1)
        else:
            d, o, _ = kernels.bellman_ford(g.indptr, g.nbr, g.wgt, init_v,
                                           init_d, init_o, hop_limit, -1,
                                           None)
        dists.append(d)
        pivs.append(o)
    return dists, pivs


def _next_level_threshold(dists: list[np.ndarray], j: int, n: int
                          ) -> np.ndarray:
    """d(v, level j+1) as an admission threshold; unreachable/absent -> INF."""
    if j + 1 >= len(dists):
        return np.full(n, INF, dtype=np.int64)
    thr = dists[j + 1].copy()
    thr[thr < 0] = INF
    return thr


def build_bunches(g: Graph, hier: LevelHierarchy, dists: list[np.ndarray],
                  hop_limit: int | None = None) -> list[dict[int, tuple[int, int]]]:
    """Invert per-center balls into per-vertex bunches.

    The ball of center ``w`` at exact level ``i`` holds every ``v`` with
    ``d(v, w) < d(v, level i+1)``; ``w`` then appears in ``v``'s bunch with
    its exact level and the distance.
    """
    n = g.n
    bunches: list[dict[int, tuple[int, int]]] = [dict() for _ in range(n)]
    thr_cache: dict[int, np.ndarray] = {}
    for w in range(n):
        i = hier.exact_level(w)
        if i not in thr_cache:
            thr_cache[i] = _next_level_threshold(dists, i, n)
        thr = thr_cache[i]
        if hop_limit is None:
            vs, ds = kernels.cluster_dijkstra(g.indptr, g.nbr, g.wgt, w, thr)
        else:
            init_v = np.array([w], dtype=np.int64)
            init_d = np.zeros(1, dtype=np.int64)
            d, _, _ = kernels.bellman_ford(g.indptr, g.nbr, g.wgt, init_v,
                                           init_d, None, hop_limit, -1, thr)
            vs = np.flatnonzero(d >= 0).astype(np.int64)
            ds = d[vs]
        for v, dv in zip(vs.tolist(), ds.tolist()):
            bunches[v][w] = (i, dv)
    return bunches


def assemble_sketches(params: SketchParams, hier: LevelHierarchy,
                      dists: list[np.ndarray], pivs: list[np.ndarray],
                      bunches: list[dict[int, tuple[int, int]]]) -> SketchSet:
    """Shared final assembly: pivot monotonicity plus object construction.

    When a vertex's distance to level ``j`` equals its distance to level
    ``j-1``, the level-``j-1`` pivot is reused so pivot choices are
    monotone along levels.
    """
    n = params.n
    k = params.k
    out: list[VertexSketch] = []
    for v in range(n):
        pv: list[tuple[int | None, int]] = []
        for j in range(k):
            d = int(dists[j][v])
            if d < 0:
                pv.append((None, INF))
            else:
                p = int(pivs[j][v])
                if j > 0 and pv[j - 1][0] is not None and d == pv[j - 1][1]:
                    p = pv[j - 1][0]  # type: ignore[assignment]
                pv.append((p, d))
        out.append(VertexSketch(v, params, tuple(pv), dict(bunches[v])))
    return SketchSet(params, out)


def build_sketches(g: Graph, hier: LevelHierarchy,
                   hop_limit: int | None = None) -> SketchSet:
    """Build every vertex's sketch on a connected graph."""
    g.require_connected()
    dists, pivs = level_distances(g, hier, hop_limit)
    bunches = build_bunches(g, hier, dists, hop_limit)
    return assemble_sketches(hier.params(), hier, dists, pivs, bunches)


# -- querying --------------------------------------------------------------


def query(su: VertexSketch, sv: VertexSketch) -> int:
    """Approximate distance between the two owners from sketches alone.

    Scans levels from 0 upward; at level ``j`` it tries each side's pivot
    against the other side's bunch, restricted to entries still closer than
    the next-level pivot.  The first hit is returned, and the scan order
    makes the value symmetric in its arguments (the smaller owner id always
    plays the same role).
    """
    if su.params != sv.params:
        raise SketchMismatch(f"sketch families differ: {su.params} vs "
                             f"{sv.params}")
    a, b = (su, sv) if su.owner <= sv.owner else (sv, su)
    k = a.params.k
    for j in range(k):
        for x, y in ((a, b), (b, a)):
            w, dw = x.pivots[j]
            if w is None:
                continue
            ent = y.bunch.get(w)
            if ent is None:
                continue
            nxt = y.pivots[j + 1][1] if j + 1 < k else INF
            if ent[1] < nxt:
                return dw + ent[1]
    raise Disconnected(f"no common bunch member for vertices {su.owner} "
                       f"and {sv.owner}")


# -- serialization ---------------------------------------------------------


def serialize_sketches(ss: SketchSet) -> bytes:
    """Binary wire format, little-endian, stable across executors."""
    p = ss.params
    parts = [MAGIC, struct.pack("<HIHQ", VERSION, p.n, p.k, p.seed)]
    for sk in ss.sketches:
        for pid, d in sk.pivots:
            parts.append(struct.pack(
                "<IQ",
                _NO_PIVOT32 if pid is None else pid,
                _NO_DIST64 if d >= INF else d))
        parts.append(struct.pack("<I", len(sk.bunch)))
        for w in sorted(sk.bunch):
            lvl, d = sk.bunch[w]
            parts.append(struct.pack("<IBQ", w, lvl, d))
    return b"".join(parts)


def deserialize_sketches(data: bytes) -> SketchSet:
    if data[:4] != MAGIC:
        raise ValueError("bad magic; not a sketch file")
    off = 4
    ver, n, k, seed = struct.unpack_from("<HIHQ", data, off)
    off += struct.calcsize("<HIHQ")
    if ver != VERSION:
        raise ValueError(f"unsupported sketch format version {ver}")
    params = SketchParams(n, k, seed)
    sketches: list[VertexSketch] = []
    for v in range(n):
        pivots: list[tuple[int | None, int]] = []
        for _ in range(k):
            pid, d = struct.unpack_from("<IQ", data, off)
            off += struct.calcsize("<IQ")
            pivots.append((None if pid == _NO_PIVOT32 else pid,
                           INF if d == _NO_DIST64 else d))
        (bcount,) = struct.unpack_from("<I", data, off)
        off += 4
        bunch: dict[int, tuple[int, int]] = {}
        for _ in range(bcount):
            w, lvl, d = struct.unpack_from("<IBQ", data, off)
            off += struct.calcsize("<IBQ")
            bunch[w] = (lvl, d)
        sketches.append(VertexSketch(v, params, tuple(pivots), bunch))
    if off != len(data):
        raise ValueError("trailing bytes after sketch data")
    return SketchSet(params, sketches)


# -- word encoding for simulated message payloads ---------------------------


def sketch_to_words(sk: VertexSketch) -> list[int]:
    """Flatten one sketch to machine words: header, pivot table, bunch."""
    words = [sk.owner, len(sk.bunch)]
    for pid, d in sk.pivots:
        words.append(INF if pid is None else pid)
        words.append(d)
    for w in sorted(sk.bunch):
        lvl, d = sk.bunch[w]
        words.extend((w, lvl, d))
    return words


def sketch_from_words(words: list[int], params: SketchParams) -> VertexSketch:
    owner = words[0]
    bcount = words[1]
    k = params.k
    pivots: list[tuple[int | None, int]] = []
    for j in range(k):
        pid = words[2 + 2 * j]
        d = words[3 + 2 * j]
        pivots.append((None if pid >= INF else pid, d))
    bunch: dict[int, tuple[int, int]] = {}
    base = 2 + 2 * k
    for i in range(bcount):
        w, lvl, d = words[base + 3 * i:base + 3 * i + 3]
        bunch[w] = (lvl, d)
    return VertexSketch(owner, params, tuple(pivots), bunch)


def sketch_word_count(sk: VertexSketch) -> int:
    return 2 + 2 * sk.params.k + 3 * len(sk.bunch)


# -- size accounting ---------------------------------------------------------


def bunch_size_bound(n: int, k: int, c: float = C_B) -> float:
    """Budget ``c * k * n^(1/k) * ln n`` for per-vertex bunch sizes."""
    return c * k * n ** (1.0 / k) * math.log(max(n, 2))


def sketch_size_report(ss: SketchSet, c: float = C_B) -> dict:
    """Bunch-size statistics plus any vertices over the size budget."""
    p = ss.params
    sizes = [len(sk.bunch) for sk in ss.sketches]
    bound = bunch_size_bound(p.n, p.k, c)
    violations = [v for v, s in enumerate(sizes) if s > bound]
    return {
        "n": p.n,
        "k": p.k,
        "max_bunch": max(sizes) if sizes else 0,
        "mean_bunch": (sum(sizes) / len(sizes)) if sizes else 0.0,
        "total_entries": sum(sizes),
        "bound": bound,
        "violations": violations,
    }
