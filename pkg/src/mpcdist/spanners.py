"""Multiplicative (2t-1)-spanners via randomized cluster growing.

The construction runs ``t - 1`` synchronous clustering iterations followed by
a final joining step.  Each iteration samples surviving clusters
geometrically; an unsampled vertex either retires (keeping one minimum edge
per neighboring cluster) or joins its nearest sampled cluster (keeping the
join edge plus one minimum edge per strictly closer cluster).  All per-vertex
decisions inside an iteration read the same snapshot, which is what the
message-passing executors naturally compute, so every executor reproduces the
same edge set from the same seed.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

from .graphs import Graph

# Multiplier in the size budget C_SP * t * n^(1+1/t) * ln n.
C_SP = 6


def vertex_phase_decision(
    options: list[tuple[int, int, int]],
    sampled: set[int],
) -> tuple[list[tuple[int, int, int]], int | None]:
    """Decide one unsampled vertex's iteration outcome from its snapshot.

    ``options`` holds one entry per neighboring cluster: ``(center, min
    weight, neighbor attaining it)``, where the per-cluster minimum is taken
    by ``(weight, neighbor id)``.  Returns ``(edges to keep, new center)``;
    a ``None`` center means the vertex retires from clustering.  Keeping an
    edge always implies dropping every other edge into that cluster.
    """
    sampled_opts = [(w, c, u) for (c, w, u) in options if c in sampled]
    if not sampled_opts:
        keep = [(c, u, w) for (c, w, u) in sorted(options)]
        return keep, None
    w0, c0, u0 = min(sampled_opts)
    keep = [(c0, u0, w0)]
    for c, w, u in sorted(options):
        if c != c0 and w < w0:
            keep.append((c, u, w))
    return keep, c0


def build_spanner(g: Graph, t: int, seed: int) -> Graph:
    """Subgraph preserving all distances within a factor ``2t - 1``."""
    if t < 1:
        raise ValueError("stretch parameter t must be >= 1")
    if t == 1 or g.m <= max(0, g.n - 1):
        return Graph(g.n, g.edges)
    n = g.n
    rng = random.Random(seed)
    p = n ** (-1.0 / t)
    alive: dict[int, dict[int, int]] = {v: {} for v in range(n)}
    for u, v, w in g.edges:
        alive[u][v] = w
        alive[v][u] = w
    center = {v: v for v in range(n)}
    spanner: list[tuple[int, int, int]] = []

    def drop(u: int, v: int) -> None:
        alive[u].pop(v, None)
        alive[v].pop(u, None)

    for _ in range(t - 1):
        prev_centers = sorted(set(center.values()))
        sampled = {c for c in prev_centers if rng.random() < p}
        removals: list[tuple[int, int]] = []
        joins: dict[int, int] = {}
        retirees: list[int] = []
        for v in range(n):
            if v not in center:
                continue
            # intra-cluster edges carry no information forward
            for u in list(alive[v]):
                if center.get(u) == center[v]:
                    removals.append((v, u))
            if center[v] in sampled:
                continue
            best: dict[int, tuple[int, int]] = {}
            for u, w in alive[v].items():
                c = center.get(u)
                if c is None or c == center[v]:
                    continue
                cur = best.get(c)
                if cur is None or (w, u) < cur:
                    best[c] = (w, u)
            options = [(c, w, u) for c, (w, u) in best.items()]
            keep, new_center = vertex_phase_decision(options, sampled)
            for c, u, w in keep:
                spanner.append((min(v, u), max(v, u), w))
                for x in list(alive[v]):
                    if center.get(x) == c:
                        removals.append((v, x))
            if new_center is None:
                retirees.append(v)
                for u in list(alive[v]):
                    removals.append((v, u))
            else:
                joins[v] = new_center
        for u, v in removals:
            drop(u, v)
        for v in retirees:
            del center[v]
        center.update(joins)
        if len(set(center.values())) <= 1:
            break

    # final joining: one minimum edge per vertex/neighboring-cluster pair
    for v in range(n):
        best: dict[int, tuple[int, int]] = {}
        for u, w in alive[v].items():
            c = center.get(u)
            if c is None or c == center.get(v):
                continue
            cur = best.get(c)
            if cur is None or (w, u) < cur:
                best[c] = (w, u)
        for c in sorted(best):
            w, u = best[c]
            spanner.append((min(v, u), max(v, u), w))
    return Graph(n, spanner)


def spanner_size_bound(n: int, t: int, c: float = C_SP) -> float:
    """Edge budget ``c * t * n^(1 + 1/t) * ln n``."""
    return c * t * n ** (1.0 + 1.0 / t) * math.log(max(n, 2))


def verify_spanner(g: Graph, s: Graph, t: int) -> dict:
    """Check subgraph containment and the per-edge stretch bound exactly.

    Returns a report with the exact worst ratio (as a ``Fraction``) of
    spanner distance to edge weight over all graph edges, plus any violating
    edges.  Valid spanners satisfy ``max_ratio <= 2t - 1``.
    """
    report: dict = {
        "ok": True,
        "max_ratio": Fraction(0),
        "violations": [],
        "edges": s.m,
        "bound_edges": spanner_size_bound(g.n, t),
    }
    if s.n != g.n:
        report["ok"] = False
        report["violations"].append(("vertex-count", s.n, g.n))
        return report
    gw = {(u, v): w for u, v, w in g.edges}
    for u, v, w in s.edges:
        if gw.get((u, v)) != w:
            report["ok"] = False
            report["violations"].append(("foreign-edge", u, v))
    limit = 2 * t - 1
    by_src: dict[int, list[tuple[int, int]]] = {}
    for u, v, w in g.edges:
        by_src.setdefault(u, []).append((v, w))
    for u in sorted(by_src):
        dist = s.sssp(u)
        for v, w in by_src[u]:
            d = int(dist[v])
            if d < 0:
                report["ok"] = False
                report["violations"].append(("disconnected-pair", u, v))
                continue
            ratio = Fraction(d, w)
            if ratio > report["max_ratio"]:
                report["max_ratio"] = ratio
            if ratio > limit:
                report["ok"] = False
                report["violations"].append(("stretch", u, v))
    return report
