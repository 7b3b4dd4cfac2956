"""Hop-reducing shortcut edges ("hopsets") via scale-by-scale clustering.

For each distance scale ``2^s`` the builder runs a fixed schedule of phases.
A phase samples cluster centers geometrically, grows bounded joint
explorations from the sampled centers to absorb nearby clusters (adding a
shortcut from each absorbed center to its root), and lets every surviving
center run a half-radius exploration that shortcuts it to any other center
it can see.  Shortcut weights are exact distances in the current working
graph, so the union never shortens true distances; the schedule's growing
radii make long paths coverable in few hops.

The phase driver is engine-agnostic: an engine only answers bounded
exploration queries over "base graph plus shortcut edges so far".  The
sequential engine below runs them on the kernels; the MPC and clique
executors plug in engines that run the same queries inside their simulations
and therefore produce identical edge sets.
"""

from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from . import kernels
from .errors import Overflow, OverlapBudgetExceeded
from .graphs import Graph, derive

# Hopset size budget multiplier: C_H * n^(1+1/kappa) * ln n.
C_H = 8
_BETA_LIMIT = 1 << 40


def _ceil_frac(fr: Fraction) -> int:
    return -((-fr.numerator) // fr.denominator)


def _ceil_log2_frac(fr: Fraction) -> int:
    """Smallest integer a with 2^a >= fr (fr >= 1)."""
    a = 0
    while Fraction(2) ** a < fr:
        a += 1
    return a


@dataclass(frozen=True)
class HopsetParams:
    """Knobs for the hopset construction.

    ``kappa`` trades size against the hop bound; ``rho`` in ``[1/kappa,
    1/2]`` controls sampling density; ``eps`` is the distance slack.  The
    remaining fields are engineering constants: the hop-bound multiplier,
    the per-phase exploration-overlap budget multiplier, and the retry
    budget for reseeding a scale whose overlap budget was exceeded.
    """

    kappa: int
    rho: Fraction
    eps: Fraction
    c_beta: int = 1
    c_overlap: int = 4
    retries: int = 5

    def __post_init__(self):
        if self.kappa < 2:
            raise ValueError("kappa must be >= 2")
        rho = Fraction(self.rho)
        if not (Fraction(1, self.kappa) <= rho <= Fraction(1, 2)):
            raise ValueError("rho must lie in [1/kappa, 1/2]")
        eps = Fraction(self.eps)
        if eps <= 0:
            raise ValueError("eps must be positive")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "eps", eps)
        if self.c_beta < 1:
            raise ValueError("c_beta must be >= 1")
        if self.retries < 1:
            raise ValueError("retries must be >= 1")

    def check_size_regime(self, n: int) -> None:
        """Warn when kappa is large for n (size bounds degrade gracefully)."""
        if n >= 2 and self.kappa > math.log2(n) / 4:
            warnings.warn(
                f"kappa={self.kappa} exceeds log2({n})/4; size bounds may "
                "be loose", stacklevel=2)


def hopbound(n: int, params: HopsetParams) -> int:
    """Hop budget beta, evaluated in 50-digit decimal arithmetic.

    ``beta = ceil(c_beta * ((ln n / eps) * (log2 kappa + 1/rho)) ** e)``
    with integer exponent ``e = ceil(log2 kappa) + ceil(1/rho)``.
    """
    if n < 2:
        return 1
    with localcontext() as ctx:
        ctx.prec = 50
        ln_n = Decimal(n).ln()
        eps = Decimal(params.eps.numerator) / Decimal(params.eps.denominator)
        log2_kappa = Decimal(params.kappa).ln() / Decimal(2).ln()
        inv_rho = (Decimal(params.rho.denominator)
                   / Decimal(params.rho.numerator))
        exponent = (_ceil_log2_frac(Fraction(params.kappa))
                    + _ceil_frac(1 / params.rho))
        base = (ln_n / eps) * (log2_kappa + inv_rho)
        value = Decimal(params.c_beta) * base ** exponent
        beta = int(value.to_integral_value(rounding="ROUND_CEILING"))
    if beta > _BETA_LIMIT:
        raise Overflow(f"hop budget {beta} exceeds 2^40")
    return max(beta, 1)


@dataclass(frozen=True)
class PhaseSpec:
    """Resolved parameters for one phase at one scale."""

    index: int            # 1-based phase number
    final: bool           # last phase: no sampling, everyone interconnects
    delta: int            # joint exploration radius
    radius: int           # survivor exploration radius, ceil(delta / 2)
    carry: int            # accumulated radius from earlier phases
    deg: float            # sampling density n^min(2^i/kappa, rho)
    sample_prob: float    # 1 / deg
    overlap_budget: int   # max survivor explorations touching one vertex


def phase_count(params: HopsetParams) -> int:
    kr = Fraction(params.kappa) * params.rho
    return _ceil_log2_frac(kr) + _ceil_frac(2 / params.rho) + 1


def phase_schedule(n: int, params: HopsetParams, scale: int
                   ) -> list[PhaseSpec]:
    """Exact integer radii for each phase of one scale.

    Radii grow geometrically toward ``2^(scale+1)`` with slack ``eps/3``,
    plus four times the accumulated radius so far (which keeps absorbed
    clusters coverable); the carry telescopes exactly in integers.
    """
    ell = phase_count(params)
    eps_sched = params.eps / 3
    ln_n = math.log(max(n, 2))
    phases: list[PhaseSpec] = []
    carry = 0
    for i in range(1, ell + 1):
        target = (eps_sched ** (ell - i)) * Fraction(2 ** (scale + 1))
        delta = _ceil_frac(target) + 4 * carry
        exp = min(Fraction(2 ** i, params.kappa), params.rho)
        deg = float(max(n, 2)) ** float(exp)
        phases.append(PhaseSpec(
            index=i,
            final=(i == ell),
            delta=delta,
            radius=(delta + 1) // 2,
            carry=carry,
            deg=deg,
            sample_prob=1.0 / deg,
            overlap_budget=math.ceil(params.c_overlap * deg * ln_n),
        ))
        carry += delta
    return phases


def scale_range(g: Graph, beta: int) -> list[int]:
    """Distance scales worth processing for this graph.

    Scales run from ``ceil(log2 beta)`` (shorter distances need no
    shortcuts: unit-minimum weights give them short paths already) up to the
    largest possible distance, dropping any scale whose band ``(2^(s-1),
    2^s]`` provably contains no finite distance (via a cheap diameter upper
    bound, exact for small graphs).
    """
    if g.n < 2 or g.m == 0:
        return []
    lo = max(0, math.ceil(math.log2(beta))) if beta > 1 else 0
    hi = math.ceil(math.log2(g.n * g.w_max))
    ecc_bound = g.diameter() if g.n <= 512 else g.diameter_upper_bound()
    if ecc_bound <= 0:
        return []
    return [s for s in range(lo, hi + 1) if 2 ** s < 2 * ecc_bound]


@dataclass(frozen=True)
class HopsetEdge:
    u: int
    v: int
    w: int
    scale: int
    phase: int
    kind: str  # "super" (absorption shortcut) or "inter" (survivor link)


class SequentialEngine:
    """Answers bounded exploration queries with the graph kernels."""

    def __init__(self, g: Graph):
        self.base = g
        self._cache_edges: list[tuple[int, int, int]] | None = None
        self._cache_graph: Graph | None = None

    def _graph(self, extra: list[tuple[int, int, int]]) -> Graph:
        if self._cache_graph is None or self._cache_edges != extra:
            self._cache_graph = self.base.union_edges(extra)
            self._cache_edges = list(extra)
        return self._cache_graph

    def joint_explore(self, extra, sources, hop_cap, limit):
        """Multi-source lex exploration; returns (dist, origin)."""
        gg = self._graph(extra)
        init_v = np.array(sources, dtype=np.int64)
        init_d = np.zeros(len(sources), dtype=np.int64)
        dist, origin, _ = kernels.bellman_ford(
            gg.indptr, gg.nbr, gg.wgt, init_v, init_d, init_v.copy(),
            hop_cap, limit, None)
        return dist, origin

    def per_source_explore(self, extra, sources, hop_cap, limit, budget=-1):
        """Independent bounded exploration per source; list of dist arrays.

        ``budget`` caps how many explorations may touch one vertex.  This
        engine ignores it (the caller polices overlap from the returned
        arrays); engines with per-vertex state enforce it in flight.
        """
        gg = self._graph(extra)
        out = []
        for c in sources:
            init_v = np.array([c], dtype=np.int64)
            init_d = np.zeros(1, dtype=np.int64)
            dist, _, _ = kernels.bellman_ford(
                gg.indptr, gg.nbr, gg.wgt, init_v, init_d, None,
                hop_cap, limit, None)
            out.append(dist)
        return out


class HopsetResult:
    """Edges plus build observability (per-scale retries, phase stats)."""

    def __init__(self, params: HopsetParams, beta: int, seed: int,
                 scales: list[int]):
        self.params = params
        self.beta = beta
        self.seed = seed
        self.scales = scales
        self.edges: list[HopsetEdge] = []
        self.attempts: dict[int, int] = {}
        self.phase_log: list[dict] = []

    def edge_tuples(self) -> list[tuple[int, int, int]]:
        return [(e.u, e.v, e.w) for e in self.edges]

    def unique_pairs(self) -> int:
        return len({(e.u, e.v) for e in self.edges})

    def union_graph(self, g: Graph) -> Graph:
        return g.union_edges(self.edge_tuples())

    def total_retries(self) -> int:
        return sum(a - 1 for a in self.attempts.values())

    def overlap_histogram(self) -> dict[tuple[int, int], int]:
        """Max survivor-exploration overlap per (scale, phase)."""
        return {(rec["scale"], rec["phase"]): rec["max_overlap"]
                for rec in self.phase_log}


def hopset_size_bound(n: int, kappa: int, c: float = C_H) -> float:
    return c * n ** (1.0 + 1.0 / kappa) * math.log(max(n, 2))


def _run_scale(n: int, params: HopsetParams, beta: int, scale: int,
               rng_seed: int, engine, committed: list[tuple[int, int, int]],
               ) -> tuple[list[HopsetEdge], list[dict]]:
    """One attempt at one scale; raises OverlapBudgetExceeded on blowup."""
    hop_cap = 2 * beta + 1
    rep = list(range(n))  # cluster representative per vertex
    scale_edges: list[HopsetEdge] = []
    scale_tuples: list[tuple[int, int, int]] = []
    log: list[dict] = []
    for spec in phase_schedule(n, params, scale):
        centers = sorted(set(rep))
        if len(centers) <= 1:
            break
        rng = random.Random(derive(rng_seed, spec.index))
        if spec.final:
            sampled: set[int] = set()
        else:
            sampled = {c for c in centers if rng.random() < spec.sample_prob}
        snapshot = committed + scale_tuples
        super_edges: list[HopsetEdge] = []
        absorbed: dict[int, int] = {}
        if sampled:
            dist, origin = engine.joint_explore(
                snapshot, sorted(sampled), hop_cap, spec.delta)
            for c in centers:
                if c in sampled or dist[c] < 0:
                    continue
                root = int(origin[c])
                absorbed[c] = root
                u, v = (c, root) if c < root else (root, c)
                super_edges.append(HopsetEdge(u, v, int(dist[c]), scale,
                                              spec.index, "super"))
        scale_edges.extend(super_edges)
        scale_tuples.extend((e.u, e.v, e.w) for e in super_edges)
        survivors = [c for c in centers
                     if c not in sampled and c not in absorbed]
        inter_best: dict[tuple[int, int], int] = {}
        max_overlap = 0
        if survivors and len(centers) > 1:
            snapshot = committed + scale_tuples
            touch = np.zeros(n, dtype=np.int64)
            center_set = set(centers)
            dists = engine.per_source_explore(snapshot, survivors, hop_cap,
                                              spec.radius,
                                              budget=spec.overlap_budget)
            for c, dist in zip(survivors, dists):
                reached = np.flatnonzero(dist >= 0)
                touch[reached] += 1
                over = np.flatnonzero(touch > spec.overlap_budget)
                if over.size:
                    v = int(over[0])
                    raise OverlapBudgetExceeded(v, int(touch[v]),
                                                spec.overlap_budget)
                for t in reached.tolist():
                    if t != c and t in center_set:
                        key = (c, t) if c < t else (t, c)
                        w = int(dist[t])
                        old = inter_best.get(key)
                        if old is None or w < old:
                            inter_best[key] = w
            max_overlap = int(touch.max()) if touch.size else 0
        inter_edges = [HopsetEdge(u, v, w, scale, spec.index, "inter")
                       for (u, v), w in sorted(inter_best.items())]
        scale_edges.extend(inter_edges)
        scale_tuples.extend((e.u, e.v, e.w) for e in inter_edges)
        for v in range(n):
            if rep[v] in absorbed:
                rep[v] = absorbed[rep[v]]
        log.append({
            "scale": scale,
            "phase": spec.index,
            "centers": len(centers),
            "sampled": len(sampled),
            "absorbed": len(absorbed),
            "survivors": len(survivors),
            "super_edges": len(super_edges),
            "inter_edges": len(inter_edges),
            "max_overlap": max_overlap,
            "clusters_after": len(set(rep)),
        })
    return scale_edges, log


def run_hopset_phases(n: int, params: HopsetParams, beta: int, seed: int,
                      engine, scales: list[int]) -> HopsetResult:
    """Engine-agnostic driver shared by every executor."""
    result = HopsetResult(params, beta, seed, scales)
    committed: list[tuple[int, int, int]] = []
    for scale in scales:
        last_err: OverlapBudgetExceeded | None = None
        for attempt in range(params.retries):
            rng_seed = derive(derive(seed, scale), attempt)
            try:
                edges, log = _run_scale(n, params, beta, scale, rng_seed,
                                        engine, committed)
            except OverlapBudgetExceeded as err:
                last_err = err
                continue
            result.attempts[scale] = attempt + 1
            result.edges.extend(edges)
            result.phase_log.extend(log)
            committed.extend((e.u, e.v, e.w) for e in edges)
            break
        else:
            assert last_err is not None
            raise last_err
    return result


def build_hopset(g: Graph, params: HopsetParams, seed: int) -> HopsetResult:
    """Sequential construction over all relevant scales."""
    params.check_size_regime(g.n)
    beta = hopbound(g.n, params)
    scales = scale_range(g, beta)
    engine = SequentialEngine(g)
    return run_hopset_phases(g.n, params, beta, seed, engine, scales)


# -- verification and dumping ------------------------------------------------


def verify_hopset(g: Graph, edges: list[tuple[int, int, int]], beta: int,
                  eps: Fraction, pairs: list[tuple[int, int]] | None = None
                  ) -> dict:
    """Check both hopset inequalities, naming any violating pairs.

    Shortcut soundness: adding the edges must not shorten any distance.
    Hop adequacy: within ``beta`` hops in the union, every checked pair must
    reach ``(1 + eps) * d``.  ``pairs=None`` checks all pairs.
    """
    union = g.union_edges(edges)
    eps = Fraction(eps)
    report: dict = {"ok": True, "max_ratio": Fraction(0),
                    "shortcut_violations": [], "hop_violations": [],
                    "edges": len({(u, v) for u, v, _ in edges})}
    if pairs is None:
        sources = range(g.n)
        want = None
    else:
        by_src: dict[int, list[int]] = {}
        for u, v in pairs:
            by_src.setdefault(u, []).append(v)
        sources = sorted(by_src)
        want = by_src
    for s in sources:
        base = g.sssp(s)
        exact = union.sssp(s)
        capped = union.hop_restricted_sssp(s, beta)
        targets = range(g.n) if want is None else want[s]
        for v in targets:
            if v == s:
                continue
            d = int(base[v])
            if d < 0:
                continue
            if int(exact[v]) != d:
                report["ok"] = False
                report["shortcut_violations"].append((s, v))
            dh = int(capped[v])
            if dh < 0:
                report["ok"] = False
                report["hop_violations"].append((s, v))
                continue
            ratio = Fraction(dh, d)
            if ratio > report["max_ratio"]:
                report["max_ratio"] = ratio
            if ratio > 1 + eps:
                report["ok"] = False
                report["hop_violations"].append((s, v))
    return report


def dump_hopset(result: HopsetResult) -> str:
    """One line per edge: ``u v w scale phase kind``."""
    lines = [f"{e.u} {e.v} {e.w} {e.scale} {e.phase} {e.kind}"
             for e in result.edges]
    return "\n".join(lines) + ("\n" if lines else "")
