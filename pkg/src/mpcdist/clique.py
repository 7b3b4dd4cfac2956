"""Fully connected executor: n nodes, one short message per ordered pair
per round.

Every node starts knowing only its incident edges.  A round moves at most
one message of at most ``c_w`` words between each ordered node pair —
enough for an ``(id, distance)`` pair — and breaking that budget is a hard
error, not a logged violation.  The driver orchestrates schedules, coin
flips, and convergence detection (it sees every node anyway); everything a
node acts on beyond its own edges arrives through counted messages.

Distance runs come in two disciplines.  The raw sweep fires every updated
node each round, which is exact for a single (or virtual) source and
aborts on the budget if concurrent sources collide.  The scheduled sweep
serializes sources — one source's whole frontier advances per round, slots
ordered by source id modulo the window — so each firing is one synchronous
sweep of that source and hop-capped values match the reference kernels
under any interleaving; rounds whose slot has no pending work are skipped
by the scheduler rather than charged.

The oracle builder mirrors the staged construction exactly (same stage
seeds, same retry policies), ships every sketch to the coordinator in
parallel chunk streams, and answers queries there with zero further
communication.  The sparsified variant grows spanner clusters natively —
tags and drops travel as one combined two-word notice per affected pair
per round — and then builds the oracle on the kept subgraph.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    BudgetViolation,
    CapExceeded,
    ConfigError,
    NotBuilt,
    OverlapBudgetExceeded,
)
from .graphs import STAGE_HIER, STAGE_HOPSET, STAGE_SPANNER, Graph, derive
from .hopsets import (
    HopsetParams,
    HopsetResult,
    hopbound,
    run_hopset_phases,
    scale_range,
)
from .mpc.bellman_ford import DistanceTable, SourceSet
from .sketches import (
    INF,
    LevelHierarchy,
    SketchSet,
    assemble_sketches,
    bunch_size_bound,
    query as sketch_query,
    sample_hierarchy,
    sketch_from_words,
    sketch_to_words,
)
from .spanners import vertex_phase_decision

# Empirical ceiling for direct preprocessing traffic:
# messages <= C_MSG * beta * m * k * n^(1/k) * ln n.
C_MSG = 8


@dataclass(frozen=True)
class CliqueConfig:
    """Node count, per-message word budget, coordinator, and seed."""

    n: int
    c_w: int = 2
    coordinator: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("need at least one node")
        if self.c_w < 2:
            raise ConfigError("messages must fit an (id, distance) pair")
        if not (0 <= self.coordinator < self.n):
            raise ConfigError("coordinator must be a node")


@dataclass(frozen=True)
class CliqueMetrics:
    rounds: int
    messages: int
    phases: tuple


class Clique:
    """The all-to-all executor: budget enforcement plus counters."""

    def __init__(self, g: Graph, config: CliqueConfig | None = None):
        if config is None:
            config = CliqueConfig(n=g.n)
        if config.n != g.n:
            raise ConfigError(f"config is for {config.n} nodes, graph has "
                              f"{g.n}")
        self.graph = g
        self.config = config
        self.base_adj: list[dict[int, int]] = [dict() for _ in range(g.n)]
        for u, v, w in g.edges:
            self.base_adj[u][v] = w
            self.base_adj[v][u] = w
        self.rounds = 0
        self.messages = 0
        self.words = 0
        self._phases: list[dict] = []
        self._label_stack: list[str] = ["setup"]
        self.oracle: "CliqueOracle | None" = None

    # -- accounting -----------------------------------------------------

    @contextmanager
    def phase(self, label: str):
        self._label_stack.append(label)
        try:
            yield
        finally:
            self._label_stack.pop()

    def _attribute(self, rounds: int, messages: int, words: int) -> None:
        label = self._label_stack[-1]
        if self._phases and self._phases[-1]["label"] == label:
            rec = self._phases[-1]
        else:
            rec = {"label": label, "rounds": 0, "messages": 0, "words": 0}
            self._phases.append(rec)
        rec["rounds"] += rounds
        rec["messages"] += messages
        rec["words"] += words

    def exchange(self, sends: list[tuple[int, int, list[int]]]
                 ) -> dict[int, list[tuple[int, list[int]]]]:
        """Run one round; at most one message of <= c_w words per pair."""
        n = self.config.n
        seen: set[tuple[int, int]] = set()
        inbox: dict[int, list[tuple[int, list[int]]]] = {}
        for src, dst, payload in sends:
            if not (0 <= src < n and 0 <= dst < n) or src == dst:
                raise ConfigError(f"bad message endpoints {src}->{dst}")
            if len(payload) > self.config.c_w:
                raise BudgetViolation(
                    f"{len(payload)} words from {src} to {dst} exceed "
                    f"c_w={self.config.c_w}")
            pair = (src, dst)
            if pair in seen:
                raise BudgetViolation(
                    f"two messages for pair {src}->{dst} in one round")
            seen.add(pair)
            inbox.setdefault(dst, []).append((src, list(payload)))
            self.messages += 1
            self.words += len(payload)
        self.rounds += 1
        self._attribute(1, len(sends), sum(len(p) for _, _, p in sends))
        for dst in inbox:
            inbox[dst].sort(key=lambda t: t[0])
        return inbox

    def metrics(self) -> CliqueMetrics:
        return CliqueMetrics(
            rounds=self.rounds, messages=self.messages,
            phases=tuple((p["label"], p["rounds"], p["messages"])
                         for p in self._phases))

    def metrics_dict(self) -> dict:
        return {
            "budget": "clique",
            "rounds": self.rounds,
            "phases": [{"label": p["label"], "rounds": p["rounds"]}
                       for p in self._phases],
            "messages": self.messages,
            "words": self.words,
            "max_mem": 0,
            "violations": 0,
            "violation_log": [],
        }

    def metrics_json(self) -> str:
        return json.dumps(self.metrics_dict(), indent=2)

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["label", "rounds", "messages", "words", "max_mem",
                         "violations"])
        for p in self._phases:
            writer.writerow([p["label"], p["rounds"], p["messages"],
                             p["words"], "", ""])
        writer.writerow(["TOTAL", self.rounds, self.messages, self.words,
                         0, 0])
        return buf.getvalue()


# -- distance runs ----------------------------------------------------------


def _virtual_sweep(cc: Clique, adj: list[dict[int, int]], members, h: int,
                   filt=None) -> DistanceTable:
    """Synchronous run from one zero-distance super source.

    One ``(distance, origin)`` stream means one message per pair per round;
    values after round ``r`` are exactly the best over walks of at most
    ``r`` edges from the member set.
    """
    start = cc.rounds
    state: dict[int, tuple[int, int]] = {}
    for s in sorted(set(members)):
        row = (0, s)
        if filt is None or filt(s, None, 0):
            cur = state.get(s)
            if cur is None or row < cur:
                state[s] = row
    dirty = set(state)
    executed = 0
    while dirty and executed < h:
        sends = []
        for v in sorted(dirty):
            d, o = state[v]
            for u in sorted(adj[v]):
                sends.append((v, u, [d, o]))
        if not sends:
            break
        inbox = cc.exchange(sends)
        executed += 1
        fresh: set[int] = set()
        for u, arrivals in inbox.items():
            best = state.get(u)
            for src, (d, o) in arrivals:
                cand = (d + adj[u][src], o)
                if best is not None and cand >= best:
                    continue
                if filt is not None and not filt(u, None, cand[0]):
                    continue
                best = cand
                fresh.add(u)
            if u in fresh:
                state[u] = best
        dirty = fresh
    return DistanceTable(virtual=True, entries=dict(sorted(state.items())),
                         nominal_h=h, iterations=executed,
                         rounds=cc.rounds - start, converged=not dirty)


def _raw_multi_sweep(cc: Clique, adj: list[dict[int, int]], sources, h: int,
                     filt=None, cap: int = -1) -> DistanceTable:
    """Synchronous run firing every updated (node, source) each round.

    Two sources updating one node in the same round need two messages to
    each of its neighbors, which the budget rejects — this is the plain
    unscheduled discipline, safe for a single source.
    """
    start = cc.rounds
    table: dict[int, dict[int, int]] = {}
    for s in sorted(set(sources)):
        if filt is None or filt(s, s, 0):
            table.setdefault(s, {})[s] = 0
    dirty: set[tuple[int, int]] = {(v, s) for v, row in table.items()
                                   for s in row}
    executed = 0
    while dirty and executed < h:
        sends = []
        for v, s in sorted(dirty):
            d = table[v][s]
            for u in sorted(adj[v]):
                sends.append((v, u, [s, d]))
        if not sends:
            break
        inbox = cc.exchange(sends)
        executed += 1
        fresh: set[tuple[int, int]] = set()
        for u, arrivals in inbox.items():
            row = table.setdefault(u, {})
            for src, (s, d) in arrivals:
                cand = d + adj[u][src]
                cur = row.get(s)
                if cur is not None and cand >= cur:
                    continue
                if filt is not None and not filt(u, s, cand):
                    continue
                if cur is None and cap >= 0 and len(row) >= cap:
                    raise CapExceeded(u, len(row) + 1, cap)
                row[s] = cand
                fresh.add((u, s))
            if not row:
                del table[u]
        dirty = fresh
    entries = {v: dict(sorted(row.items()))
               for v, row in sorted(table.items())}
    return DistanceTable(virtual=False, entries=entries, nominal_h=h,
                         iterations=executed, rounds=cc.rounds - start,
                         converged=not dirty)


def _scheduled_run(cc: Clique, adj: list[dict[int, int]], sources, h: int,
                   filt=None, cap: int = -1, window: int = 0
                   ) -> DistanceTable:
    """Round-robin run: one source's whole frontier advances per round.

    Slot order follows source id modulo the window (several sources in one
    slot take consecutive turns, ascending); the scheduler skips turns with
    no pending work instead of charging empty rounds.  Each turn is one
    synchronous sweep of that source, so per-source hop counts — and with
    them the ``h`` cap — behave exactly as in the reference kernels.
    """
    start = cc.rounds
    srcs = sorted(set(sources))
    if window <= 0:
        window = max(1, len(srcs))
    order = sorted(srcs, key=lambda s: (s % window, s))
    table: dict[int, dict[int, int]] = {}
    hops: dict[int, dict[int, int]] = {}
    pending: dict[int, set[int]] = {}
    for s in srcs:
        if filt is None or filt(s, s, 0):
            table.setdefault(s, {})[s] = 0
            hops.setdefault(s, {})[s] = 0
            if h > 0:
                pending.setdefault(s, set()).add(s)
    executed = 0
    truncated = False
    while any(pending.values()):
        progressed = False
        for s in order:
            frontier = pending.get(s)
            if not frontier:
                continue
            progressed = True
            sends = []
            for v in sorted(frontier):
                d = table[v][s]
                for u in sorted(adj[v]):
                    sends.append((v, u, [s, d]))
            frontier.clear()
            if not sends:
                continue
            inbox = cc.exchange(sends)
            executed += 1
            for u, arrivals in inbox.items():
                row = table.setdefault(u, {})
                hrow = hops.setdefault(u, {})
                for src, (s2, d) in arrivals:
                    cand = d + adj[u][src]
                    cur = row.get(s2)
                    if cur is not None and cand >= cur:
                        continue
                    if filt is not None and not filt(u, s2, cand):
                        continue
                    if cur is None and cap >= 0 and len(row) >= cap:
                        raise CapExceeded(u, len(row) + 1, cap)
                    row[s2] = cand
                    hop = hops[src][s2] + 1
                    hrow[s2] = hop
                    if hop < h:
                        pending.setdefault(s2, set()).add(u)
                    else:
                        truncated = True
                        pending.get(s2, set()).discard(u)
        if not progressed:
            break
    entries = {v: dict(sorted(row.items()))
               for v, row in sorted(table.items()) if row}
    return DistanceTable(virtual=False, entries=entries, nominal_h=h,
                         iterations=executed, rounds=cc.rounds - start,
                         converged=not truncated)


def clique_restricted_bf(cc: Clique, sources, h: int) -> DistanceTable:
    """Distances over at most ``h`` edges, plain synchronous discipline.

    Every updated node forwards each round; with one real source (or a
    virtual set) the budget is respected by construction, while concurrent
    real sources abort with BudgetViolation the moment their updates
    collide on a pair.
    """
    if h < 0:
        raise ConfigError("h must be >= 0")
    if isinstance(sources, int):
        sources = SourceSet.single(sources)
    with cc.phase("bf"):
        if sources.virtual:
            return _virtual_sweep(cc, cc.base_adj, sources.sources, h)
        return _raw_multi_sweep(cc, cc.base_adj, sources.sources, h,
                                cap=sources.cap)


# -- the shortcut-edge engine -------------------------------------------------


class CliqueEngine:
    """Bounded-exploration engine over the clique for the phase driver.

    Newly committed auxiliary edges are installed by telling each endpoint
    about the other (one message per direction); knowledge persists across
    retries, so replays only re-select among edges the endpoints already
    know.  Joint explorations run as one virtual stream; per-source
    explorations run scheduled with the overlap budget as the admission
    cap.
    """

    def __init__(self, cc: Clique, base: Graph):
        self.cc = cc
        self.n = base.n
        self.base_adj: list[dict[int, int]] = [dict() for _ in range(base.n)]
        for u, v, w in base.edges:
            self.base_adj[u][v] = w
            self.base_adj[v][u] = w
        self.known: set[tuple[int, int, int]] = set()
        self._active: list[tuple[int, int, int]] | None = None
        self._adj: list[dict[int, int]] | None = None

    def _install(self, fresh: list[tuple[int, int, int]]) -> None:
        queue = [(u, v, w) for u, v, w in fresh] + \
                [(v, u, w) for u, v, w in fresh]
        with self.cc.phase("install"):
            while queue:
                taken: set[tuple[int, int]] = set()
                sends = []
                rest = []
                for src, dst, w in queue:
                    if (src, dst) in taken:
                        rest.append((src, dst, w))
                        continue
                    taken.add((src, dst))
                    sends.append((src, dst, [w]))
                self.cc.exchange(sends)
                queue = rest

    def _ensure(self, extra) -> None:
        active = [tuple(e) for e in extra]
        if active == self._active:
            return
        fresh = sorted(set(active) - self.known)
        if fresh:
            self._install(fresh)
            self.known.update(fresh)
        adj = [dict(d) for d in self.base_adj]
        for u, v, w in active:
            if w < adj[u].get(v, INF):
                adj[u][v] = w
                adj[v][u] = w
        self._active = active
        self._adj = adj

    def adjacency(self) -> list[dict[int, int]]:
        assert self._adj is not None
        return self._adj

    def joint_explore(self, extra, sources, hop_cap, limit):
        self._ensure(extra)
        filt = None
        if limit >= 0:
            def filt(v, s, val, _lim=limit):
                return val <= _lim
        with self.cc.phase("hopset"):
            table = _virtual_sweep(self.cc, self._adj, sources, hop_cap,
                                   filt)
        dist = np.full(self.n, -1, dtype=np.int64)
        origin = np.full(self.n, -1, dtype=np.int64)
        for v, (d, o) in table.entries.items():
            dist[v] = d
            origin[v] = o
        return dist, origin

    def per_source_explore(self, extra, sources, hop_cap, limit, budget=-1):
        self._ensure(extra)
        filt = None
        if limit >= 0:
            def filt(v, s, val, _lim=limit):
                return val <= _lim
        try:
            with self.cc.phase("hopset"):
                table = _scheduled_run(self.cc, self._adj, sources, hop_cap,
                                       filt, cap=budget,
                                       window=max(1, budget))
        except CapExceeded as err:
            raise OverlapBudgetExceeded(err.vertex, err.count,
                                        err.cap) from err
        out = []
        for s in sources:
            dist = np.full(self.n, -1, dtype=np.int64)
            for v, row in table.entries.items():
                d = row.get(s)
                if d is not None:
                    dist[v] = d
            out.append(dist)
        return out


# -- the coordinator oracle ----------------------------------------------------


@dataclass(frozen=True)
class CliqueOracle:
    """Everything the coordinator holds after preprocessing."""

    sketches: SketchSet
    hier: LevelHierarchy
    hopset: HopsetResult | None
    spanner: Graph | None
    beta: int
    certified: Fraction
    ship_rounds: int


def _level_state(cc: Clique, adj, hier: LevelHierarchy, beta: int
                 ) -> tuple[list, list]:
    n = cc.config.n
    dists = [np.zeros(n, dtype=np.int64)]
    pivs = [np.arange(n, dtype=np.int64)]
    for j in range(1, hier.k):
        members = hier.members(j)
        dist = np.full(n, -1, dtype=np.int64)
        piv = np.full(n, -1, dtype=np.int64)
        if members:
            table = _virtual_sweep(cc, adj, members, beta)
            for v, (d, o) in table.entries.items():
                dist[v] = d
                piv[v] = o
        dists.append(dist)
        pivs.append(piv)
    return dists, pivs


def _bunch_state(cc: Clique, adj, hier: LevelHierarchy, dists, beta: int,
                 cap: int) -> list[dict[int, tuple[int, int]]]:
    n = cc.config.n
    k = hier.k
    bunches: list[dict[int, tuple[int, int]]] = [dict() for _ in range(n)]
    by_level: dict[int, list[int]] = {}
    for v in range(n):
        by_level.setdefault(hier.exact_level(v), []).append(v)
    for i in sorted(by_level, reverse=True):
        if i + 1 < k:
            nxt = dists[i + 1]

            def filt(v, s, val, _thr=nxt):
                t = _thr[v]
                return val < (INF if t < 0 else t)
        else:
            filt = None
        table = _scheduled_run(cc, adj, by_level[i], beta, filt, cap=cap,
                               window=cap)
        for v, row in table.entries.items():
            for w, d in row.items():
                bunches[v][w] = (i, d)
    return bunches


def _ship_to_coordinator(cc: Clique, ss: SketchSet) -> tuple[SketchSet, int]:
    """Every node streams its sketch words to the coordinator in parallel;
    rounds equal the longest stream's chunk count."""
    coord = cc.config.coordinator
    c_w = cc.config.c_w
    n = cc.config.n
    chunks: dict[int, list[list[int]]] = {}
    for v in range(n):
        if v == coord:
            continue
        words = sketch_to_words(ss[v])
        chunks[v] = [words[i:i + c_w] for i in range(0, len(words), c_w)]
    depth = max((len(c) for c in chunks.values()), default=0)
    streams: dict[int, list[int]] = {v: [] for v in chunks}
    start = cc.rounds
    for r in range(depth):
        sends = [(v, coord, chunks[v][r]) for v in sorted(chunks)
                 if r < len(chunks[v])]
        inbox = cc.exchange(sends)
        for src, payload in inbox.get(coord, []):
            streams[src].extend(payload)
    rebuilt = []
    for v in range(n):
        if v == coord:
            rebuilt.append(ss[coord])
        else:
            rebuilt.append(sketch_from_words(streams[v], ss.params))
    return SketchSet(ss.params, rebuilt), cc.rounds - start


def clique_build_oracle(cc: Clique, k: int,
                        hopset_params: HopsetParams | None = None,
                        seed: int = 0, *, beta: int = 0, reseeds: int = 5,
                        _base: Graph | None = None,
                        _spanner: Graph | None = None,
                        _stretch_factor: int = 1
                        ) -> tuple[CliqueOracle, CliqueMetrics]:
    """Preprocess a coordinator-held distance oracle.

    Shortcut edges (if parameters are given) come from the shared phase
    driver over this executor; level and bunch runs then mirror the staged
    sketch construction — same stage seeds, same admission cap, same
    resample-on-overflow policy — so the shipped sketches are value-equal
    to any other executor's under the same seed.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    if reseeds < 1:
        raise ConfigError("need at least one hierarchy attempt")
    g = _base if _base is not None else cc.graph
    g.require_connected()
    n = g.n
    hopset = None
    if hopset_params is not None:
        use_beta = beta or hopbound(n, hopset_params)
        engine = CliqueEngine(cc, g)
        hopset = run_hopset_phases(n, hopset_params, use_beta,
                                   derive(seed, STAGE_HOPSET), engine,
                                   scale_range(g, use_beta))
        engine._ensure(hopset.edge_tuples())
        adj = engine.adjacency()
    else:
        use_beta = beta or n
        adj = [dict(d) for d in _adj_of(g)]
    cap = math.ceil(bunch_size_bound(n, k))
    seed_h = derive(seed, STAGE_HIER)
    last: CapExceeded | None = None
    for att in range(reseeds):
        hier = sample_hierarchy(n, k, derive(seed_h, att))
        try:
            with cc.phase("levels"):
                dists, pivs = _level_state(cc, adj, hier, use_beta)
            with cc.phase("bunches"):
                bunches = _bunch_state(cc, adj, hier, dists, use_beta, cap)
        except CapExceeded as err:
            last = err
            continue
        ss = assemble_sketches(hier.params(), hier, dists, pivs, bunches)
        with cc.phase("ship"):
            shipped, ship_rounds = _ship_to_coordinator(cc, ss)
        certified = Fraction(2 * k - 1)
        if hopset_params is not None:
            certified *= 1 + 3 * Fraction(hopset_params.eps)
        certified *= _stretch_factor
        oracle = CliqueOracle(sketches=shipped, hier=hier, hopset=hopset,
                              spanner=_spanner, beta=use_beta,
                              certified=certified, ship_rounds=ship_rounds)
        cc.oracle = oracle
        return oracle, cc.metrics()
    assert last is not None
    raise last


def _adj_of(g: Graph) -> list[dict[int, int]]:
    adj: list[dict[int, int]] = [dict() for _ in range(g.n)]
    for u, v, w in g.edges:
        adj[u][v] = w
        adj[v][u] = w
    return adj


# -- native spanner rounds ------------------------------------------------


def _clique_spanner(cc: Clique, t: int, seed: int) -> Graph:
    """Grow clusters with node-local state and one combined notice per
    affected pair per round.

    Each node tracks its own tag, its alive incident edges, and its
    neighbors' tags.  Decisions are local; what travels is the outcome:
    a two-word (new-tag-or-retire, drop-flag) notice to each alive
    neighbor, where the flag tells that neighbor its cluster was kept and
    the shared edge is spent.  Kept edges are announced to their other
    endpoint once at the end.  The kept set equals the in-process
    builder's under the same seed.
    """
    g = cc.graph
    n = g.n
    if t == 1 or g.m <= max(0, n - 1):
        return Graph(n, g.edges)
    rng = random.Random(seed)
    p = n ** (-1.0 / t)
    RETIRE = n
    alive = [dict(d) for d in cc.base_adj]
    view: list[dict[int, int | None]] = [
        {u: u for u in d} for d in cc.base_adj]
    own: list[int | None] = list(range(n))
    center = {v: v for v in range(n)}
    kept: list[tuple[int, int, int]] = []
    kept_by: dict[int, list[tuple[int, int]]] = {}

    for _ in range(t - 1):
        prev_centers = sorted(set(center.values()))
        sampled = {c for c in prev_centers if rng.random() < p}
        drops: list[tuple[int, int]] = []
        joins: dict[int, int] = {}
        retirees: list[int] = []
        notices: dict[int, tuple[int, set[int]]] = {}
        for v in range(n):
            if v not in center:
                continue
            for u in alive[v]:
                if view[v][u] is not None and view[v][u] == own[v]:
                    drops.append((v, u))
            if center[v] in sampled:
                continue
            best: dict[int, tuple[int, int]] = {}
            for u, w in alive[v].items():
                c = view[v][u]
                if c is None or c == own[v]:
                    continue
                cur = best.get(c)
                if cur is None or (w, u) < cur:
                    best[c] = (w, u)
            options = [(c, w, u) for c, (w, u) in best.items()]
            keep, new_center = vertex_phase_decision(options, sampled)
            kept_clusters = set()
            for c, u, w in keep:
                kept.append((min(v, u), max(v, u), w))
                kept_by.setdefault(v, []).append((u, w))
                kept_clusters.add(c)
                for x, cx in view[v].items():
                    if x in alive[v] and cx == c:
                        drops.append((v, x))
            if new_center is None:
                retirees.append(v)
                for u in alive[v]:
                    drops.append((v, u))
                notices[v] = (RETIRE, kept_clusters)
            else:
                joins[v] = new_center
                notices[v] = (new_center, kept_clusters)
        sends = []
        for v in sorted(notices):
            tagword, kept_clusters = notices[v]
            for u in sorted(alive[v]):
                flag = 1 if view[v][u] in kept_clusters else 0
                sends.append((v, u, [tagword, flag]))
        if sends:
            inbox = cc.exchange(sends)
            for u, arrivals in inbox.items():
                for v, (tagword, flag) in arrivals:
                    if flag or tagword == RETIRE:
                        drops.append((u, v))
                    view[u][v] = None if tagword == RETIRE else tagword
        for a, b in drops:
            alive[a].pop(b, None)
            alive[b].pop(a, None)
        for v in retirees:
            del center[v]
            own[v] = None
        for v, c in joins.items():
            center[v] = c
            own[v] = c
        if len(set(center.values())) <= 1:
            break

    for v in range(n):
        best: dict[int, tuple[int, int]] = {}
        for u, w in alive[v].items():
            c = view[v][u]
            if c is None or c == own[v]:
                continue
            cur = best.get(c)
            if cur is None or (w, u) < cur:
                best[c] = (w, u)
        for c in sorted(best):
            w, u = best[c]
            kept.append((min(v, u), max(v, u), w))
            kept_by.setdefault(v, []).append((u, w))
    sends = []
    for v in sorted(kept_by):
        for u, w in sorted(set(kept_by[v])):
            sends.append((v, u, [w]))
    if sends:
        cc.exchange(sends)
    return Graph(n, kept)


def clique_build_oracle_sparsified(cc: Clique, k: int, t: int,
                                   hopset_params: HopsetParams | None = None,
                                   seed: int = 0, *, beta: int = 0,
                                   reseeds: int = 5
                                   ) -> tuple[CliqueOracle, CliqueMetrics]:
    """Thin the graph to a ``2t - 1`` spanner natively, then preprocess on
    the kept subgraph; certified stretch carries the spanner factor."""
    if t < 1:
        raise ConfigError("t must be >= 1")
    if t == 1 or cc.graph.m <= max(0, cc.graph.n - 1):
        return clique_build_oracle(cc, k, hopset_params, seed, beta=beta,
                                   reseeds=reseeds)
    with cc.phase("spanner"):
        spanner = _clique_spanner(cc, t, derive(seed, STAGE_SPANNER))
    return clique_build_oracle(cc, k, hopset_params, seed, beta=beta,
                               reseeds=reseeds, _base=spanner,
                               _spanner=spanner, _stretch_factor=2 * t - 1)


def coordinator_query(cc: Clique, u: int, v: int) -> int:
    """Answer from the coordinator's shipped sketches; zero rounds."""
    if cc.oracle is None:
        raise NotBuilt("no oracle at the coordinator; preprocess first")
    before = cc.rounds
    ss = cc.oracle.sketches
    est = 0 if u == v else sketch_query(ss[u], ss[v])
    assert cc.rounds == before
    return est


def direct_message_bound(n: int, m: int, k: int, beta: int) -> float:
    """Empirical ceiling on direct preprocessing traffic."""
    return C_MSG * beta * m * k * n ** (1.0 / k) * math.log(max(n, 2))
