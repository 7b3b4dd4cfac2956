"""Distance sketches, shortcut edges, and SSSP driven end to end in the
machine simulation.

The driver owns a god's-eye mirror of the instance (the input graph, the
level hierarchy, coin flips, round scheduling); that is orchestration and
costs nothing, exactly as source sets already enter the exploration runs by
driver fiat.  Every value that becomes another machine's state — edge
records, exploration estimates, threshold tables, kept spanner edges,
assembled sketch words — travels through charged exchanges, so the metrics
reflect what a real deployment would pay.

Three build modes share the machinery:

* ``exact`` keeps one copy of the edge blocks and meters source entry:
  a block's aggregation tree absorbs about its branching factor ``S_base``
  of new per-source streams per sweep without spilling, so batched runs
  stagger entry over ``ceil(sources / S_base)`` sweeps.  Rounds grow
  polynomially with the instance while values stay exactly those of the
  unmetered run (staggered entry never changes a converged run's values).
* ``extra`` replicates the edge blocks into ``lanes`` machine stripes and
  shards sources across them, so every source advances each sweep and the
  entry window collapses to one.
* ``polylog`` first thins the graph to a multiplicative spanner built
  natively from cluster rounds, re-scatters the kept edges as a fresh
  block layout, and then runs the ``extra`` machinery on the sparser
  instance; certified stretch picks up the spanner factor.

Shortcut edges discovered by the scale/phase driver are appended to the
resident input as an auxiliary record region beside the block lanes and
re-materialized whenever the committed set changes, so hop-capped runs see
them exactly like input edges.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import (
    CapExceeded,
    ConfigError,
    DensityTooLow,
    NotBuilt,
    OverlapBudgetExceeded,
    SketchTooLargeForPayload,
)
from ..graphs import STAGE_HIER, STAGE_HOPSET, STAGE_SPANNER, Graph, derive
from ..hopsets import (
    HopsetParams,
    HopsetResult,
    hopbound,
    run_hopset_phases,
    scale_range,
)
from ..sketches import (
    INF,
    LevelHierarchy,
    SketchParams,
    SketchSet,
    assemble_sketches,
    bunch_size_bound,
    query as sketch_query,
    sample_hierarchy,
    sketch_from_words,
    sketch_to_words,
)
from ..spanners import vertex_phase_decision
from .bellman_ford import (
    ExtraEdges,
    SourceSet,
    mpc_multi_source_bf,
    mpc_restricted_bf,
    replicate_blocks,
    replicate_region,
)
from .primitives import (
    _F_U,
    _F_V,
    _F_W,
    _flow_briefs,
    _grouped_broadcast,
    _level_sizes,
    EdgeLayout,
    build_edge_tuples,
    edge_scatter_spread,
    plan_sim,
    route_records,
    tree_depth,
)
from .sim import HEADER_WORDS, Sim, ceil_pow

MODES = ("exact", "extra", "polylog")

# Substream salts so each randomized stage draws independently of the others.
_SALT_HIER = STAGE_HIER
_SALT_HOPSET = STAGE_HOPSET
_SALT_SPANNER = STAGE_SPANNER


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one end-to-end build.

    ``eps`` is the total stretch slack promised to callers; internal stages
    consume at most a third of it, so certified bounds hold with room to
    spare.  ``lanes`` of zero picks the mode default (one for ``exact``,
    ``ceil(n^(1/2k))`` otherwise).  ``beta`` of zero derives the hop bound
    from the shortcut parameters; a positive value overrides it, which keeps
    every component honest but voids the derived approximation guarantee
    (measured results still stand) — that is how small fixtures exercise
    non-empty shortcut sets.
    """

    k: int
    mode: str = "exact"
    eps: Fraction = Fraction(1, 2)
    gamma: Fraction = Fraction(1, 2)
    seed: int = 0
    lanes: int = 0
    beta: int = 0
    c_slack: int = 32
    c_p: int = 8
    reseeds: int = 5
    density_divisor: int = 256

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        object.__setattr__(self, "eps", Fraction(self.eps))
        object.__setattr__(self, "gamma", Fraction(self.gamma))
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if not (0 < self.gamma <= 1):
            raise ConfigError("gamma must lie in (0, 1]")
        if self.lanes < 0 or self.beta < 0:
            raise ConfigError("lanes and beta overrides must be >= 0")
        if self.reseeds < 1:
            raise ConfigError("need at least one hierarchy attempt")

    def hopset_eps(self) -> Fraction:
        return self.eps / 3

    def spanner_t(self) -> int:
        return 2 * self.k

    def hopset_kappa(self) -> int:
        return self.k if self.mode == "exact" else 2 * self.k

    def hopset_rho(self) -> Fraction:
        if self.mode == "exact":
            return Fraction(1, self.hopset_kappa())
        return Fraction(1, 2)

    def certified_stretch(self) -> Fraction:
        """Upper bound the query path is allowed to report."""
        base = (2 * self.k - 1) * (1 + self.eps)
        if self.mode == "polylog":
            return (4 * self.k - 1) * base
        return base


@dataclass(frozen=True)
class SketchPlacement:
    """Where each owner's sketch words live, plus the certified bound."""

    params: SketchParams
    machine: dict
    certified: Fraction
    words_key: str = "sketch"

    def key_of(self, owner: int):
        return (self.words_key, owner)


@dataclass(frozen=True)
class SsspResult:
    source: int
    mode: str
    dist: dict
    certified: Fraction
    rounds: int
    beta: int
    shortcut_edges: int


@dataclass(frozen=True)
class QueryResult:
    u: int
    v: int
    estimate: int
    rounds: int
    certified: Fraction


def _keep_bound(n: int, t: int) -> int:
    """With-high-probability cap on one vertex's kept edges per cluster
    round: the count of strictly-closer foreign clusters before the first
    sampled one is geometric with mean ``n^(1/t)``."""
    return math.ceil(2.0 * n ** (1.0 / t) * (math.log(max(n, 2)) + 8.0))


class PipelineState:
    """One prepared instance: simulation, resident layout, build artifacts.

    The constructor sizes the machine pool for the worst stage (block lanes,
    an auxiliary shortcut region, and — in ``polylog`` mode — a second block
    layout for the re-scattered spanner), scatters the edges, and builds the
    per-vertex record blocks.  Build functions then populate ``hopset``,
    ``region``, ``sketches``, and ``placement``.
    """

    def __init__(self, g: Graph, config: PipelineConfig):
        g.require_connected()
        self.g = g
        self.config = config
        n = g.n
        k = config.k
        if config.mode == "exact":
            self.lanes = 1
        else:
            self.lanes = config.lanes or ceil_pow(n, Fraction(1, 2 * k))
        self.bunch_cap = math.ceil(bunch_size_bound(n, k))
        s_base = ceil_pow(n, config.gamma)
        s_min = 2 * (2 * k + 3 * self.bunch_cap) + 16 * s_base + 32
        if config.mode == "polylog":
            s_min = max(s_min, 6 * _keep_bound(n, config.spanner_t()) + 128)
        ln_n = math.log(max(n, 2))
        reserve = 2 * n + 8 * math.ceil(n * ln_n / s_base) + 64
        plan_lanes = self.lanes + (1 if config.mode == "polylog" else 0)
        margin = self.lanes * reserve + 64
        degrees = [g.degree(v) for v in range(n)]
        cfg = plan_sim(n, g.m, degrees, config.gamma, c_slack=config.c_slack,
                       c_p=config.c_p, margin=margin, lanes=plan_lanes,
                       s_min=s_min, seed=config.seed)
        self.sim = Sim(cfg)
        with self.sim.phase("scatter"):
            self.sim.scatter_input(g.edges, edge_scatter_spread(cfg))
        with self.sim.phase("layout"):
            self.base_layout, _ = build_edge_tuples(self.sim, n)
        self.layout = self.base_layout
        if config.mode == "extra" and self.lanes > 1:
            with self.sim.phase("replicate"):
                replicate_blocks(self.sim, self.layout, self.lanes)
        # populated by the build functions
        self.graph = g                 # instance the active layout encodes
        self.hopset: HopsetResult | None = None
        self.region: ExtraEdges | None = None
        self.beta = 0
        self.h_bound = 0
        self.hier: LevelHierarchy | None = None
        self.sketches: SketchSet | None = None
        self.placement: SketchPlacement | None = None
        self.spanner: Graph | None = None

    # -- policy ----------------------------------------------------------

    def entry_window(self, count: int) -> int:
        """Sweeps over which a batched run staggers its source entries."""
        if self.config.mode != "exact" or count <= 1:
            return 1
        return max(1, math.ceil(count / self.sim.cfg.s_base))

    def hopset_params(self) -> HopsetParams:
        return HopsetParams(kappa=self.config.hopset_kappa(),
                            rho=self.config.hopset_rho(),
                            eps=self.config.hopset_eps())

    def resolve_beta(self, params: HopsetParams | None) -> int:
        if self.config.beta:
            return self.config.beta
        if params is None:
            return self.g.n
        return hopbound(self.g.n, params)

    def head(self, v: int, lane: int = 0) -> int:
        start = self.layout.start.get(v)
        if start is None:
            return 0
        return start + lane * self.layout.machines_used

    def report(self) -> dict:
        m = self.sim.metrics()
        m["lanes"] = self.lanes
        m["block_machines"] = self.layout.machines_used
        m["machines"] = self.sim.cfg.P
        m["words_per_machine"] = self.sim.cfg.S
        return m


def _pop_prefixed(sim: Sim, prefixes: tuple) -> None:
    """Free-delete every store entry whose key opens with one of the given
    tuple prefixes (deletion needs no communication)."""
    for mid in range(sim.cfg.P):
        store = sim.store(mid)
        doomed = [key for key in list(store.keys())
                  if isinstance(key, tuple) and any(
                      key[:len(p)] == p for p in prefixes)]
        for key in doomed:
            store.pop(key)


class _SimEngine:
    """Bounded-exploration engine backed by the simulation.

    Auxiliary (shortcut) edges live in a record region past the block lanes
    and are re-materialized through charged flows from the block heads of
    their lower endpoints whenever the committed set changes; replays after
    an aborted attempt shrink the set the same way.  Each run uses a fresh
    subkey; the previous run's head tables are freed lazily so the values a
    new edge batch was derived from stay resident while its region flows
    leave.
    """

    REGION_KEY = ("hs", "region")

    def __init__(self, state: PipelineState, layout: EdgeLayout, lanes: int):
        self.state = state
        self.sim = state.sim
        self.layout = layout
        self.lanes = lanes
        self.region_first = lanes * layout.machines_used
        self._mat: list[tuple[int, int, int]] | None = None
        self._region: ExtraEdges | None = None
        self._stale: list = []
        self._calls = 0

    # -- region maintenance ------------------------------------------------

    def _drop_region(self) -> None:
        if self._region is None:
            return
        r = self._region
        for mid in range(r.first, r.first + self.lanes * r.used):
            self.sim.store(mid).pop(r.key)
        self._region = None

    def _ensure(self, extra) -> None:
        extra = [tuple(e) for e in extra]
        if extra == self._mat:
            return
        self._drop_region()
        self._mat = extra
        if not extra:
            return
        b = self.sim.cfg.s_base
        rows_by_tail: dict[int, list[tuple[int, int, int]]] = {}
        for u, v, w in extra:
            rows_by_tail.setdefault(u, []).append((u, v, w))
            rows_by_tail.setdefault(v, []).append((v, u, w))
        start: dict[int, int] = {}
        group: dict[int, int] = {}
        cursor = self.region_first
        for tail in sorted(rows_by_tail):
            rows_by_tail[tail].sort()
            start[tail] = cursor
            group[tail] = max(1, -(-len(rows_by_tail[tail]) // b))
            cursor += group[tail]
        used = cursor - self.region_first
        groups: dict[tuple[int, int], list[list[int]]] = {}
        for tail in sorted(rows_by_tail):
            for rank, (t, h, w) in enumerate(rows_by_tail[tail]):
                src = self.layout.start.get(min(t, h), 0)
                dst = start[tail] + rank // b
                groups.setdefault((src, dst), []).append([t, h, w])
        _flow_briefs(self.sim, groups, self.REGION_KEY, width=3)
        for mid in range(self.region_first, cursor):
            store = self.sim.store(mid)
            rows = store.pop(self.REGION_KEY)
            if rows:
                store[self.REGION_KEY] = sorted(tuple(r) for r in rows)
        if self.lanes > 1:
            replicate_region(self.sim, self.region_first, used,
                             self.REGION_KEY, 3, self.lanes)
        self._region = ExtraEdges(key=self.REGION_KEY, start=start,
                                  group=group, first=self.region_first,
                                  used=used)

    def _clean_stale(self) -> None:
        if self._stale:
            _pop_prefixed(self.sim, tuple((rk,) for rk in self._stale))
            self._stale = []

    def _next_rk(self):
        rk = ("hs", self._calls)
        self._calls += 1
        return rk

    # -- the engine protocol -------------------------------------------------

    def joint_explore(self, extra, sources, hop_cap, limit):
        """Multi-source lex exploration; returns (dist, origin) arrays."""
        self._ensure(extra)
        self._clean_stale()
        rk = self._next_rk()
        filt = None
        if limit >= 0:
            def filt(store, v, s, val, _lim=limit):
                return val <= _lim
        table = mpc_multi_source_bf(
            self.sim, self.layout, SourceSet.virtual_set(sources), hop_cap,
            filt, lanes=1, window=1, extra=self._region, rk=rk)
        self._stale.append(rk)
        n = self.state.g.n
        dist = np.full(n, -1, dtype=np.int64)
        origin = np.full(n, -1, dtype=np.int64)
        for v, (d, o) in table.entries.items():
            dist[v] = d
            origin[v] = o
        return dist, origin

    def per_source_explore(self, extra, sources, hop_cap, limit, budget=-1):
        """Independent bounded exploration per source; list of dist arrays.

        Per-source rows never interact, so one batched run equals the
        per-source sequence; ``budget`` becomes the per-vertex admission
        cap, enforced in flight.
        """
        self._ensure(extra)
        self._clean_stale()
        rk = self._next_rk()
        filt = None
        if limit >= 0:
            def filt(store, v, s, val, _lim=limit):
                return val <= _lim
        srcs = SourceSet(tuple(sources), cap=budget if budget >= 0 else -1)
        try:
            table = mpc_multi_source_bf(
                self.sim, self.layout, srcs, hop_cap, filt,
                lanes=self.lanes, window=1, extra=self._region, rk=rk)
        except CapExceeded as err:
            _pop_prefixed(self.sim, ((rk,),))
            raise OverlapBudgetExceeded(err.vertex, err.count,
                                        err.cap) from err
        self._stale.append(rk)
        n = self.state.g.n
        out = []
        for s in sources:
            dist = np.full(n, -1, dtype=np.int64)
            for v, row in table.entries.items():
                d = row.get(s)
                if d is not None:
                    dist[v] = d
            out.append(dist)
        return out

    # -- lifecycle -----------------------------------------------------------

    def finish(self, committed) -> ExtraEdges | None:
        """Materialize the final committed set and free scratch tables."""
        self._ensure(committed)
        self._clean_stale()
        return self._region


def mpc_build_hopset(state: PipelineState, params: HopsetParams | None = None,
                     seed: int | None = None) -> HopsetResult:
    """Build shortcut edges on the resident layout; leaves them materialized
    as an auxiliary record region for later hop-capped runs.

    The scale/phase driver, its retry policy, and its derived seeds are the
    same ones the in-process engine runs under, so the committed edge set is
    value-identical to an in-process build with the same seed.
    """
    params = params or state.hopset_params()
    seed = derive(state.config.seed, _SALT_HOPSET) if seed is None else seed
    beta = state.resolve_beta(params)
    graph = state.graph
    scales = scale_range(graph, beta)
    engine = _SimEngine(state, state.layout, state.lanes)
    with state.sim.phase("hopset"):
        result = run_hopset_phases(graph.n, params, beta, seed, engine,
                                   scales)
        region = engine.finish(result.edge_tuples())
    state.hopset = result
    state.region = region
    state.beta = beta
    return result


# -- level and bunch runs -----------------------------------------------


def _replicate_head_tabs(state: PipelineState, rk) -> None:
    """Copy one run's head tables onto every lane stripe's heads, so capped
    runs sharded across lanes read the same admission thresholds."""
    if state.lanes <= 1:
        return
    sim = state.sim
    layout = state.layout
    used = layout.machines_used
    groups: dict[tuple[int, int], list[list[int]]] = {}
    for v in sorted(layout.start):
        h0 = layout.start[v]
        tab = sim.store(h0).get((rk, "tab"))
        if not tab:
            continue
        row = list(tab[0])
        for lane in range(1, state.lanes):
            groups[(h0, h0 + lane * used)] = [row]
    if not groups:
        return
    _flow_briefs(sim, groups, (rk, "copy"), width=2)
    for _, dst in groups:
        store = sim.store(dst)
        rows = store.pop((rk, "copy"))
        if rows:
            store[(rk, "tab")] = [tuple(rows[0])]


def _level_runs(state: PipelineState, hier: LevelHierarchy, att: int
                ) -> tuple[list, list, dict]:
    """Per level j >= 1: one zero-weight joint run over the level's members
    fixes every vertex's distance and lexicographic representative; the head
    tables stay resident as the next level's admission thresholds."""
    sim = state.sim
    n = state.g.n
    k = hier.k
    dists = [np.zeros(n, dtype=np.int64)]
    pivs = [np.arange(n, dtype=np.int64)]
    tab_keys: dict[int, tuple] = {}
    for j in range(1, k):
        members = hier.members(j)
        rk = ("lvl", att, j)
        tab_keys[j] = rk
        dist = np.full(n, -1, dtype=np.int64)
        piv = np.full(n, -1, dtype=np.int64)
        if members:
            table = mpc_multi_source_bf(
                sim, state.layout, SourceSet.virtual_set(members),
                state.h_bound, None, lanes=1, window=1,
                extra=state.region, rk=rk)
            _replicate_head_tabs(state, rk)
            for v, (d, o) in table.entries.items():
                dist[v] = d
                piv[v] = o
        dists.append(dist)
        pivs.append(piv)
    return dists, pivs, tab_keys


def _threshold_filter(tab_keys: dict, i: int, k: int):
    """Admission predicate: strictly closer than the next level's set."""
    if i + 1 >= k or tab_keys.get(i + 1) is None:
        return None
    nxt = (tab_keys[i + 1], "tab")

    def filt(store, v, s, val, _key=nxt):
        tab = store.get(_key)
        thr = tab[0][0] if tab else INF
        return val < thr

    return filt


def _bunch_runs(state: PipelineState, hier: LevelHierarchy, att: int,
                tab_keys: dict) -> tuple[list, dict]:
    """One capped multi-source run per exact level inverts the center balls
    into per-vertex bunches."""
    sim = state.sim
    n = state.g.n
    k = hier.k
    bunches: list[dict[int, tuple[int, int]]] = [dict() for _ in range(n)]
    run_keys: dict[int, tuple] = {}
    by_level: dict[int, list[int]] = {}
    for v in range(n):
        by_level.setdefault(hier.exact_level(v), []).append(v)
    for i in sorted(by_level, reverse=True):
        sources = by_level[i]
        rk = ("bun", att, i)
        run_keys[i] = rk
        table = mpc_multi_source_bf(
            sim, state.layout,
            SourceSet(tuple(sources), cap=state.bunch_cap),
            state.h_bound, _threshold_filter(tab_keys, i, k),
            lanes=state.lanes, window=state.entry_window(len(sources)),
            extra=state.region, rk=rk)
        for v, row in table.entries.items():
            for w, d in row.items():
                bunches[v][w] = (i, d)
    return bunches, run_keys


def _consolidate_and_store(state: PipelineState, ss: SketchSet,
                           tab_keys: dict, run_keys: dict) -> dict:
    """Move lane-stripe bunch rows to the lane-0 heads, store each owner's
    flattened sketch there, and free the constituent run tables."""
    sim = state.sim
    layout = state.layout
    used = layout.machines_used
    if state.lanes > 1:
        groups: dict[tuple[int, int], list[list[int]]] = {}
        for v in sorted(layout.start):
            h0 = layout.start[v]
            for lane in range(1, state.lanes):
                hl = h0 + lane * used
                rows = []
                for i in sorted(run_keys):
                    for s, d in sim.store(hl).get((run_keys[i], "tab")) or []:
                        rows.append([i, s, d])
                if rows:
                    groups[(hl, h0)] = rows
        if groups:
            _flow_briefs(sim, groups, ("bun", "relay"), width=3)
    machine: dict[int, int] = {}
    for v in range(state.g.n):
        head = state.head(v)
        machine[v] = head
        sim.store(head)[("sketch", v)] = sketch_to_words(ss[v])
    prefixes = tuple((rk,) for rk in tab_keys.values()) + \
        tuple((rk,) for rk in run_keys.values()) + (("bun", "relay"),)
    _pop_prefixed(sim, prefixes)
    return machine


def _run_sketch_builds(state: PipelineState) -> SketchPlacement:
    """Shared tail of every sketch build: hierarchy attempts, level runs,
    bunch runs, assembly, placement.  A head admitting more centers than the
    bunch budget aborts the attempt and resamples the hierarchy; the final
    hierarchy's build equals an in-process construction over the same union
    graph, hop cap, and hierarchy."""
    config = state.config
    state.h_bound = state.beta
    seed_h = derive(config.seed, _SALT_HIER)
    last: CapExceeded | None = None
    for att in range(config.reseeds):
        hier = sample_hierarchy(state.g.n, config.k, derive(seed_h, att))
        try:
            with state.sim.phase("levels"):
                dists, pivs, tab_keys = _level_runs(state, hier, att)
            with state.sim.phase("bunches"):
                bunches, run_keys = _bunch_runs(state, hier, att, tab_keys)
        except CapExceeded as err:
            last = err
            _pop_prefixed(state.sim, (("lvl", att), ("bun", att)))
            continue
        ss = assemble_sketches(hier.params(), hier, dists, pivs, bunches)
        with state.sim.phase("assemble"):
            machine = _consolidate_and_store(state, ss, tab_keys, run_keys)
        state.hier = hier
        state.sketches = ss
        state.placement = SketchPlacement(
            params=hier.params(), machine=machine,
            certified=config.certified_stretch())
        return state.placement
    assert last is not None
    raise last


def mpc_build_sketches(state: PipelineState) -> SketchPlacement:
    """Build every vertex's sketch on the resident layout.

    Shortcut edges come first (levels need them hop-capped; with the default
    derived bound the cap exceeds the convergence horizon and values are
    exact); ``k == 1`` needs none — a hop bound of ``n`` already covers
    every simple path.
    """
    config = state.config
    if config.mode == "polylog":
        return mpc_build_sketches_polylog(state)
    if config.k >= 2:
        if state.hopset is None:
            mpc_build_hopset(state)
    elif not state.beta:
        state.beta = state.resolve_beta(None)
    return _run_sketch_builds(state)


# -- native spanner rounds ------------------------------------------------


def _init_spanner_tags(sim: Sim, layout: EdgeLayout) -> dict[int, list[int]]:
    """Derive per-record partner tags, alive flags, and the block's own
    cluster tag from resident records (local work, so free); returns the
    reverse directory mapping each vertex to the machines that hold records
    pointing at it."""
    reverse: dict[int, set[int]] = {}
    for v in sorted(layout.start):
        for off in range(layout.group[v]):
            mid = layout.start[v] + off
            store = sim.store(mid)
            recs = store.get(layout.key) or []
            store[("sp", "pt")] = [rec[_F_V] for rec in recs]
            store[("sp", "pv")] = [rec[_F_V] for rec in recs]
            store[("sp", "am")] = [1] * len(recs)
            store[("sp", "ot")] = [v]
            for rec in recs:
                reverse.setdefault(rec[_F_V], set()).add(mid)
    return {v: sorted(mids) for v, mids in reverse.items()}


def _spanner_sampled_min(sim: Sim, mid: int, key, sentinel: int, sampled):
    """Best (weight, cluster, neighbor) among this machine's alive records
    that point into a sampled foreign cluster."""
    store = sim.store(mid)
    recs = store.get(key) or []
    ptag = store.get(("sp", "pt")) or []
    amask = store.get(("sp", "am")) or []
    own = (store.get(("sp", "ot")) or [sentinel])[0]
    best = None
    for idx, rec in enumerate(recs):
        if not amask[idx]:
            continue
        c = ptag[idx]
        if c == sentinel or c == own or c not in sampled:
            continue
        row = (rec[_F_W], c, rec[_F_V])
        if best is None or row < best:
            best = row
    return [list(best)] if best else []


def _spanner_closer_rows(sim: Sim, mid: int, key, sentinel: int):
    """Per-cluster minima among alive foreign records strictly closer than
    the block's nearest sampled option (under ("sp", "d0"); absent means
    unbounded, which is the retire and final-join case)."""
    store = sim.store(mid)
    recs = store.get(key) or []
    ptag = store.get(("sp", "pt")) or []
    amask = store.get(("sp", "am")) or []
    own = (store.get(("sp", "ot")) or [sentinel])[0]
    d0 = (store.get(("sp", "d0")) or [INF])[0]
    best: dict[int, tuple[int, int]] = {}
    for idx, rec in enumerate(recs):
        if not amask[idx]:
            continue
        c = ptag[idx]
        if c == sentinel or c == own:
            continue
        w = rec[_F_W]
        if w >= d0:
            continue
        u = rec[_F_V]
        cur = best.get(c)
        if cur is None or (w, u) < cur:
            best[c] = (w, u)
    return [[c, w, u] for c, (w, u) in sorted(best.items())]


def _merge_min_row(rows):
    return [list(min(map(tuple, rows)))]


def _merge_cluster_minima(rows):
    best: dict[int, tuple[int, int]] = {}
    for c, w, u in rows:
        cur = best.get(c)
        if cur is None or (w, u) < cur:
            best[c] = (w, u)
    return [[c, w, u] for c, (w, u) in sorted(best.items())]


def _tree_fold(sim: Sim, layout: EdgeLayout, vertices, rk, leaf_rows,
               merge) -> dict:
    """Lockstep tree fold over each listed vertex's block.

    ``leaf_rows(mid)`` seeds each machine's accumulator; ``merge(rows)``
    canonicalizes any union of accumulators.  Same level/parent shape as the
    scalar minimum fold; sends ride budget-metered flows.  Returns the root
    rows per vertex.
    """
    b = sim.cfg.s_base
    blocks = [(v, layout.start[v], layout.group[v])
              for v in sorted(set(vertices)) if v in layout.start]
    for _, bfirst, span in blocks:
        for off in range(span):
            rows = leaf_rows(bfirst + off)
            if rows:
                sim.store(bfirst + off)[(rk, "acc")] = rows
    max_depth = max((tree_depth(span, b) for _, _, span in blocks),
                    default=0)
    for level in range(1, max_depth + 1):
        groups = {}
        receivers = []
        for _, bfirst, span in blocks:
            sizes = _level_sizes(span, b)
            if level >= len(sizes):
                continue
            for i in range(sizes[level - 1]):
                parent = i // b
                if parent == i:
                    continue
                acc = sim.store(bfirst + i).pop((rk, "acc"))
                if acc:
                    groups[(bfirst + i, bfirst + parent)] = acc
            receivers.append((bfirst, sizes[level]))
        if groups:
            _flow_briefs(sim, groups, (rk, "up"), width=3)
        for bfirst, top in receivers:
            for i in range(top):
                store = sim.store(bfirst + i)
                arrived = store.pop((rk, "up"))
                if not arrived:
                    continue
                rows = ((store.get((rk, "acc")) or [])
                        + [list(r) for r in arrived])
                store[(rk, "acc")] = merge(rows)
    out = {}
    for v, bfirst, _ in blocks:
        acc = sim.store(bfirst).pop((rk, "acc"))
        out[v] = [tuple(r) for r in (acc or [])]
    return out


def _apply_block_notice(sim: Sim, layout: EdgeLayout, v: int, flat: list,
                        sentinel: int) -> None:
    """One block's end-of-round update from its head's broadcast notice.

    Payload: ``[new own tag]`` (``sentinel`` retires, ``sentinel + 1`` keeps
    the current tag) followed by the kept clusters.  Drops read the
    round-start tags; the own tag updates last.
    """
    new_own = flat[0]
    kept = set(flat[1:])
    for off in range(layout.group[v]):
        store = sim.store(layout.start[v] + off)
        ptag = store.get(("sp", "pt")) or []
        amask = list(store.get(("sp", "am")) or [])
        own = (store.get(("sp", "ot")) or [sentinel])[0]
        changed = False
        for idx, c in enumerate(ptag):
            if not amask[idx]:
                continue
            if ((own != sentinel and c == own) or c in kept
                    or new_own == sentinel):
                amask[idx] = 0
                changed = True
        if changed:
            store[("sp", "am")] = amask
        if new_own <= sentinel:
            store[("sp", "ot")] = [new_own]


def _apply_partner_drops(sim: Sim, mid: int, rows, sentinel: int) -> None:
    """Partner-side drops: (1, v, c) kills records of v where this machine's
    own cluster is c; (2, v, _) kills every record of v."""
    store = sim.store(mid)
    partners = store.get(("sp", "pv")) or []
    amask = list(store.get(("sp", "am")) or [])
    own = (store.get(("sp", "ot")) or [sentinel])[0]
    changed = False
    for code, v, c in rows:
        if code == 0:
            continue
        for idx, pv in enumerate(partners):
            if pv != v or not amask[idx]:
                continue
            if code == 2 or (code == 1 and own == c):
                amask[idx] = 0
                changed = True
    if changed:
        store[("sp", "am")] = amask


def _apply_partner_retags(sim: Sim, mid: int, rows) -> None:
    """Partner-side retags: (0, v, c) marks records of v as cluster c."""
    store = sim.store(mid)
    partners = store.get(("sp", "pv")) or []
    ptag = list(store.get(("sp", "pt")) or [])
    changed = False
    for code, v, c in rows:
        if code != 0:
            continue
        for idx, pv in enumerate(partners):
            if pv == v:
                ptag[idx] = c
                changed = True
    if changed:
        store[("sp", "pt")] = ptag


class _SpannerEmitter:
    """Routes kept edges into fresh scatter slots, once each, preserving a
    deterministic global placement order."""

    def __init__(self, state: PipelineState):
        self.state = state
        spread = edge_scatter_spread(state.sim.cfg)
        self.per_block = state.sim.cfg.S // spread
        self.count = 0

    def emit(self, tagged) -> None:
        """``tagged``: (edge triple, resident source machine) pairs."""
        sim = self.state.sim
        moves: dict[tuple[int, int], list[tuple]] = {}
        for edge, src in sorted(tagged):
            dst = (self.count // self.per_block) % sim.cfg.P
            moves.setdefault((src, dst), []).append(tuple(edge))
            self.count += 1
        if moves:
            route_records(sim, [(s, d, recs) for (s, d), recs
                                in sorted(moves.items())], 3, "sp_in")


def _build_spanner_insim(state: PipelineState) -> Graph:
    """Grow clusters natively in rounds, mirroring the in-process sampler.

    Coin flips, iteration control, and which head emits a doubly-kept edge
    are driver orchestration.  Decision inputs reach each block head in two
    bounded folds — first the nearest sampled option, then per-cluster
    minima strictly closer than it, a set that stays small with high
    probability — the head's outcome broadcasts back down its block, and
    partner blocks learn center changes and drops through notices to the
    machines holding the affected records.  The kept edge set is exactly
    the in-process one under the same seed.
    """
    g = state.g
    sim = state.sim
    layout = state.base_layout
    t = state.config.spanner_t()
    n = g.n
    sentinel = n
    key = layout.key
    emitter = _SpannerEmitter(state)
    if t == 1 or g.m <= max(0, n - 1):
        tagged = []
        for v in sorted(layout.start):
            for off in range(layout.group[v]):
                mid = layout.start[v] + off
                for rec in sim.store(mid).get(key) or []:
                    if rec[_F_U] < rec[_F_V]:
                        tagged.append(((rec[_F_U], rec[_F_V], rec[_F_W]),
                                       mid))
        emitter.emit(tagged)
        return Graph(n, g.edges)
    rng = random.Random(derive(state.config.seed, _SALT_SPANNER))
    p = n ** (-1.0 / t)
    reverse = _init_spanner_tags(sim, layout)
    center = {v: v for v in range(n)}
    seen: set[tuple[int, int, int]] = set()
    staged: list[tuple[tuple, int]] = []

    def harvest(v: int, keep) -> list[int]:
        """Store kept edges at v's head; stage unseen ones for emission."""
        head = layout.start[v]
        rows = [[min(v, u), max(v, u), w] for c, u, w in keep]
        if rows:
            sim.store(head)[("sp", "keep")] = rows
        for row in rows:
            edge = tuple(row)
            if edge not in seen:
                seen.add(edge)
                staged.append((edge, head))
        return [c for c, _, _ in keep]

    for it in range(t - 1):
        prev_centers = sorted(set(center.values()))
        sampled = {c for c in prev_centers if rng.random() < p}
        deciders = [v for v in range(n)
                    if v in center and center[v] not in sampled]
        d0rows = _tree_fold(
            sim, layout, deciders, ("sp", "it", it, "a"),
            lambda mid: _spanner_sampled_min(sim, mid, key, sentinel,
                                             sampled),
            _merge_min_row)
        if deciders:
            _grouped_broadcast(
                sim, [(layout.start[v], layout.group[v]) for v in deciders],
                {layout.start[v]: [d0rows[v][0][0] if d0rows.get(v) else INF]
                 for v in deciders},
                ("sp", "d0"))
        options_map = _tree_fold(
            sim, layout, deciders, ("sp", "it", it, "c"),
            lambda mid: _spanner_closer_rows(sim, mid, key, sentinel),
            _merge_cluster_minima)
        _pop_prefixed(sim, ((("sp", "d0"),)))
        joins: dict[int, int] = {}
        retirees: list[int] = []
        staged = []
        block_payload: dict[int, list[int]] = {}
        partner_rows: dict[int, list[list[int]]] = {}
        for v in deciders:
            options = [(c, w, u) for c, w, u in options_map.get(v, [])]
            drow = d0rows.get(v)
            if drow:
                w0, c0, u0 = drow[0]
                options.append((c0, w0, u0))
            keep, new_center = vertex_phase_decision(options, sampled)
            kept_clusters = harvest(v, keep)
            if new_center is None:
                retirees.append(v)
                block_payload[v] = [sentinel] + kept_clusters
                partner_rows[v] = [[2, v, 0]]
            else:
                joins[v] = new_center
                block_payload[v] = [new_center] + kept_clusters
                partner_rows[v] = ([[1, v, c] for c in kept_clusters]
                                   + [[0, v, new_center]])
        emitter.emit(staged)
        for v in deciders:
            sim.store(layout.start[v]).pop(("sp", "keep"))
        # every clustered block gets a notice: intra-cluster drops apply
        # wherever a cluster exists, not only where a decision was made
        for v in range(n):
            if v in center and v not in block_payload:
                block_payload[v] = [sentinel + 1]
        order = sorted(block_payload)
        if order:
            _grouped_broadcast(
                sim, [(layout.start[v], layout.group[v]) for v in order],
                {layout.start[v]: block_payload[v] for v in order},
                ("sp", "note"))
        flows: dict[tuple[int, int], list[list[int]]] = {}
        for v in sorted(partner_rows):
            src = layout.start[v]
            for mid in reverse.get(v, []):
                flows[(src, mid)] = [list(r) for r in partner_rows[v]]
        if flows:
            _flow_briefs(sim, flows, ("sp", "pn"), width=3)
        # apply in dependency order: partner drops read round-start own
        # tags, block notices read round-start partner tags, retags last
        touched = sorted({mid for _, mid in flows})
        arrivals = {mid: sim.store(mid).pop(("sp", "pn")) or []
                    for mid in touched}
        for mid in touched:
            _apply_partner_drops(sim, mid, arrivals[mid], sentinel)
        for v in order:
            flat = None
            for off in range(layout.group[v]):
                got = sim.store(layout.start[v] + off).pop(("sp", "note"))
                if flat is None and got is not None:
                    flat = list(got)
            if flat:
                _apply_block_notice(sim, layout, v, flat, sentinel)
        for mid in touched:
            _apply_partner_retags(sim, mid, arrivals[mid])
        for v in retirees:
            del center[v]
        center.update(joins)
        if len(set(center.values())) <= 1:
            break
    # final joining: every vertex keeps one minimum edge per foreign cluster
    staged = []
    final_opts = _tree_fold(
        sim, layout, sorted(layout.start), ("sp", "it", "fin"),
        lambda mid: _spanner_closer_rows(sim, mid, key, sentinel),
        _merge_cluster_minima)
    for v in sorted(final_opts):
        keep = [(c, u, w) for c, w, u in final_opts[v]]
        harvest(v, keep)
    emitter.emit(staged)
    for v in sorted(final_opts):
        sim.store(layout.start[v]).pop(("sp", "keep"))
    return Graph(n, sorted(seen))


def _sparsify(state: PipelineState) -> None:
    """Replace the resident base blocks with the spanner's own layout."""
    if state.hopset is not None:
        raise ConfigError("shortcut edges already reference the base "
                          "layout; sparsify on a fresh pipeline")
    with state.sim.phase("spanner"):
        sp_graph = _build_spanner_insim(state)
        _pop_prefixed(state.sim, (("sp",),))
        for mid in range(state.sim.cfg.P):
            state.sim.store(mid).pop(state.base_layout.key)
        sp_layout, _ = build_edge_tuples(state.sim, state.g.n,
                                         input_key="sp_in", key="SP")
        if state.lanes > 1:
            replicate_blocks(state.sim, sp_layout, state.lanes)
    state.spanner = sp_graph
    state.layout = sp_layout
    state.graph = sp_graph


def mpc_build_sketches_polylog(state: PipelineState) -> SketchPlacement:
    """Sparsify-first build: native-round spanner, re-scattered layout,
    replicated lanes, shortcut edges, then the usual level and bunch runs.

    Refuses instances too sparse for the spanner to pay for itself;
    certified stretch carries the spanner factor on top of the sketch
    bound.
    """
    config = state.config
    if config.mode != "polylog":
        raise ConfigError("sparsify-first builds need mode='polylog'")
    g = state.g
    k = config.k
    floor = (k * g.n ** (1.0 + 1.0 / k) * math.log(max(g.n, 2))
             / config.density_divisor)
    if g.m < floor:
        raise DensityTooLow(
            f"{g.m} edges is under the sparsify-first floor {floor:.1f}; "
            "use mode 'exact' or 'extra'")
    if state.spanner is None:
        _sparsify(state)
    if state.hopset is None:
        mpc_build_hopset(state)
    return _run_sketch_builds(state)


# -- single-source distances ----------------------------------------------


def mpc_sssp(state: PipelineState, source: int, mode: str = "eps"
             ) -> SsspResult:
    """Approximate single-source distances.

    ``eps`` mode shortcuts the resident input and runs one hop-capped
    sweep; estimates never undershoot the true distance because every
    relaxed weight is itself a walk weight.  ``4k`` mode thins to a spanner
    first (building it and its shortcuts on demand) and certifies the
    combined factor.
    """
    g = state.g
    if not (0 <= source < g.n):
        raise ConfigError(f"source {source} out of range")
    if mode not in ("eps", "4k"):
        raise ConfigError("mode must be 'eps' or '4k'")
    if mode == "4k":
        if state.config.mode != "polylog":
            raise ConfigError("'4k' single-source runs need mode='polylog'")
        if state.spanner is None:
            _sparsify(state)
    elif state.spanner is not None:
        raise ConfigError("base records were replaced by the spanner; "
                          "'eps' needs a fresh pipeline or mode='4k'")
    if state.hopset is None:
        if state.config.k >= 2 or state.config.mode == "polylog":
            mpc_build_hopset(state)
        elif not state.beta:
            state.beta = state.resolve_beta(None)
    start = state.sim.rounds
    with state.sim.phase("sssp"):
        table = mpc_restricted_bf(
            state.sim, state.layout, SourceSet.single(source), state.beta,
            extra=state.region, rk=("sssp", start))
    dist = {v: row[source] for v, row in table.entries.items()
            if source in row}
    if mode == "eps":
        certified = Fraction(1) + state.config.eps
    else:
        certified = (4 * state.config.k - 1) * (1 + state.config.eps)
    return SsspResult(source=source, mode=mode, dist=dist,
                      certified=certified,
                      rounds=state.sim.rounds - start, beta=state.beta,
                      shortcut_edges=0 if state.hopset is None
                      else len(state.hopset.edges))


# -- the two-round query ----------------------------------------------------


def query_two_rounds(sim: Sim, placement: SketchPlacement, u: int, v: int,
                     asker: int = 0) -> QueryResult:
    """Fetch both sketches and answer locally: exactly two exchanges.

    Round one carries the owner ids to their head machines; round two
    carries each full sketch back.  A sketch that cannot ride in one
    message is a sizing error, reported before anything is sent.
    """
    for x in (u, v):
        if x not in placement.machine:
            raise ConfigError(f"vertex {x} has no placed sketch")
    start = sim.rounds
    by_machine: dict[int, list[int]] = {}
    for x in sorted({u, v}):
        by_machine.setdefault(placement.machine[x], []).append(x)
    targets = sorted(by_machine)
    sim.exchange([(asker, t, list(by_machine[t])) for t in targets])
    replies = []
    for t in targets:
        payload: list[int] = []
        for owner in by_machine[t]:
            words = sim.store(t).get(placement.key_of(owner))
            if words is None:
                raise NotBuilt(f"no sketch words resident for vertex "
                               f"{owner}")
            payload.extend(words)
        if len(payload) > sim.cfg.S - HEADER_WORDS:
            raise SketchTooLargeForPayload(
                f"{len(payload)} sketch words cannot ride one message "
                f"(S={sim.cfg.S})")
        replies.append((t, asker, payload))
    inbox = sim.exchange(replies)
    got = {}
    k = placement.params.k
    for _, payload in inbox.get(asker, []):
        pos = 0
        while pos < len(payload):
            blen = payload[pos + 1]
            span = 2 + 2 * k + 3 * blen
            sk = sketch_from_words(payload[pos:pos + span], placement.params)
            got[sk.owner] = sk
            pos += span
    estimate = 0 if u == v else sketch_query(got[u], got[v])
    return QueryResult(u=u, v=v, estimate=estimate,
                       rounds=sim.rounds - start,
                       certified=placement.certified)
