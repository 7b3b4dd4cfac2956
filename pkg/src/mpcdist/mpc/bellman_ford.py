"""Hop-restricted relaxation sweeps over the per-vertex edge blocks.

Every vertex block keeps its authoritative estimate table at the block's
head machine.  One sweep works in four strokes, each lockstep across the
blocks that have anything to do (quiet blocks neither send nor receive):
members push weight-extended candidates for freshly changed estimates to
a machine inside the head vertex's block; candidates fold up every active
block's aggregation tree; heads admit improvements (optionally gated by a
per-vertex predicate and a source-count cap); and admitted changes
broadcast back down the block so the next sweep can push them.

Single-source runs charge a one-word convergence flag folded across all
machines each sweep and stop once it reports no admissions.  Multi-source
runs leave termination to the driver, which already orchestrates every
sweep and can see quiescence without moving data.

Two scaling levers shape multi-source runs.  ``lanes`` replicates the
blocks into machine stripes and shards the sources across them, so many
sources advance in every sweep at the price of extra machines.  ``window``
staggers source entry instead: source ranks enter round-robin over that
many sweeps, bounding how many estimates are in flight at once, at the
price of rounds growing with the window.  Because a source's rows never
interact with another source's rows, staggered entry leaves final values
untouched for any run that reaches quiescence.

An ``ExtraEdges`` region adds auxiliary directed edges without touching
the base layout: its records push candidates into the head vertex's base
block, and fresh estimates reach the region through a one-hop relay from
the base head, so base heads stay the single authority for every value.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import CapExceeded, ConfigError, InsufficientExtraSpace
from .primitives import (
    _F_IV,
    _F_RV,
    _F_W,
    _flow_briefs,
    _grouped_broadcast,
    _level_sizes,
    EdgeLayout,
    RECORD_WORDS,
    find_minimum,
    tree_depth,
)
from .sim import Sim


@dataclass(frozen=True)
class SourceSet:
    """The vertices a run starts from.

    A *virtual* set acts as one zero-distance super source: every member
    starts at distance 0 carrying itself as the origin, candidates compare
    as (distance, origin) pairs, and the output holds one entry per vertex.
    ``cap`` bounds how many distinct real sources any one vertex may admit;
    -1 leaves it unbounded.
    """

    sources: tuple[int, ...]
    cap: int = -1
    virtual: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sources",
                           tuple(sorted(set(self.sources))))

    @staticmethod
    def single(s: int, cap: int = -1) -> "SourceSet":
        return SourceSet((s,), cap=cap)

    @staticmethod
    def virtual_set(members) -> "SourceSet":
        return SourceSet(tuple(members), virtual=True)


@dataclass
class DistanceTable:
    """Result of a run, mirrored from the head machines.

    Real-source runs map ``entries[v] = {source: distance}``; virtual runs
    map ``entries[v] = (distance, origin)`` and never expose the members as
    keys.  ``iterations`` counts executed sweeps (early termination may stop
    short of ``nominal_h``); ``rounds`` are the communication rounds the run
    consumed, excluding layout construction.
    """

    virtual: bool
    entries: dict
    nominal_h: int
    iterations: int
    rounds: int
    converged: bool

    def get(self, v: int, s: int | None = None):
        row = self.entries.get(v)
        if row is None:
            return None
        if self.virtual:
            if s is not None:
                raise ConfigError("virtual tables key by vertex only")
            return row[0]
        if s is None:
            raise ConfigError("real-source tables need a source key")
        return row.get(s)

    def origin(self, v: int):
        if not self.virtual:
            raise ConfigError("origins exist only for virtual runs")
        row = self.entries.get(v)
        return None if row is None else row[1]

    def sources_of(self, v: int) -> dict:
        if self.virtual:
            raise ConfigError("virtual tables have no per-source rows")
        return dict(self.entries.get(v) or {})


@dataclass(frozen=True)
class ExtraEdges:
    """Auxiliary directed edge records laid out beside the base blocks.

    Records are (tail, head, weight) triples stored under ``key``.  Tail
    ``u`` owns machines ``[start[u], start[u]+group[u])`` inside stripe 0
    of a region that begins at machine ``first`` and spans ``used``
    machines per lane stripe; lane ``l`` shifts every block by
    ``l * used``.  Extra records push candidates into the *base* block of
    their head vertex and receive fresh estimates through a one-hop relay
    from the base head, so the base layout keeps the only estimate tables.
    """

    key: str
    start: dict
    group: dict
    first: int
    used: int


def replicate_region(sim: Sim, first: int, used: int, key: str,
                     width: int, lanes: int) -> int:
    """Copy machines ``[first, first+used)`` onto ``lanes`` stripes.

    Stripe ``l`` occupies ``[first + l*used, first + (l+1)*used)`` and
    mirrors stripe 0's ``key`` records exactly.  Copies fan out by
    doubling: ``ceil(log2 lanes)`` rounds.
    """
    if lanes < 1:
        raise ConfigError("lanes must be >= 1")
    if first < 0 or used < 0:
        raise ConfigError("region bounds must be non-negative")
    if first + lanes * used > sim.cfg.P:
        raise InsufficientExtraSpace(
            f"{lanes} lane stripes over {used} machines starting at "
            f"{first} need {first + lanes * used} <= P={sim.cfg.P}")
    start = sim.rounds
    have = 1
    while have < lanes:
        copy = min(have, lanes - have)
        sends = []
        for q in range(copy * used):
            recs = sim.store(first + q).get(key)
            if recs:
                flat = [x for rec in recs for x in rec]
                sends.append((first + q, first + q + have * used, flat))
        inboxes = sim.exchange(sends)
        for dst, msgs in inboxes.items():
            for _, flat in msgs:
                sim.store(dst)[key] = [
                    tuple(flat[i:i + width])
                    for i in range(0, len(flat), width)]
        have += copy
    return sim.rounds - start


def replicate_blocks(sim: Sim, layout: EdgeLayout, lanes: int) -> int:
    """Copy every block machine's records into ``lanes`` machine stripes."""
    used = layout.machines_used
    if lanes >= 1 and lanes * used > sim.cfg.P:
        raise InsufficientExtraSpace(
            f"{lanes} lanes over {used} block machines need "
            f"{lanes * used} <= P={sim.cfg.P}; raise alpha or p_min")
    return replicate_region(sim, 0, used, layout.key, RECORD_WORDS, lanes)


def _block_list(layout: EdgeLayout, lanes: int) -> list[tuple[int, int, int]]:
    """(vertex, absolute first machine, span) for every block copy."""
    used = layout.machines_used
    out = []
    for lane in range(lanes):
        off = lane * used
        for v in sorted(layout.start):
            out.append((v, layout.start[v] + off, layout.group[v]))
    return out


def _fold_into(cand: dict, entries, virtual: bool) -> None:
    """Fold (source, dist) or (dist, origin) pairs into a local minimum."""
    if virtual:
        for d, o in entries:
            cur = cand.get(None)
            if cur is None or (d, o) < cur:
                cand[None] = (d, o)
    else:
        for s, d in entries:
            cur = cand.get(s)
            if cur is None or d < cur:
                cand[s] = d


def _cand_rows(cand: dict, virtual: bool) -> list[list[int]]:
    if virtual:
        d, o = cand[None]
        return [[d, o]]
    return [[s, d] for s, d in sorted(cand.items())]


def _fold_block_trees(sim: Sim, blocks, rk, virtual: bool) -> None:
    """Fold per-machine candidate minima to every block's head, lockstep."""
    b = sim.cfg.s_base
    max_depth = max((tree_depth(span, b) for _, _, span in blocks),
                    default=0)
    for level in range(1, max_depth + 1):
        groups = {}
        senders = []
        for _, bfirst, span in blocks:
            sizes = _level_sizes(span, b)
            if level >= len(sizes):
                continue
            for i in range(sizes[level - 1]):
                parent = i // b
                if parent == i:
                    continue
                store = sim.store(bfirst + i)
                ent = store.pop((rk, "cand"))
                if ent:
                    groups[(bfirst + i, bfirst + parent)] = _cand_rows(
                        dict(ent) if not virtual else {None: tuple(ent[0])},
                        virtual)
            senders.append((bfirst, sizes[level]))
        if groups:
            _flow_briefs(sim, groups, (rk, "fin"), width=2)
        for bfirst, top in senders:
            for i in range(top):
                store = sim.store(bfirst + i)
                arrived = store.pop((rk, "fin"))
                if not arrived:
                    continue
                cand = _unpack_cand(store.get((rk, "cand")), virtual)
                _fold_into(cand, [tuple(r) for r in arrived], virtual)
                store[(rk, "cand")] = _pack_cand(cand, virtual)


def _pack_cand(cand: dict, virtual: bool) -> list[tuple[int, int]]:
    if virtual:
        return [tuple(cand[None])] if None in cand else []
    return sorted(cand.items())


def _unpack_cand(stored, virtual: bool) -> dict:
    if not stored:
        return {}
    if virtual:
        return {None: tuple(stored[0])}
    return {s: d for s, d in stored}


def _admit(store, rk, v, cand: dict, filt, cap: int,
           virtual: bool) -> list[tuple[int, int]]:
    """Apply folded candidates to the head table; return changed entries."""
    tab = store.get((rk, "tab"))
    changed = []
    if virtual:
        if None not in cand:
            return []
        best = cand[None]
        cur = tuple(tab[0]) if tab else None
        if cur is not None and best >= cur:
            return []
        if filt is not None and not filt(store, v, None, best[0]):
            return []
        store[(rk, "tab")] = [best]
        return [best]
    table = {s: d for s, d in tab} if tab else {}
    for s in sorted(cand):
        c = cand[s]
        cur = table.get(s)
        if cur is not None and c >= cur:
            continue
        if filt is not None and not filt(store, v, s, c):
            continue
        if cur is None and cap >= 0 and len(table) >= cap:
            raise CapExceeded(v, len(table) + 1, cap)
        table[s] = c
        changed.append((s, c))
    if changed:
        store[(rk, "tab")] = sorted(table.items())
    return changed


def mpc_restricted_bf(sim: Sim, layout: EdgeLayout, sources: SourceSet,
                      h: int, *, extra: ExtraEdges | None = None,
                      rk=None, snapshot=None) -> DistanceTable:
    """Distances over at most ``h`` edges from one real or virtual source.

    Matches the centralized hop-restricted sweep exactly: after sweep ``j``
    every estimate equals the best weight over paths of at most ``j`` edges.
    A charged one-word convergence flag ends the run early once a sweep
    admits nothing.  ``snapshot(j, entries)`` is invoked after each executed
    sweep with a mirror of the current table.
    """
    return _bf_run(sim, layout, sources, h, filt=None, lanes=1,
                   window=1, extra=extra, rk=rk, snapshot=snapshot,
                   sentinel=True)


def mpc_multi_source_bf(sim: Sim, layout: EdgeLayout, sources: SourceSet,
                        h: int, filt=None, *, lanes: int = 1,
                        window: int = 1, extra: ExtraEdges | None = None,
                        rk=None, snapshot=None) -> DistanceTable:
    """All sources swept together, gated per vertex by ``filt``.

    ``filt(head_store, v, s, value)`` must be monotone: once it rejects a
    value it rejects every larger one.  With ``lanes`` > 1 the sources split
    over that many block copies (``replicate_blocks`` must have run) and all
    advance each sweep; with ``window`` > 1 source ranks enter staggered
    over that many sweeps instead of all at once, so rounds scale with the
    window while peak in-flight traffic shrinks.  Staggering never changes
    the values of a run that reaches quiescence, and ``h`` then caps the
    sweeps that follow the final entry.  The driver, which orchestrates
    every sweep anyway, detects quiescence without a charged flag.
    Exceeding ``sources.cap`` distinct admitted sources at any vertex
    raises CapExceeded.
    """
    return _bf_run(sim, layout, sources, h, filt=filt, lanes=lanes,
                   window=window, extra=extra, rk=rk, snapshot=snapshot,
                   sentinel=False)


def _bf_run(sim: Sim, layout: EdgeLayout, sources: SourceSet, h: int,
            filt, lanes: int, window: int, extra: ExtraEdges | None,
            rk, snapshot, sentinel: bool) -> DistanceTable:
    if h < 0:
        raise ConfigError("h must be >= 0")
    if lanes < 1 or window < 1:
        raise ConfigError("lanes and window must be >= 1")
    virtual = sources.virtual
    if virtual and lanes != 1:
        raise ConfigError("a virtual source is one source; lanes=1")
    if virtual and window != 1:
        raise ConfigError("a virtual source enters all at once; window=1")
    used = layout.machines_used
    if lanes * used > sim.cfg.P:
        raise InsufficientExtraSpace(
            f"{lanes} lanes need {lanes * used} machines, have {sim.cfg.P}")
    if extra is not None:
        if extra.first < lanes * used:
            raise ConfigError("extra edge region overlaps the block lanes")
        if extra.first + lanes * extra.used > sim.cfg.P:
            raise InsufficientExtraSpace(
                f"extra region needs machines up to "
                f"{extra.first + lanes * extra.used}, have {sim.cfg.P}")
    if rk is None:
        rk = ("bf", sim.rounds)
    b = sim.cfg.s_base
    start_rounds = sim.rounds
    cap = sources.cap

    blocks = _block_list(layout, lanes)
    vorder = sorted(layout.start)
    vpos = {v: i for i, v in enumerate(vorder)}
    nb0 = len(vorder)
    block_of: dict[int, int] = {}
    for idx, (_, bfirst, span) in enumerate(blocks):
        for off in range(span):
            block_of[bfirst + off] = idx

    xind: dict[tuple[int, int], tuple[int, int]] = {}
    if extra is not None:
        for lane in range(lanes):
            for v in extra.start:
                xind[(v, lane)] = (extra.start[v] + lane * extra.used,
                                   extra.group[v])

    push_targets = _push_target_cache(sim, layout, extra, blocks, lanes, b)

    srcset = set(sources.sources)
    isolated = [s for s in srcset if s not in layout.start]
    order = [s for s in sorted(srcset) if s in layout.start]
    n_batches = min(window, len(order)) if order else 0
    batches: list[list[int]] = [[] for _ in range(n_batches)]
    for i, s in enumerate(order):
        batches[i % n_batches].append(s)

    def enter(batch, payloads, changed_heads=None):
        """Admit a batch of sources at distance zero at their heads."""
        for s in batch:
            lane = 0 if virtual else s % lanes
            idx = lane * nb0 + vpos[s]
            bfirst = blocks[idx][1]
            cand = {None: (0, s)} if virtual else {s: 0}
            ch = _admit(sim.store(bfirst), rk, s, cand, filt, cap, virtual)
            if ch:
                payloads[idx] = (payloads.get(idx) or []) + \
                    [x for e in ch for x in e]
                if changed_heads is not None:
                    changed_heads.add(bfirst)

    def deliver(payloads) -> set[int]:
        """Relay changes to extra blocks, broadcast, collect fresh lists."""
        bgroups = []
        bpay = {}
        hop_groups = {}
        extras = []
        for idx in sorted(payloads):
            flat = payloads[idx]
            if not flat:
                continue
            v, bfirst, span = blocks[idx]
            bgroups.append((bfirst, span))
            bpay[bfirst] = flat
            if extra is not None:
                lane = (bfirst // used) if used else 0
                x = xind.get((v, lane))
                if x is not None:
                    hop_groups[(bfirst, x[0])] = [
                        flat[i:i + 2] for i in range(0, len(flat), 2)]
                    extras.append(x)
        if hop_groups:
            _flow_briefs(sim, hop_groups, (rk, "xh"), width=2)
            for efirst, espan in extras:
                arr = sim.store(efirst).pop((rk, "xh"))
                if arr:
                    bgroups.append((efirst, espan))
                    bpay[efirst] = [x for r in arr for x in r]
        if not bgroups:
            return set()
        _grouped_broadcast(sim, bgroups, bpay, (rk, "bc"))
        holders: set[int] = set()
        for bfirst, span in bgroups:
            for off in range(span):
                store = sim.store(bfirst + off)
                flat = store.pop((rk, "bc"))
                if not flat:
                    continue
                fresh = store.get((rk, "fresh")) or []
                store[(rk, "fresh")] = list(fresh) + [
                    (flat[i], flat[i + 1]) for i in range(0, len(flat), 2)]
                holders.add(bfirst + off)
        return holders

    payloads: dict[int, list[int]] = {}
    if n_batches:
        enter(batches[0], payloads)
    fresh_holders = deliver(payloads) if h > 0 else set()

    iterations = 0
    converged = False
    next_entry = 1
    limit = h + max(0, n_batches - 1)
    while iterations < limit:
        pending = next_entry < n_batches
        if not fresh_holders and not pending:
            converged = True
            break
        iterations += 1
        arrival = _push_sweep(sim, sorted(fresh_holders), rk, push_targets,
                              virtual, block_of)
        if arrival:
            _fold_block_trees(sim, [blocks[i] for i in sorted(arrival)],
                              rk, virtual)
        payloads = {}
        changed_heads: set[int] = set()
        for idx in sorted(arrival):
            v, bfirst, _ = blocks[idx]
            head = sim.store(bfirst)
            cand = _unpack_cand(head.pop((rk, "cand")), virtual)
            ch = _admit(head, rk, v, cand, filt, cap, virtual)
            if ch:
                payloads[idx] = [x for e in ch for x in e]
                changed_heads.add(bfirst)
        if pending:
            enter(batches[next_entry], payloads, changed_heads)
            next_entry += 1
        fresh_holders = deliver(payloads)
        if sentinel and not _convergence_flag(sim, rk, changed_heads):
            converged = True
            break
        if snapshot is not None:
            snapshot(iterations, _gather(sim, blocks, rk, virtual, isolated))
    for mid in fresh_holders:
        sim.store(mid).pop((rk, "fresh"))
    entries = _gather(sim, blocks, rk, virtual, isolated)
    if not virtual and cap >= 0:
        for v, row in entries.items():
            if len(row) > cap:
                raise CapExceeded(v, len(row), cap)
    return DistanceTable(virtual=virtual, entries=entries, nominal_h=h,
                         iterations=iterations,
                         rounds=sim.rounds - start_rounds,
                         converged=converged)


def _push_target_cache(sim: Sim, layout: EdgeLayout,
                       extra: ExtraEdges | None, blocks, lanes: int,
                       b: int) -> dict[int, list[tuple[int, int]]]:
    """(mirror machine, weight) per resident record, per machine.

    Record stores never change during a run, so the driver derives this
    once (a free god's-eye read of resident state).  Base records carry
    their mirror coordinates; extra records spread over the head vertex's
    base block in rank order, ``b`` candidates per machine.
    """
    used = layout.machines_used
    targets: dict[int, list[tuple[int, int]]] = {}
    for _, bfirst, span in blocks:
        lane_off = (bfirst // used) * used if used else 0
        for off in range(span):
            mid = bfirst + off
            targets[mid] = [
                (lane_off + rec[_F_RV] + (rec[_F_IV] - 1) // b, rec[_F_W])
                for rec in sim.store(mid).get(layout.key) or []]
    if extra is not None:
        for lane in range(lanes):
            lane_off = lane * used
            for v in sorted(extra.start):
                counters: dict[int, int] = {}
                efirst = extra.start[v] + lane * extra.used
                for off in range(extra.group[v]):
                    mid = efirst + off
                    tg = []
                    for _, tv, tw in sim.store(mid).get(extra.key) or []:
                        cnt = counters.get(tv, 0)
                        counters[tv] = cnt + 1
                        if tv not in layout.start:
                            raise ConfigError(
                                "extra edge head missing from base layout")
                        dst = layout.start[tv] + \
                            (cnt // b) % layout.group[tv] + lane_off
                        tg.append((dst, tw))
                    targets[mid] = tg
    return targets


def _push_sweep(sim: Sim, holders, rk, push_targets, virtual: bool,
                block_of) -> set[int]:
    """Push fresh estimates to mirror machines; return blocks reached."""
    groups: dict[tuple[int, int], list[list[int]]] = {}
    for mid in holders:
        store = sim.store(mid)
        fresh = store.pop((rk, "fresh"))
        if not fresh:
            continue
        best: dict = {}
        rows: dict[int, list[list[int]]] = {}
        if virtual:
            d, o = min(fresh)
            for dst, wgt in push_targets[mid]:
                c = (d + wgt, o)
                if dst not in best or c < best[dst]:
                    best[dst] = c
            for dst, (cd, co) in best.items():
                rows.setdefault(dst, []).append([cd, co])
        else:
            for dst, wgt in push_targets[mid]:
                for s, d in fresh:
                    c = d + wgt
                    cur = best.get((dst, s))
                    if cur is None or c < cur:
                        best[(dst, s)] = c
            for (dst, s), d in best.items():
                rows.setdefault(dst, []).append([s, d])
        for dst, rr in rows.items():
            groups[(mid, dst)] = sorted(rr)
    if groups:
        _flow_briefs(sim, groups, (rk, "in"), width=2)
    arrival: set[int] = set()
    for dst in {d for _, d in groups}:
        store = sim.store(dst)
        arrived = store.pop((rk, "in"))
        if not arrived:
            continue
        cand = _unpack_cand(store.get((rk, "cand")), virtual)
        _fold_into(cand, [tuple(r) for r in arrived], virtual)
        store[(rk, "cand")] = _pack_cand(cand, virtual)
        arrival.add(block_of[dst])
    return arrival


def _convergence_flag(sim: Sim, rk, changed_heads: set[int]) -> bool:
    """One-word global fold: did any head admit an update this sweep?"""
    P = sim.cfg.P
    skey = (rk, "sent")
    for mid in range(P):
        sim.store(mid)[skey] = (0 if mid in changed_heads else 1, mid)
    val, _, _ = find_minimum(sim, 0, P, skey)
    for mid in range(P):
        sim.store(mid).pop(skey)
    sim.store(0).pop((skey, "min"))
    return val == 0


def _gather(sim: Sim, blocks, rk, virtual: bool, isolated) -> dict:
    """Mirror the head tables into one driver-side dict."""
    entries: dict = {}
    for v, bfirst, _ in blocks:
        tab = sim.store(bfirst).get((rk, "tab"))
        if not tab:
            continue
        if virtual:
            cur = entries.get(v)
            best = tuple(tab[0])
            if cur is None or best < cur:
                entries[v] = best
        else:
            row = entries.setdefault(v, {})
            for s, d in tab:
                old = row.get(s)
                if old is None or d < old:
                    row[s] = d
    for s in isolated:
        if virtual:
            entries.setdefault(s, (0, s))
        else:
            entries.setdefault(s, {})[s] = 0
    return entries
