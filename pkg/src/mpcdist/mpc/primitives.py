"""Building blocks on top of the round simulator.

Everything here follows the same conventions: a *range* is a contiguous run
of machines ``[first, first + count)``; trees over a range are prefix
compacted (level ``l`` occupies the first ``ceil(count / b^l)`` machines of
the range, with branching ``b = S_base``), so an upward or downward sweep
takes exactly ``ceil(log_b count)`` rounds; and any computation a driver
performs on one machine's store stands for that machine's free local
computation, while every word that crosses machines goes through
``sim.exchange``.
"""

from __future__ import annotations

import bisect

from dataclasses import dataclass

from fractions import Fraction

from ..errors import (
    ConfigError,
    EmptyRange,
    InsufficientExtraSpace,
    PayloadTooLarge,
)
from .sim import Sim, SimConfig, ceil_pow

RECORD_WORDS = 9
_NO_SET = -1


def tree_depth(count: int, b: int) -> int:
    """Rounds for one sweep: smallest L with b**L >= count."""
    if count < 1:
        raise EmptyRange("range must hold at least one machine")
    depth = 0
    reach = 1
    while reach < count:
        reach *= b
        depth += 1
    return depth


def _level_sizes(count: int, b: int) -> list[int]:
    """Prefix sizes per level, from leaves (count) to the root (1)."""
    sizes = [count]
    while sizes[-1] > 1:
        sizes.append(-(-sizes[-1] // b))
    return sizes


def _check_range(sim: Sim, first: int, count: int) -> None:
    if count < 1:
        raise EmptyRange("empty machine range")
    if first < 0 or first + count > sim.cfg.P:
        raise ConfigError(f"range [{first}, {first + count}) outside "
                          f"0..{sim.cfg.P - 1}")


# -- minimum folding ---------------------------------------------------------


def find_minimum(sim: Sim, first: int, count: int, key) -> tuple[int, int, int]:
    """Fold per-machine ``(value, tag)`` candidates to the range minimum.

    Candidates live under ``store[key]``; ties break toward the smaller tag.
    Returns ``(value, tag, rounds)``; the minimum is also left on the range's
    first machine under ``(key, "min")``.  Raises EmptyRange when no machine
    holds a candidate.
    """
    results, rounds = find_minimum_vec(sim, first, count, 1, [key])
    return results[0][0], results[0][1], rounds


def find_minimum_vec(sim: Sim, first: int, count: int, copies: int,
                     keys: list) -> tuple[list[tuple[int, int]], int]:
    """Independent minimum folds over ``copies`` disjoint range copies.

    Copy ``j`` lives on machines ``[first + j*count, first + (j+1)*count)``
    and folds candidates under ``keys[j]``.  All copies advance in lockstep,
    so the round cost equals one scalar fold.
    """
    b = sim.cfg.s_base
    if copies < 1 or len(keys) != copies:
        raise ConfigError("need one key per copy")
    if first + copies * count > sim.cfg.P:
        raise InsufficientExtraSpace(
            f"{copies} copies of {count} machines need "
            f"{first + copies * count} machines, have {sim.cfg.P}")
    _check_range(sim, first, copies * count)
    for j in range(copies):
        base = first + j * count
        if not any(sim.store(base + i).get(keys[j]) is not None
                   for i in range(count)):
            raise EmptyRange(f"no candidate in copy {j}")
    sizes = _level_sizes(count, b)
    depth = len(sizes) - 1
    for j in range(copies):
        base = first + j * count
        for i in range(count):
            cand = sim.store(base + i).get(keys[j])
            if cand is not None:
                sim.store(base + i)[(keys[j], "acc")] = tuple(cand)
    for level in range(1, depth + 1):
        sends = []
        for j in range(copies):
            base = first + j * count
            for i in range(sizes[level - 1]):
                acc = sim.store(base + i).pop((keys[j], "acc"))
                parent = i // b
                if parent == i:
                    sim.store(base + i)[(keys[j], "acc")] = acc
                elif acc is not None:
                    sends.append((base + i, base + parent, list(acc)))
        inboxes = sim.exchange(sends)
        for dst, msgs in inboxes.items():
            store = sim.store(dst)
            key = keys[(dst - first) // count]
            acc = store.get((key, "acc"))
            for _, payload in msgs:
                cand = (payload[0], payload[1])
                if acc is None or cand < tuple(acc):
                    acc = cand
            store[(key, "acc")] = tuple(acc)
    results = []
    for j in range(copies):
        base = first + j * count
        acc = sim.store(base).pop((keys[j], "acc"))
        sim.store(base)[(keys[j], "min")] = tuple(acc)
        results.append((acc[0], acc[1]))
    return results, depth


# -- broadcast ----------------------------------------------------------------


def _max_payload(sim: Sim) -> int:
    return sim.cfg.c_slack - 2


def broadcast(sim: Sim, first: int, count: int, payload: list[int],
              key) -> int:
    """Push one short payload from the range's first machine to all of it."""
    if len(payload) > _max_payload(sim):
        raise PayloadTooLarge(
            f"payload of {len(payload)} words exceeds per-child budget "
            f"{_max_payload(sim)}; use broadcast_long")
    rounds = broadcast_vec(sim, first, count, 1, [payload], [key])
    return rounds


def broadcast_vec(sim: Sim, first: int, count: int, copies: int,
                  payloads: list[list[int]], keys: list) -> int:
    """Parallel scalar broadcasts over disjoint range copies (see vec fold)."""
    b = sim.cfg.s_base
    if copies < 1 or len(payloads) != copies or len(keys) != copies:
        raise ConfigError("need one payload and key per copy")
    if first + copies * count > sim.cfg.P:
        raise InsufficientExtraSpace(
            f"{copies} copies of {count} machines need "
            f"{first + copies * count} machines, have {sim.cfg.P}")
    _check_range(sim, first, copies * count)
    for payload in payloads:
        if len(payload) > _max_payload(sim):
            raise PayloadTooLarge(
                f"payload of {len(payload)} words exceeds per-child budget "
                f"{_max_payload(sim)}")
    sizes = _level_sizes(count, b)
    depth = len(sizes) - 1
    for j in range(copies):
        sim.store(first + j * count)[keys[j]] = list(payloads[j])
    for level in range(depth, 0, -1):
        sends = []
        for j in range(copies):
            base = first + j * count
            for i in range(sizes[level]):
                value = sim.store(base + i)[keys[j]]
                for child in range(i * b, min((i + 1) * b, sizes[level - 1])):
                    if child >= sizes[level]:  # lower personas got it above
                        sends.append((base + i, base + child, list(value)))
        inboxes = sim.exchange(sends)
        for dst, msgs in inboxes.items():
            key = keys[(dst - first) // count]
            for _, payload in msgs:
                sim.store(dst)[key] = list(payload)
    return depth


def broadcast_long(sim: Sim, first: int, count: int, payload: list[int],
                   key) -> int:
    """Pipelined broadcast for payloads beyond the per-child budget.

    The payload is cut into maximal chunks which stream down the tree one
    level behind each other: ``depth + chunks - 1`` rounds.
    """
    _check_range(sim, first, count)
    b = sim.cfg.s_base
    cap = _max_payload(sim)
    chunks = [list(payload[i:i + cap]) for i in range(0, len(payload), cap)]
    if not chunks:
        chunks = [[]]
    sizes = _level_sizes(count, b)
    depth = len(sizes) - 1
    if depth == 0:
        sim.store(first)[key] = list(payload)
        return 0
    total = depth + len(chunks) - 1
    for step in range(total):
        sends = []
        for level in range(depth, 0, -1):
            chunk_idx = step - (depth - level)
            if not (0 <= chunk_idx < len(chunks)):
                continue
            chunk = chunks[chunk_idx]
            for i in range(sizes[level]):
                for child in range(i * b, min((i + 1) * b, sizes[level - 1])):
                    if child >= sizes[level]:
                        sends.append((first + i, first + child, list(chunk)))
        inboxes = sim.exchange(sends)
        for dst, msgs in inboxes.items():
            store = sim.store(dst)
            for _, chunk in msgs:
                store[(key, "parts")] = (store.get((key, "parts"), [])
                                         + list(chunk))
    for i in range(count):
        store = sim.store(first + i)
        parts = store.pop((key, "parts"))
        store[key] = parts if parts is not None else list(payload)
    return total


# -- scheduled record routing -------------------------------------------------


def route_records(sim: Sim, moves: list[tuple[int, int, list[tuple]]],
                  width: int, dst_key) -> int:
    """Deliver record batches under per-round I/O budgets of S/2 per side.

    ``moves`` holds ``(src, dst, records)`` with fixed ``width`` words per
    record.  The transfer schedule is greedy and deterministic; queued
    records stay on (and are charged to) the source machine until the round
    that carries them.  Received records append to ``store[dst_key]``.
    """
    budget = sim.cfg.S // 2
    if width + 2 > budget:
        raise ConfigError(f"record width {width} cannot move under budget "
                          f"{budget}")
    queues: dict[tuple[int, int], int] = {}
    for src, dst, records in moves:
        if not records:
            continue
        if src == dst:
            store = sim.store(src)
            store[dst_key] = store.get(dst_key, []) + list(records)
            continue
        qkey = ("routeq", dst_key, dst)
        store = sim.store(src)
        store[qkey] = store.get(qkey, []) + list(records)
        queues[(src, dst)] = len(store[qkey])
    rounds = 0
    while queues:
        out_rem = {}
        in_rem = {}
        sends = []
        plan: list[tuple[int, int, int]] = []
        for src, dst in sorted(queues):
            o = out_rem.get(src, budget)
            i = in_rem.get(dst, budget)
            room = min(o, i) - 2
            if room < width:
                continue
            take = min(room // width, queues[(src, dst)])
            cost = take * width + 2
            out_rem[src] = o - cost
            in_rem[dst] = i - cost
            plan.append((src, dst, take))
        for src, dst, take in plan:
            qkey = ("routeq", dst_key, dst)
            store = sim.store(src)
            pending = store[qkey]
            chunk, rest = pending[:take], pending[take:]
            if rest:
                store[qkey] = rest
                queues[(src, dst)] = len(rest)
            else:
                del store[qkey]
                del queues[(src, dst)]
            flat: list[int] = []
            for rec in chunk:
                flat.extend(rec)
            sends.append((src, dst, flat))
        inboxes = sim.exchange(sends)
        rounds += 1
        for dst, msgs in inboxes.items():
            store = sim.store(dst)
            got = store.get(dst_key, [])
            for _, flat in msgs:
                got = got + [tuple(flat[i:i + width])
                             for i in range(0, len(flat), width)]
            store[dst_key] = got
    return rounds


# -- distributed sort ----------------------------------------------------------


def _pick_spread(picks: set[int], quota: int) -> list[int]:
    """Trim picked indices to ``quota``, never dropping the endpoints."""
    order = sorted(picks)
    while len(order) > quota:
        order.pop(len(order) // 2)
    return order


def _sample_entries(items: list[tuple[int, int]], quota: int
                    ) -> list[tuple[int, int, int]]:
    """Weighted evenly spaced samples of a sorted (key, pos) list.

    The first and last items always survive (for quota >= 2): the group
    minimum must reach the root so splitters can be kept strictly above it,
    which is what guarantees every refinement pass splits the records.
    """
    total = len(items)
    if total == 0 or quota < 1:
        return []
    quota = min(quota, total)
    picks = {0, total - 1}
    for j in range(quota):
        picks.add((2 * j + 1) * total // (2 * quota))
    order = _pick_spread(picks, quota)
    base, rem = divmod(total, len(order))
    return [(items[idx][0], items[idx][1], base + (1 if j < rem else 0))
            for j, idx in enumerate(order)]


def _thin_entries(entries: list[tuple[int, int, int]], quota: int
                  ) -> list[tuple[int, int, int]]:
    """Re-sample weighted entries down to ``quota`` by cumulative weight.

    Both endpoints always survive (for quota >= 2), so group minima and
    maxima stay visible through every merge level.
    """
    total = sum(w for _, _, w in entries)
    if total == 0 or len(entries) <= quota:
        return list(entries)
    picks = {0, len(entries) - 1}
    acc = 0
    idx = 0
    for j in range(quota):
        target = (2 * j + 1) * total // (2 * quota)
        while idx < len(entries) - 1 and acc + entries[idx][2] <= target:
            acc += entries[idx][2]
            idx += 1
        picks.add(idx)
    order = _pick_spread(picks, quota)
    base, rem = divmod(total, len(order))
    return [(entries[idx][0], entries[idx][1], base + (1 if j < rem else 0))
            for j, idx in enumerate(order)]


def _bucket_of(kp: tuple[int, int], spl: list[tuple[int, int]]) -> int:
    """Index of the splitter interval holding the augmented key ``kp``."""
    lo, hi = 0, len(spl)
    while lo < hi:
        mid = (lo + hi) // 2
        if kp < spl[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _proportional_sizes(weights: list[int], gcount: int) -> list[int]:
    """Split ``gcount`` machines across buckets proportionally to weight.

    Every non-empty bucket gets at least one machine; empty buckets get
    none.  Deterministic largest-remainder rounding keeps the total exact.
    """
    parts = len(weights)
    total = sum(weights)
    if total == 0:
        base, extra = divmod(gcount, parts)
        return [base + (1 if j < extra else 0) for j in range(parts)]
    sizes = [0 if w == 0 else max(1, w * gcount // total) for w in weights]
    diff = gcount - sum(sizes)
    grow = sorted(range(parts),
                  key=lambda j: (-(weights[j] * gcount % total), j))
    idx = 0
    while diff > 0:
        j = grow[idx % parts]
        if weights[j] > 0:
            sizes[j] += 1
            diff -= 1
        idx += 1
    shrink = sorted(range(parts),
                    key=lambda j: (weights[j] * gcount % total, j))
    idx = 0
    while diff < 0:
        j = shrink[idx % parts]
        if sizes[j] > 1:
            sizes[j] -= 1
            diff += 1
        idx += 1
    return sizes


def mpc_sort(sim: Sim, first: int, count: int, key, key_fn) -> int:
    """Stable distributed sort of the records under ``store[key]``.

    ``key_fn(record)`` must yield a single word.  Stability comes from
    extending every key with the record's original global position.  The
    sort refines machine ranges ``S_base``-ways per pass: every active group
    samples its records up its own tree in lockstep with the other groups,
    the group root picks ``S_base - 1`` weighted-quantile splitters, those
    are broadcast inside the group, exact bucket counts are folded back up
    so the root can size each sub-range proportionally to its true weight,
    and records then move round-robin into their key interval's sub-range.
    Proportional sizing keeps every pass balanced even when the sampled
    splitters are off.  After the passes every machine holds one key
    interval and sorts it locally.
    """
    _check_range(sim, first, count)
    start_rounds = sim.rounds
    b = sim.cfg.s_base
    quota = _max_payload(sim) // 3
    if quota < 2:
        raise ConfigError(
            "per-message budget too small to carry two sample entries; "
            "the sort needs c_slack >= 8")
    # local stability tags: two extra words per record
    rec_width: int | None = None
    for i in range(count):
        store = sim.store(first + i)
        items = store.get(key, [])
        for r in items:
            if not isinstance(r, tuple):
                raise ConfigError("mpc_sort expects tuple records")
            if rec_width is None:
                rec_width = len(r)
            elif len(r) != rec_width:
                raise ConfigError("mpc_sort records must share one width")
        aug = sorted(((key_fn(r), (i << 32) | idx) + tuple(r)
                      for idx, r in enumerate(items)))
        store[key] = aug
    if rec_width is None:
        rec_width = 1  # no records anywhere; nothing will move
    width = 2 + rec_width
    # refinement arity: a parent folds b - 1 count vectors of parts + 2
    # words in one round, so parts + 2 must stay within c_slack
    pcap = max(2, sim.cfg.c_slack - 2)
    groups = [(first, count)]
    while groups and max(c for _, c in groups) > 1:
        plans = []  # (gfirst, gcount, level sizes)
        parts_of = {}
        for gfirst, gcount in groups:
            if gcount == 1:
                continue
            plans.append((gfirst, gcount, _level_sizes(gcount, b)))
            parts_of[gfirst] = min(b, gcount, pcap)
        if not plans:
            break
        group_list = [(gf, gc) for gf, gc, _ in plans]
        # 1) sampling sweeps, all groups in lockstep
        for gfirst, gcount, sizes in plans:
            for i in range(gcount):
                store = sim.store(gfirst + i)
                samples = _sample_entries(
                    [(r[0], r[1]) for r in store.get(key, [])], quota)
                store[(key, "smp")] = [x for e in samples for x in e]
        max_depth = max(len(sizes) - 1 for _, _, sizes in plans)
        root_pools = {}
        for level in range(1, max_depth + 1):
            sends = []
            for gfirst, gcount, sizes in plans:
                if level >= len(sizes):
                    continue
                for i in range(sizes[level - 1]):
                    store = sim.store(gfirst + i)
                    flat = store.pop((key, "smp")) or []
                    parent = i // b
                    if parent == i:
                        store[(key, "pool")] = (
                            (store.get((key, "pool")) or []) + list(flat))
                    elif flat:
                        sends.append((gfirst + i, gfirst + parent,
                                      list(flat)))
            inboxes = sim.exchange(sends)
            for gfirst, gcount, sizes in plans:
                if level >= len(sizes):
                    continue
                last = level == len(sizes) - 1
                r_root = max(quota, 2 * (parts_of[gfirst] - 1))
                for i in range(sizes[level]):
                    mid = gfirst + i
                    msgs = inboxes.get(mid, [])
                    store = sim.store(mid)
                    pool_flat = store.pop((key, "pool")) or []
                    merged = sorted(tuple(pool_flat[x:x + 3])
                                    for x in range(0, len(pool_flat), 3))
                    target = r_root if last else quota
                    for _, flat in msgs:
                        child = sorted(tuple(flat[x:x + 3])
                                       for x in range(0, len(flat), 3))
                        merged = _thin_entries(
                            sorted(merged + child), target)
                    if last:
                        root_pools[gfirst] = merged
                        store[(key, "pool")] = [x for e in merged for x in e]
                    else:
                        thinned = _thin_entries(merged, quota)
                        store[(key, "smp")] = [x for e in thinned
                                               for x in e]
        # 2) each group root picks its splitters; broadcast inside the group
        payloads = {}
        for gfirst, gcount, sizes in plans:
            parts = parts_of[gfirst]
            entries = root_pools.get(gfirst, [])
            sim.store(gfirst).pop((key, "pool"))
            total_w = sum(e[2] for e in entries)
            # Splitters must be strictly increasing and strictly above the
            # group minimum (always sampled): then bucket 0 and every
            # splitter's own bucket are non-empty, so each pass provably
            # splits the group's records and the refinement terminates.
            distinct = []
            for e in entries:
                kp = (e[0], e[1])
                if not distinct or kp != distinct[-1]:
                    distinct.append(kp)
            spl = []
            acc = 0
            idx = 0
            prev = 0
            for j in range(1, parts):
                if not entries:
                    break
                target = j * total_w // parts
                while (idx < len(entries) - 1
                       and acc + entries[idx][2] <= target):
                    acc += entries[idx][2]
                    idx += 1
                kp = (entries[idx][0], entries[idx][1])
                pos = max(bisect.bisect_left(distinct, kp), prev + 1)
                if pos >= len(distinct):
                    break
                spl.append(distinct[pos])
                prev = pos
            payloads[gfirst] = [x for s in spl for x in s]
        _grouped_broadcast(sim, group_list, payloads, (key, "spl"))
        # 3) exact bucket counts up each group tree; root sizes sub-ranges
        for gfirst, gcount, sizes in plans:
            for i in range(gcount):
                store = sim.store(gfirst + i)
                spl_flat = store.get((key, "spl")) or []
                spl = [tuple(spl_flat[x:x + 2])
                       for x in range(0, len(spl_flat), 2)]
                cnt = [0] * parts_of[gfirst]
                for rec in store.get(key) or []:
                    cnt[_bucket_of((rec[0], rec[1]), spl)] += 1
                store[(key, "cnt")] = cnt
        for level in range(1, max_depth + 1):
            sends = []
            for gfirst, gcount, sizes in plans:
                if level >= len(sizes):
                    continue
                for i in range(sizes[level - 1]):
                    store = sim.store(gfirst + i)
                    cnt = store.pop((key, "cnt"))
                    parent = i // b
                    if parent == i:
                        store[(key, "cntown")] = list(cnt)
                    else:
                        sends.append((gfirst + i, gfirst + parent,
                                      list(cnt)))
            inboxes = sim.exchange(sends)
            for gfirst, gcount, sizes in plans:
                if level >= len(sizes):
                    continue
                for i in range(sizes[level]):
                    mid = gfirst + i
                    store = sim.store(mid)
                    acc = store.pop((key, "cntown")) or [0] * parts_of[gfirst]
                    for _, payload in inboxes.get(mid, []):
                        acc = [a + c for a, c in zip(acc, payload)]
                    store[(key, "cnt")] = acc
        weights_by_group = {}
        sizes_by_group = {}
        size_payloads = {}
        for gfirst, gcount, sizes in plans:
            weights = list(sim.store(gfirst).pop((key, "cnt")))
            sub_sizes = _proportional_sizes(weights, gcount)
            weights_by_group[gfirst] = weights
            sizes_by_group[gfirst] = sub_sizes
            size_payloads[gfirst] = list(sub_sizes)
        _grouped_broadcast(sim, group_list, size_payloads, (key, "siz"))
        # 4) bucket into sub-ranges, round-robin within each
        moves = []
        for gfirst, gcount, sizes in plans:
            for i in range(gcount):
                mid = gfirst + i
                store = sim.store(mid)
                spl_flat = store.pop((key, "spl")) or []
                spl = [tuple(spl_flat[x:x + 2])
                       for x in range(0, len(spl_flat), 2)]
                sub_sizes = store.pop((key, "siz")) or []
                subs = []
                cur = gfirst
                for scount in sub_sizes:
                    subs.append((cur, scount))
                    cur += scount
                items = store.pop(key) or []
                buckets: dict[int, list[tuple]] = {}
                for rec in items:
                    buckets.setdefault(
                        _bucket_of((rec[0], rec[1]), spl), []).append(rec)
                for j, recs in sorted(buckets.items()):
                    sfirst, scount = subs[j]
                    spread: dict[int, list[tuple]] = {}
                    for t, rec in enumerate(recs):
                        dest = sfirst + (i + t) % scount
                        spread.setdefault(dest, []).append(rec)
                    for dest, chunk in sorted(spread.items()):
                        moves.append((mid, dest, chunk))
        route_records(sim, moves, width=width, dst_key=(key, "in"))
        for gfirst, gcount, sizes in plans:
            for i in range(gcount):
                store = sim.store(gfirst + i)
                arrived = store.pop((key, "in")) or []
                store[key] = sorted(tuple(r) for r in arrived)
        nxt = []
        for gfirst, gcount, sizes in plans:
            cur = gfirst
            for w, scount in zip(weights_by_group[gfirst],
                                 sizes_by_group[gfirst]):
                # a sub-range holding one record is ordered wherever
                # that record sits; only w >= 2 needs further passes
                if scount >= 1 and w > 1:
                    nxt.append((cur, scount))
                cur += scount
        groups = nxt + [(gf, gc) for gf, gc in groups if gc == 1]
    # local merge and unwrap
    for i in range(count):
        store = sim.store(first + i)
        aug = sorted(store.get(key) or [])
        store[key] = [tuple(r[2:]) for r in aug]
    return sim.rounds - start_rounds


def _grouped_broadcast(sim: Sim, groups: list[tuple[int, int]],
                       payloads: dict, dkey) -> int:
    """Broadcast one payload per group root inside each group, in lockstep.

    Payloads longer than the per-message budget stream down each group's
    tree in pipelined chunks, exactly like the single-range long broadcast.
    """
    cap = _max_payload(sim)
    b = sim.cfg.s_base
    chunked = {}
    for gfirst, gcount in groups:
        payload = payloads.get(gfirst, [])
        chunked[gfirst] = ([list(payload[i:i + cap])
                            for i in range(0, len(payload), cap)]
                           or [[]])
    max_steps = 0
    metas = []
    for gfirst, gcount in groups:
        sizes = _level_sizes(gcount, b)
        depth = len(sizes) - 1
        if depth == 0:
            sim.store(gfirst)[dkey] = list(payloads.get(gfirst, []))
            continue
        steps = depth + len(chunked[gfirst]) - 1
        max_steps = max(max_steps, steps)
        metas.append((gfirst, sizes, depth))
    for step in range(max_steps):
        sends = []
        for gfirst, sizes, depth in metas:
            chunks = chunked[gfirst]
            for level in range(depth, 0, -1):
                chunk_idx = step - (depth - level)
                if not (0 <= chunk_idx < len(chunks)):
                    continue
                chunk = chunks[chunk_idx]
                for i in range(sizes[level]):
                    for child in range(i * b, min((i + 1) * b,
                                                  sizes[level - 1])):
                        if child >= sizes[level]:
                            sends.append((gfirst + i, gfirst + child,
                                          list(chunk)))
        inboxes = sim.exchange(sends)
        for dst, msgs in inboxes.items():
            store = sim.store(dst)
            for _, chunk in msgs:
                store[(dkey, "parts")] = ((store.get((dkey, "parts")) or [])
                                          + list(chunk))
    for gfirst, sizes, depth in metas:
        for i in range(sizes[0]):
            store = sim.store(gfirst + i)
            parts = store.pop((dkey, "parts"))
            store[dkey] = (list(payloads.get(gfirst, []))
                           if parts is None else parts)
    return max_steps


# -- segmented and plain scans --------------------------------------------------


def _leaf_summary(sets: list[int]) -> tuple[int, int, int, int]:
    """(first set, last set, trailing-run length, pure flag) of one machine."""
    if not sets:
        return (_NO_SET, _NO_SET, 0, 1)
    first, last = sets[0], sets[-1]
    run = 1
    while run < len(sets) and sets[-1 - run] == last:
        run += 1
    pure = 1 if first == last and run == len(sets) else 0
    return (first, last, run, pure)


def _join_summaries(acc, child):
    if child[0] == _NO_SET:
        return acc
    if acc[0] == _NO_SET:
        return child
    extend = child[3] and child[0] == acc[1]
    run = child[2] + (acc[2] if extend else 0)
    pure = 1 if (acc[3] and child[3] and acc[1] == child[0]) else 0
    return (acc[0], child[1], run, pure)


def _advance_carry(carry, child):
    """Carry after passing one child: (set, preceding same-set count)."""
    if child[0] == _NO_SET:
        return carry
    if child[3] and child[0] == carry[0]:
        return (carry[0], carry[1] + child[2])
    return (child[1], child[2])


def segmented_rank(sim: Sim, first: int, count: int, key, set_fn, assign_fn,
                   reverse: bool = False) -> int:
    """Rank every record within its set across the range (records pre-sorted).

    ``set_fn(record)`` names the segment; ``assign_fn(record, rank)`` returns
    the rewritten record, where ``rank`` counts same-set records strictly
    before it in range order (strictly after, with ``reverse``).  Runs one
    sweep up and one down: ``2 * ceil(log_b count)`` rounds.
    """
    _check_range(sim, first, count)
    b = sim.cfg.s_base

    def phys(logical: int) -> int:
        return first + (count - 1 - logical if reverse else logical)

    def local_sets(mid: int) -> list[int]:
        items = sim.store(mid).get(key, [])
        sets = [set_fn(r) for r in items]
        return sets[::-1] if reverse else sets

    sizes = _level_sizes(count, b)
    depth = len(sizes) - 1
    for j in range(count):
        mid = phys(j)
        sim.store(mid)[(key, "sum")] = _leaf_summary(local_sets(mid))
    # up-sweep: fold child summaries, remembering per-child prefix state
    for level in range(1, depth + 1):
        sends = []
        for j in range(sizes[level - 1]):
            mid = phys(j)
            summ = sim.store(mid).pop((key, "sum"))
            parent = j // b
            if parent == j:
                sim.store(mid)[(key, "own")] = tuple(summ)
            else:
                sends.append((mid, phys(parent), list(summ)))
        inboxes = sim.exchange(sends)
        parents = {}
        for dst, msgs in inboxes.items():
            parents.setdefault(dst, []).extend(msgs)
        for j in range(sizes[level]):
            mid = phys(j)
            store = sim.store(mid)
            own = store.pop((key, "own"))
            children: list[tuple] = []
            if own is not None:
                children.append((mid, tuple(own)))
            for src, payload in parents.get(mid, []):
                children.append((src, tuple(payload)))
            children.sort(key=lambda t: (count - 1 - (t[0] - first)
                                         if reverse else t[0] - first))
            acc = (_NO_SET, _NO_SET, 0, 1)
            for _, ch in children:
                acc = _join_summaries(acc, ch)
            store[(key, "sum")] = tuple(acc)
            store[(key, "chsum", level)] = [x for _, ch in children
                                            for x in ch]
    sim.store(phys(0)).pop((key, "sum"))
    # down-sweep: push (set, count-before) carries to each child
    sim.store(phys(0))[(key, "carry")] = (_NO_SET, 0)
    for level in range(depth, 0, -1):
        sends = []
        for j in range(sizes[level]):
            mid = phys(j)
            store = sim.store(mid)
            carry = tuple(store.pop((key, "carry")))
            chsum = store.pop((key, "chsum", level)) or []
            children = [tuple(chsum[x:x + 4])
                        for x in range(0, len(chsum), 4)]
            cur = carry
            for rank, child in enumerate(children):
                child_logical = j * b + rank
                cmid = phys(child_logical)
                if cmid == mid:
                    store[(key, "carry")] = cur
                else:
                    sends.append((mid, cmid, [cur[0], cur[1]]))
                cur = _advance_carry(cur, child)
        inboxes = sim.exchange(sends)
        for dst, msgs in inboxes.items():
            for _, payload in msgs:
                sim.store(dst)[(key, "carry")] = (payload[0], payload[1])
    # local assignment
    for j in range(count):
        mid = phys(j)
        store = sim.store(mid)
        carry = tuple(store.pop((key, "carry")) or (_NO_SET, 0))
        items = list(store.get(key, []))
        order = range(len(items) - 1, -1, -1) if reverse else range(len(items))
        run_set = carry[0]
        run_len = carry[1]
        out = dict()
        for idx in order:
            s = set_fn(items[idx])
            if s != run_set:
                run_set = s
                run_len = 0
            out[idx] = assign_fn(items[idx], run_len)
            run_len += 1
        store[key] = [out[i] for i in range(len(items))]
    return 2 * depth


def prefix_sum(sim: Sim, first: int, count: int, value_fn, assign_fn) -> int:
    """Plain exclusive prefix sum of one value per machine over the range.

    ``value_fn(mid, store)`` yields the machine's contribution;
    ``assign_fn(mid, store, before)`` consumes the sum over earlier machines.
    One word per tree edge in each direction.
    """
    _check_range(sim, first, count)
    b = sim.cfg.s_base
    sizes = _level_sizes(count, b)
    depth = len(sizes) - 1
    for i in range(count):
        store = sim.store(first + i)
        store[(first, "psum")] = value_fn(first + i, store)
    for level in range(1, depth + 1):
        sends = []
        for i in range(sizes[level - 1]):
            store = sim.store(first + i)
            total = store.pop((first, "psum"))
            parent = i // b
            if parent == i:
                store[(first, "own")] = total
            else:
                sends.append((first + i, first + parent, [total]))
        inboxes = sim.exchange(sends)
        gathered = {}
        for dst, msgs in inboxes.items():
            gathered[dst] = msgs
        for i in range(sizes[level]):
            store = sim.store(first + i)
            own = store.pop((first, "own"))
            children = []
            if own is not None:
                children.append((first + i, own))
            for src, payload in gathered.get(first + i, []):
                children.append((src, payload[0]))
            children.sort()
            acc = 0
            flat = []
            for _, val in children:
                flat.append(acc)
                acc += val
            store[(first, "psum")] = acc
            store[(first, "chpre", level)] = flat
    sim.store(first).pop((first, "psum"))
    sim.store(first)[(first, "carry")] = 0
    for level in range(depth, 0, -1):
        sends = []
        for i in range(sizes[level]):
            store = sim.store(first + i)
            carry = store.pop((first, "carry"))
            flat = store.pop((first, "chpre", level)) or []
            for rank, offset in enumerate(flat):
                child = i * b + rank
                if child == i:
                    store[(first, "carry")] = carry + offset
                else:
                    sends.append((first + i, first + child,
                                  [carry + offset]))
        inboxes = sim.exchange(sends)
        for dst, msgs in inboxes.items():
            for _, payload in msgs:
                sim.store(dst)[(first, "carry")] = payload[0]
    for i in range(count):
        store = sim.store(first + i)
        before = store.pop((first, "carry")) or 0
        assign_fn(first + i, store, before)
    return 2 * depth


def mpc_index(sim: Sim, first: int, count: int, key, sort_key_fn, set_fn,
              assign_fn) -> int:
    """Sort records, then hand each its 0-based rank within its set."""
    rounds = mpc_sort(sim, first, count, key, sort_key_fn)
    rounds += segmented_rank(sim, first, count, key, set_fn, assign_fn)
    return rounds


# -- directed edge-tuple layout -------------------------------------------------
#
# The distributed state for graph work is one nine-word record per directed
# edge (u, v):
#
#     (u, v, w, i_u, i_v, r_u, r_v, deg_u, deg_v)
#
# where i_u is the 1-based rank of this record among u's edges, deg_u is u's
# degree, and r_u is the index of the first machine of u's block M(u).  Each
# block starts at a machine boundary and spans ceil(deg_u / S_base) machines
# holding at most S_base records each, so the machine for any rank is pure
# arithmetic: r_u + (i_u - 1) // S_base.

_F_U, _F_V, _F_W = 0, 1, 2
_F_IU, _F_IV = 3, 4
_F_RU, _F_RV = 5, 6
_F_DU, _F_DV = 7, 8


def _flow_briefs(sim: Sim, groups: dict, dst_key, width: int) -> int:
    """Stream short derived messages under I/O budgets of S/2 per side.

    ``groups[(src, dst)]`` holds fixed-``width`` rows whose content is
    derived from records already resident on ``src``, so nothing extra is
    charged there; arrivals append row lists under ``store[dst_key]``.
    """
    budget = sim.cfg.S // 2
    if width + 2 > budget:
        raise ConfigError(f"brief width {width} cannot move under budget "
                          f"{budget}")
    pending = {}
    for (src, dst), rows in groups.items():
        if not rows:
            continue
        if src == dst:
            store = sim.store(src)
            store[dst_key] = (store.get(dst_key) or []) + [list(r)
                                                           for r in rows]
            continue
        pending[(src, dst)] = [list(r) for r in rows]
    rounds = 0
    while pending:
        out_rem: dict[int, int] = {}
        in_rem: dict[int, int] = {}
        sends = []
        for src, dst in sorted(pending):
            o = out_rem.get(src, budget)
            i = in_rem.get(dst, budget)
            room = min(o, i) - 2
            if room < width:
                continue
            rows = pending[(src, dst)]
            take = min(room // width, len(rows))
            cost = take * width + 2
            out_rem[src] = o - cost
            in_rem[dst] = i - cost
            chunk, rest = rows[:take], rows[take:]
            if rest:
                pending[(src, dst)] = rest
            else:
                del pending[(src, dst)]
            flat: list[int] = []
            for r in chunk:
                flat.extend(r)
            sends.append((src, dst, flat))
        inboxes = sim.exchange(sends)
        rounds += 1
        for dst, msgs in inboxes.items():
            store = sim.store(dst)
            got = store.get(dst_key) or []
            for _, flat in msgs:
                got = got + [list(flat[i:i + width])
                             for i in range(0, len(flat), width)]
            store[dst_key] = got
    return rounds


def plan_sim(n: int, m: int, degrees, gamma, *, c_slack: int = 32,
             c_p: int = 8, alpha: float = 1.0, margin: int = 8,
             lanes: int = 1, s_min: int = 0, p_min: int = 0,
             strict: bool = False, seed: int = 0) -> SimConfig:
    """Size a simulation that can hold the edge-block layout of a graph.

    The per-vertex blocks claim ``sum(ceil(deg / S_base))`` aligned machines
    (times ``lanes`` when block copies are planned), and the raw edge scatter
    must fit the sort's working headroom, so the machine count is raised
    until both hold.  ``degrees`` is any iterable of vertex degrees.
    """
    s_base = ceil_pow(n, Fraction(gamma))
    p_align = sum(-(-d // s_base) for d in degrees if d > 0)
    need = max(p_min, lanes * p_align + margin)
    for _ in range(4):
        cfg = SimConfig(n, gamma=Fraction(gamma), alpha=alpha, m=m, c_p=c_p,
                        c_slack=c_slack, s_min=s_min, p_min=need,
                        strict=strict, seed=seed)
        spread = edge_scatter_spread(cfg)
        if m * spread <= cfg.P * cfg.S:
            return cfg
        need = max(need, -(-m * spread // cfg.S) + margin)
    return cfg


def edge_scatter_spread(cfg) -> int:
    """Words to budget per scattered (u, v, w) item.

    Each item expands in place to two nine-word records which the first sort
    tags with two extra words, and the machine must still fit the broadcast
    splitter list (two words per machine boundary) and a sample pool of
    roughly ``c_slack`` words beside them.
    """
    fixed = 2 * (cfg.P - 1) + 2 * cfg.c_slack
    items = max(1, (cfg.S - fixed) // 22)
    return cfg.S // items


@dataclass(frozen=True)
class EdgeLayout:
    """Directory of the per-vertex machine blocks (driver-side bookkeeping)."""

    n: int
    s_base: int
    key: object
    start: dict          # vertex -> first machine of its block
    group: dict          # vertex -> number of machines in its block
    degree: dict         # vertex -> degree
    machines_used: int

    def span(self, v: int) -> range:
        return range(self.start[v], self.start[v] + self.group[v])

    def machine_of(self, v: int, rank: int) -> int:
        """Machine holding v's record of 1-based rank ``rank``."""
        return self.start[v] + (rank - 1) // self.s_base


def build_edge_tuples(sim: Sim, n: int, input_key="input",
                      key="M") -> tuple[EdgeLayout, int]:
    """Turn scattered (u, v, w) items into aligned per-vertex edge blocks.

    Every undirected edge becomes two directed records which are sorted,
    ranked, cross-filled with their mirror's fields, and routed so that M(v)
    occupies its own aligned machine block.  Returns the block directory and
    the rounds spent.
    """
    start_rounds = sim.rounds
    P = sim.cfg.P
    b = sim.cfg.s_base
    bits = n.bit_length()
    blank = (0, 0, 0, 0, 0, 0)
    for mid in range(P):
        store = sim.store(mid)
        items = store.pop(input_key)
        if not items:
            continue
        recs = []
        for u, v, w in items:
            recs.append((u, v, w) + blank)
            recs.append((v, u, w) + blank)
        store[key] = recs
    # rank within each source vertex, then degrees from the reverse pass
    mpc_sort(sim, 0, P, key, lambda r: (r[_F_U] << bits) | r[_F_V])
    segmented_rank(sim, 0, P, key,
                   set_fn=lambda r: r[_F_U],
                   assign_fn=lambda r, k: r[:_F_IU] + (k + 1,) + r[_F_IU + 1:])
    segmented_rank(sim, 0, P, key,
                   set_fn=lambda r: r[_F_U],
                   assign_fn=lambda r, k: (r[:_F_DU] + (r[_F_IU] + k,)
                                           + r[_F_DU + 1:]),
                   reverse=True)

    # block starts: prefix-sum machine counts contributed at each first record
    def groups_of(rec) -> int:
        return -(-rec[_F_DU] // b)

    def local_total(mid, store):
        return sum(groups_of(r) for r in store.get(key, [])
                   if r[_F_IU] == 1)

    def assign_starts(mid, store, before):
        items = store.get(key, [])
        out = []
        lp = 0
        for r in items:
            g = groups_of(r)
            if r[_F_IU] == 1:
                r_u = before + lp
                lp += g
            else:
                r_u = before + lp - g
            out.append(r[:_F_RU] + (r_u,) + r[_F_RU + 1:])
        store[key] = out

    prefix_sum(sim, 0, P, local_total, assign_starts)
    # pair each record with its mirror at a hashed rendezvous machine and
    # swap (i, deg, r) across; the six-word briefs are derived from records
    # that stay resident, so only the rendezvous copies occupy extra memory
    def rendezvous(u: int, v: int) -> int:
        lo, hi = (u, v) if u < v else (v, u)
        return (lo * 1000003 + hi) % P

    rdv_key = (key, "rdv")
    brief_groups: dict[tuple[int, int], list[list[int]]] = {}
    for mid in range(P):
        for rec in sim.store(mid).get(key) or []:
            dst = rendezvous(rec[_F_U], rec[_F_V])
            brief = [rec[_F_U], rec[_F_V], rec[_F_IU], rec[_F_DU],
                     rec[_F_RU], mid]
            brief_groups.setdefault((mid, dst), []).append(brief)
    _flow_briefs(sim, brief_groups, rdv_key, width=6)
    reply_groups: dict[tuple[int, int], list[list[int]]] = {}
    for mid in range(P):
        store = sim.store(mid)
        briefs = store.pop(rdv_key)
        if not briefs:
            continue
        by_pair: dict[tuple[int, int], list[tuple]] = {}
        for bf in briefs:
            pair = (min(bf[0], bf[1]), max(bf[0], bf[1]))
            by_pair.setdefault(pair, []).append(tuple(bf))
        for pair, two in by_pair.items():
            if len(two) != 2 or two[0][:2] != (two[1][1], two[1][0]):
                raise ConfigError(f"edge {pair} lacks a distinct mirror")
            for me, other in ((0, 1), (1, 0)):
                home = two[me][5]
                reply_groups.setdefault((mid, home), []).append(
                    list(two[other][:5]))
    _flow_briefs(sim, reply_groups, rdv_key, width=5)
    for mid in range(P):
        store = sim.store(mid)
        replies = store.pop(rdv_key)
        items = store.get(key)
        if not items:
            if replies:
                raise ConfigError("mirror reply reached a recordless machine")
            continue
        by_mirror = {(bf[1], bf[0]): tuple(bf) for bf in replies or []}
        out = []
        for rec in items:
            pu, pv, pi, pd, pr = by_mirror[(rec[_F_U], rec[_F_V])]
            rec = (rec[:_F_IV] + (pi,) + rec[_F_IV + 1:])
            rec = (rec[:_F_RV] + (pr,) + rec[_F_RV + 1:])
            rec = (rec[:_F_DV] + (pd,) + rec[_F_DV + 1:])
            out.append(rec)
        store[key] = out
    # final aligned route
    moves = []
    for mid in range(P):
        store = sim.store(mid)
        items = store.pop(key)
        if not items:
            continue
        by_dest: dict[int, list] = {}
        for rec in items:
            dest = rec[_F_RU] + (rec[_F_IU] - 1) // b
            by_dest.setdefault(dest, []).append(rec)
        for dest, recs in sorted(by_dest.items()):
            if dest >= P:
                raise ConfigError(
                    f"edge blocks need machine {dest} but P={P}; "
                    "raise c_p or p_min")
            moves.append((mid, dest, recs))
    route_records(sim, moves, width=RECORD_WORDS, dst_key=key)
    start: dict = {}
    group: dict = {}
    degree: dict = {}
    used = 0
    for mid in range(P):
        store = sim.store(mid)
        items = store.get(key)
        if not items:
            continue
        items = sorted(items, key=lambda r: (r[_F_U], r[_F_IU]))
        store[key] = items
        if len(items) > b:
            raise ConfigError("block machine over S_base records")
        for rec in items:
            u = rec[_F_U]
            if rec[_F_IU] == 1:
                start[u] = rec[_F_RU]
                degree[u] = rec[_F_DU]
                group[u] = groups_of(rec)
            used = max(used, rec[_F_RU] + groups_of(rec))
    layout = EdgeLayout(n=n, s_base=b, key=key, start=start, group=group,
                        degree=degree, machines_used=used)
    return layout, sim.rounds - start_rounds
