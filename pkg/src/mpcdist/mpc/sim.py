"""Round-synchronous machine simulation with strict word budgets.

Machines hold at most ``S`` 64-bit words of state and may send and receive
at most ``S`` words per round (payload plus a 2-word header per message,
charged on both sides).  Budget breaches are recorded in the metrics and,
under ``strict``, also raised as fail-stop errors.

Algorithm drivers orchestrate from a god's-eye position: they may read any
machine's store to decide what runs next (scheduling, convergence detection,
result extraction) at zero cost, but every word that influences another
machine's state must travel through :meth:`Sim.exchange`, which is where all
accounting happens.
"""

from __future__ import annotations

import csv
import io
import json
import math
from contextlib import contextmanager
from fractions import Fraction

from ..errors import ConfigError, IOViolation, MemViolation

HEADER_WORDS = 2
WORD_BITS = 64


def ceil_pow(n: int, exponent: Fraction) -> int:
    """Exact ceil(n ** exponent) for a rational exponent."""
    exponent = Fraction(exponent)
    if n <= 1 or exponent == 0:
        return 1
    p, q = exponent.numerator, exponent.denominator
    target = n ** p
    # smallest s with s^q >= n^p, found by float seed plus integer repair
    s = max(1, int(round(target ** (1.0 / q))))
    while s ** q >= target:
        s -= 1
    s += 1
    while s ** q < target:
        s += 1
    return s


class SimConfig:
    """Machine and budget sizing.

    ``S_base = ceil(n^gamma)`` is the model's capacity unit (tree branching
    factors, per-vertex record alignment); the word budget is ``S = S_base *
    c_slack`` with a floor of ``2 * max(ceil(log2 n), header)`` so headers
    and counters always fit.  The machine count is ``P = ceil(m * alpha *
    c_P / S)`` for input size ``m`` words.
    """

    def __init__(self, n: int, gamma: Fraction = Fraction(1),
                 alpha: float = 1.0, m: int | None = None, c_p: int = 1,
                 c_slack: int = 8, s_min: int = 0, p_min: int = 0,
                 strict: bool = False, seed: int = 0):
        if n < 1:
            raise ConfigError("n must be >= 1")
        gamma = Fraction(gamma)
        if gamma <= 0 or gamma > 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if c_p < 1 or c_slack < 1:
            raise ConfigError("c_p and c_slack must be >= 1")
        if alpha <= 0:
            raise ConfigError("alpha must be positive")
        self.n = n
        self.gamma = gamma
        self.alpha = alpha
        self.m = n if m is None else int(m)
        self.c_p = c_p
        self.c_slack = c_slack
        self.strict = strict
        self.seed = seed
        self.s_base = ceil_pow(n, gamma)
        floor = 2 * max(math.ceil(math.log2(max(n, 2))), HEADER_WORDS)
        self.S = max(self.s_base * c_slack, s_min, floor)
        self.P = max(1, p_min, math.ceil(self.m * alpha * c_p / self.S))

    def __repr__(self):
        return (f"SimConfig(n={self.n}, gamma={self.gamma}, P={self.P}, "
                f"S={self.S}, S_base={self.s_base})")


def _word_count(value) -> int:
    if isinstance(value, int):
        return 1
    if isinstance(value, (list, tuple)):
        return sum(_word_count(x) for x in value)
    raise TypeError(f"machine stores hold ints and int sequences, "
                    f"got {type(value).__name__}")


class MachineStore:
    """Dict of words with incremental usage accounting."""

    __slots__ = ("mid", "_data", "_words", "_sim")

    def __init__(self, mid: int, sim: "Sim"):
        self.mid = mid
        self._data: dict = {}
        self._words = 0
        self._sim = sim

    def __setitem__(self, key, value):
        old = self._data.get(key)
        if old is not None:
            self._words -= _word_count(old)
        self._data[key] = value
        self._words += _word_count(value)
        self._sim._dirty.add(self.mid)

    def __getitem__(self, key):
        return self._data[key]

    def get(self, key, default=None):
        return self._data.get(key, default)

    def __delitem__(self, key):
        self._words -= _word_count(self._data.pop(key))
        self._sim._dirty.add(self.mid)

    def pop(self, key, default=None):
        if key in self._data:
            value = self._data.pop(key)
            self._words -= _word_count(value)
            self._sim._dirty.add(self.mid)
            return value
        return default

    def __contains__(self, key):
        return key in self._data

    def keys(self):
        return self._data.keys()

    def items(self):
        return self._data.items()

    def words(self) -> int:
        return self._words


def scatter_placement(count: int, words_per_item: int, S: int,
                      P: int) -> list[int]:
    """Machine per item: consecutive S-word blocks, round-robin over machines."""
    if words_per_item < 1 or words_per_item > S:
        raise ConfigError(f"item size {words_per_item} does not fit S={S}")
    per_block = S // words_per_item
    return [(i // per_block) % P for i in range(count)]


class Sim:
    """The machines, the round loop, and the metrics."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.stores = [MachineStore(mid, self) for mid in range(cfg.P)]
        self.rounds = 0
        self.messages = 0
        self.words = 0
        self.max_mem = 0
        self.violation_log: list[dict] = []
        self.round_log: list[tuple[int, int]] = []  # (words out, words in)
        self._phases: list[dict] = []
        self._label_stack: list[str] = ["main"]
        self._dirty: set[int] = set()

    # -- state access (free for orchestration) ------------------------------

    def store(self, mid: int) -> MachineStore:
        return self.stores[mid]

    @contextmanager
    def phase(self, label: str):
        self._label_stack.append(label)
        try:
            yield
        finally:
            self._label_stack.pop()

    def _current_label(self) -> str:
        return self._label_stack[-1]

    def _attribute(self, rounds: int, messages: int, words: int) -> None:
        label = self._current_label()
        if self._phases and self._phases[-1]["label"] == label:
            rec = self._phases[-1]
        else:
            rec = {"label": label, "rounds": 0, "messages": 0, "words": 0}
            self._phases.append(rec)
        rec["rounds"] += rounds
        rec["messages"] += messages
        rec["words"] += words

    def _record_violation(self, kind: str, **info) -> None:
        self.violation_log.append({"kind": kind, "round": self.rounds,
                                   **info})

    def _check_mem(self, mids) -> None:
        for mid in sorted(mids):
            usage = self.stores[mid].words()
            if usage > self.max_mem:
                self.max_mem = usage
            if usage > self.cfg.S:
                self._record_violation("mem", machine=mid, words=usage,
                                       limit=self.cfg.S)
                if self.cfg.strict:
                    raise MemViolation(mid, usage, self.cfg.S)

    # -- the round primitive -------------------------------------------------

    def exchange(self, sends: list[tuple[int, int, list[int]]]
                 ) -> dict[int, list[tuple[int, list[int]]]]:
        """Run one communication round.

        ``sends`` holds ``(src, dest, payload)`` triples gathered from every
        machine this round.  Delivery is deterministic: each destination
        receives its messages sorted by ``(source, submission order)``.
        Returns ``dest -> [(source, payload), ...]`` for the next round.
        """
        P = self.cfg.P
        out_words = [0] * P
        in_words = [0] * P
        ordered: list[tuple[int, int, int, list[int]]] = []
        for seq, (src, dst, payload) in enumerate(sends):
            if not (0 <= src < P and 0 <= dst < P):
                raise ConfigError(f"message endpoints out of range: "
                                  f"{src}->{dst}")
            payload = list(payload)
            cost = len(payload) + HEADER_WORDS
            out_words[src] += cost
            in_words[dst] += cost
            ordered.append((dst, src, seq, payload))
        ordered.sort(key=lambda t: (t[0], t[1], t[2]))
        self.rounds += 1
        total = sum(out_words)
        self.messages += len(sends)
        self.words += total
        self.round_log.append((total, total))
        self._attribute(1, len(sends), total)
        for mid in range(P):
            if out_words[mid] > self.cfg.S:
                self._record_violation("io-out", machine=mid,
                                       words=out_words[mid], limit=self.cfg.S)
                if self.cfg.strict:
                    raise IOViolation(mid, out_words[mid], self.cfg.S, "out")
            if in_words[mid] > self.cfg.S:
                self._record_violation("io-in", machine=mid,
                                       words=in_words[mid], limit=self.cfg.S)
                if self.cfg.strict:
                    raise IOViolation(mid, in_words[mid], self.cfg.S, "in")
        touched = set(self._dirty)
        for src, dst, _ in sends:
            touched.add(src)
            touched.add(dst)
        self._check_mem(touched)
        self._dirty = set()
        inboxes: dict[int, list[tuple[int, list[int]]]] = {}
        for dst, src, _, payload in ordered:
            inboxes.setdefault(dst, []).append((src, payload))
        return inboxes

    def advance(self, rounds: int) -> None:
        """Count idle rounds (e.g. waiting for a scheduled slot)."""
        if rounds < 0:
            raise ConfigError("cannot advance a negative round count")
        if rounds:
            self.rounds += rounds
            self.round_log.extend((0, 0) for _ in range(rounds))
            self._attribute(rounds, 0, 0)

    def run_handler_rounds(self, handler, wake: list[int],
                           max_rounds: int | None = None) -> int:
        """Drive ``handler(mid, store, inbox) -> [(dest, payload)]`` rounds.

        Starts by invoking the ``wake`` machines with empty inboxes; keeps
        going while any message is in flight.  Returns rounds consumed.
        """
        start = self.rounds
        inboxes: dict[int, list] = {mid: [] for mid in wake}
        while inboxes:
            if max_rounds is not None and self.rounds - start >= max_rounds:
                break
            sends = []
            for mid in sorted(inboxes):
                out = handler(mid, self.stores[mid], inboxes[mid])
                for dst, payload in out or ():
                    sends.append((mid, dst, payload))
            if not sends:
                break
            inboxes = self.exchange(sends)
        return self.rounds - start

    # -- input placement -----------------------------------------------------

    def scatter_input(self, items: list, words_per_item: int,
                      key: str = "input") -> list[int]:
        """Place fixed-size records block-round-robin; returns machine ids.

        Input loading happens before round zero and is not charged as
        communication; stored words still count against machine memory.
        """
        placement = scatter_placement(len(items), words_per_item, self.cfg.S,
                                      self.cfg.P)
        per_machine: dict[int, list] = {}
        for item, mid in zip(items, placement):
            per_machine.setdefault(mid, []).append(item)
        for mid, chunk in per_machine.items():
            existing = self.stores[mid].get(key, [])
            self.stores[mid][key] = list(existing) + chunk
        self._check_mem(per_machine.keys())
        self._dirty -= set(per_machine.keys())
        return placement

    # -- metrics -------------------------------------------------------------

    @property
    def violations(self) -> int:
        return len(self.violation_log)

    def metrics(self) -> dict:
        return {
            "rounds": self.rounds,
            "phases": [{"label": p["label"], "rounds": p["rounds"]}
                       for p in self._phases],
            "messages": self.messages,
            "words": self.words,
            "max_mem": self.max_mem,
            "violations": self.violations,
            "violation_log": list(self.violation_log),
        }

    def metrics_json(self) -> str:
        return json.dumps(self.metrics(), indent=2)

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["label", "rounds", "messages", "words", "max_mem",
                         "violations"])
        for p in self._phases:
            writer.writerow([p["label"], p["rounds"], p["messages"],
                             p["words"], "", ""])
        writer.writerow(["TOTAL", self.rounds, self.messages, self.words,
                         self.max_mem, self.violations])
        return buf.getvalue()

    def conservation_ok(self) -> bool:
        """Every word sent in round r is received in round r+1."""
        return all(out == inn for out, inn in self.round_log)
