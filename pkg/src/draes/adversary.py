"""Oblivious churn adversary.

The adversary never sees the overlay.  It keeps its own ledger of which ids
are alive (it decides every join and leave, so it knows V_t exactly) and
draws from a private ``random.Random`` stream.  A whole churn sequence can
therefore be generated before the protocol runs.
"""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

STRATEGIES = ("silent", "uniform", "oldest_first", "fringe_growth")


class AdversaryConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ChurnEvent:
    round: int
    removed: tuple[int, ...] = ()
    added: tuple[int, ...] = ()
    attachments: tuple[tuple[int, int], ...] = ()

    def to_json(self) -> str:
        return json.dumps(
            {
                "round": self.round,
                "removed": list(self.removed),
                "added": list(self.added),
                "attachments": [list(p) for p in self.attachments],
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "ChurnEvent":
        obj = json.loads(line)
        return cls(
            round=int(obj["round"]),
            removed=tuple(obj["removed"]),
            added=tuple(obj["added"]),
            attachments=tuple((int(a), int(b)) for a, b in obj["attachments"]),
        )

    def host_load(self) -> Counter:
        return Counter(h for _, h in self.attachments)

    def validate(self, alive_before, delta_h: int) -> None:
        """Check the model constraints against the pre-event alive set."""
        alive_before = set(alive_before)
        removed, added = set(self.removed), set(self.added)
        problems = []
        if len(removed) != len(added):
            problems.append("departures and arrivals differ in number")
        if removed & added:
            problems.append("an id both leaves and joins")
        if not removed <= alive_before:
            problems.append("departure of a node that is not alive")
        if added & alive_before:
            problems.append("arrival id already alive")
        survivors = alive_before - removed
        attached = set()
        ht_degree = Counter()
        for u, h in self.attachments:
            if u not in added:
                problems.append(f"attachment from non-arrival {u}")
            if h not in survivors:
                problems.append(f"attachment host {h} is not a surviving pre-existing node")
            attached.add(u)
            ht_degree[u] += 1
            ht_degree[h] += 1
        if attached != added:
            problems.append("arrival without attachment")
        if ht_degree and max(ht_degree.values()) > delta_h:
            problems.append(f"attachment degree exceeds delta_h={delta_h}")
        if problems:
            raise AdversaryConfigError(f"round {self.round}: " + "; ".join(problems))


def auto_churn_rate(n: int, k: int) -> int:
    return n // max(1, math.ceil(math.log2(n))) ** k


class AdversaryModel:
    """Per-round churn generator.

    ``ledger`` maps alive id -> join round.  ``inserted`` holds the ids this
    adversary added that are still alive, in insertion order.

    fringe_growth hosts come from the ``fringe_window`` most recently inserted
    survivors (default: one batch, ``churn_rate``; 0 means all of them), so
    the fringe grows as a long thin band.  With ``attachments`` equal to the
    protocol's d, arrivals never need to reconnect and the band stays weakly
    tied to the rest of the graph.
    """

    def __init__(self, strategy, churn_rate, delta_h, seed, n, attachments=1, fringe_window=None):
        if strategy not in STRATEGIES:
            raise AdversaryConfigError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
        if not isinstance(churn_rate, int) or churn_rate < 0:
            raise AdversaryConfigError(f"churn_rate must be a non-negative integer, got {churn_rate!r}")
        if churn_rate > n // 2:
            raise AdversaryConfigError(f"churn_rate {churn_rate} exceeds n/2 = {n // 2}")
        if delta_h < 1:
            raise AdversaryConfigError("delta_h must be >= 1")
        if not 1 <= attachments <= delta_h:
            raise AdversaryConfigError(f"attachments must lie in [1, delta_h], got {attachments}")
        self.strategy = strategy
        self.churn_rate = churn_rate
        self.delta_h = delta_h
        self.attachments = attachments
        self.fringe_window = fringe_window
        self.rng = random.Random(seed)
        self.ledger: dict[int, int] = {u: 0 for u in range(n)}
        self.inserted: dict[int, None] = {}
        self.next_id = n
        self.last_round = None

    @property
    def alive(self) -> list[int]:
        return sorted(self.ledger)

    def next_churn(self, round: int) -> ChurnEvent:
        if self.last_round is not None and round <= self.last_round:
            raise AdversaryConfigError(f"round {round} requested after round {self.last_round}")
        self.last_round = round
        if self.strategy == "silent" or self.churn_rate == 0:
            return ChurnEvent(round)

        rate = self.churn_rate
        if self.strategy == "uniform":
            removed = self.rng.sample(self.alive, rate)
        elif self.strategy == "oldest_first":
            removed = sorted(self.ledger, key=lambda u: (self.ledger[u], u))[:rate]
        else:
            removed = self._fringe_removals(rate)
        removed_set = set(removed)
        survivors = [u for u in self.alive if u not in removed_set]

        if self.strategy == "fringe_growth":
            pool = [u for u in self.inserted if u not in removed_set]
            window = rate if self.fringe_window is None else self.fringe_window
            if window:
                pool = pool[-window:]
            pool.sort()
        else:
            pool = survivors

        added = list(range(self.next_id, self.next_id + rate))
        self.next_id += rate
        load = Counter()
        pairs = []
        for u in added:
            for h in self._pick_hosts(pool, survivors, load, round):
                load[h] += 1
                pairs.append((u, h))

        for u in removed:
            del self.ledger[u]
            self.inserted.pop(u, None)
        for u in added:
            self.ledger[u] = round
            self.inserted[u] = None
        return ChurnEvent(round, tuple(sorted(removed)), tuple(added), tuple(pairs))

    def _fringe_removals(self, rate):
        core = [u for u in self.alive if u not in self.inserted]
        if len(core) >= rate:
            return self.rng.sample(core, rate)
        # core exhausted: take the oldest fringe nodes so recent growth stays intact
        return core + list(self.inserted)[: rate - len(core)]

    def _pick_hosts(self, pool, survivors, load, round):
        cap = self.delta_h
        chosen = []
        for _ in range(self.attachments):
            if pool:
                # one uniform try, then a uniform pick among the feasible hosts;
                # together this is exactly uniform over the feasible hosts
                h = pool[self.rng.randrange(len(pool))]
                if load[h] < cap and h not in chosen:
                    chosen.append(h)
                    continue
            cands = [h for h in pool if load[h] < cap and h not in chosen]
            if not cands:
                cands = [h for h in survivors if load[h] < cap and h not in chosen]
            if not cands:
                raise AdversaryConfigError(
                    f"round {round}: no surviving host with spare capacity under delta_h={cap}"
                )
            chosen.append(cands[self.rng.randrange(len(cands))])
        return chosen

    def generate(self, first_round: int, count: int) -> list[ChurnEvent]:
        return [self.next_churn(first_round + i) for i in range(count)]


def make_adversary(strategy, churn_rate, delta_h=4, seed=0, n=None, **kw) -> AdversaryModel:
    if n is None:
        raise AdversaryConfigError("initial population size n is required")
    return AdversaryModel(strategy, churn_rate, delta_h, seed, n, **kw)


def write_events(events, path) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")


def read_events(path) -> list[ChurnEvent]:
    return [ChurnEvent.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]
