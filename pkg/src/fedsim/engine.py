"""Deterministic discrete-event core: virtual clock, ordered dispatch, seeded streams.

The virtual clock counts integer microseconds so that sub-millisecond delay
terms (serialization, local hops) stay exact under addition; every public
config surface still speaks milliseconds. Events dispatch in (fire_at, seq)
lexicographic order, seq being the insertion counter, which makes every run
a total order and therefore replayable byte for byte.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from hashlib import blake2b
from typing import Callable

from .errors import InvalidDistribution, PastTime

US_PER_MS = 1_000
US_PER_S = 1_000_000


def ms_to_us(ms: float) -> int:
    """Quantize a millisecond quantity onto the microsecond grid."""
    return round(ms * US_PER_MS)


def us_to_ms(us: int) -> float:
    return us / US_PER_MS


def s_to_us(s: float) -> int:
    return round(s * US_PER_S)


@dataclass(frozen=True)
class Dist:
    """Distribution spec for a non-negative scalar (a delay, a duration).

    kind is one of "constant", "uniform", "lognormal"; `a`/`b` hold
    (value,), (lo, hi) or (median, sigma) respectively. Lognormal is
    parameterized by its median and log-space sigma, so the median is
    directly the calibration anchor.
    """

    kind: str
    a: float
    b: float = 0.0

    def sample(self, rng: random.Random) -> float:
        if self.kind == "constant":
            return self.a
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b)
        # lognormal
        return rng.lognormvariate(math.log(self.a), self.b)

    def median(self) -> float:
        if self.kind == "uniform":
            return (self.a + self.b) / 2.0
        return self.a

    def sample_us(self, rng: random.Random) -> int:
        return ms_to_us(self.sample(rng))


def constant(value: float) -> Dist:
    if value < 0:
        raise InvalidDistribution(f"constant({value}): negative value")
    return Dist("constant", float(value))


def uniform(lo: float, hi: float) -> Dist:
    if lo < 0 or hi < lo:
        raise InvalidDistribution(f"uniform({lo}, {hi}): need 0 <= lo <= hi")
    return Dist("uniform", float(lo), float(hi))


def lognormal(median: float, sigma: float) -> Dist:
    if median <= 0 or sigma < 0:
        raise InvalidDistribution(
            f"lognormal(median={median}, sigma={sigma}): need median > 0, sigma >= 0"
        )
    return Dist("lognormal", float(median), float(sigma))


def fit_lognormal_sigma(median: float, stddev: float) -> float:
    """Log-space sigma such that lognormal(median, sigma) has the given stddev.

    Closed form: with x = exp(sigma^2), sd^2 = median^2 * x * (x - 1).
    """
    if median <= 0 or stddev < 0:
        raise InvalidDistribution("fit_lognormal_sigma: need median > 0, stddev >= 0")
    r2 = (stddev / median) ** 2
    x = (1.0 + math.sqrt(1.0 + 4.0 * r2)) / 2.0
    return math.sqrt(math.log(x))


@dataclass(order=True)
class _Event:
    fire_at: int
    seq: int
    kind: str = field(compare=False)
    fn: Callable = field(compare=False)
    args: tuple = field(compare=False)


class Engine:
    """Single-threaded event loop with one virtual clock per run.

    Seeded randomness is handed out as named streams: consumers ask for
    `stream("lifecycle/alpha")` and get a generator whose state depends only
    on (run seed, stream label), never on draw order elsewhere.
    """

    def __init__(self, seed: int = 0, trace: bool = False):
        self.seed = seed
        self._now = 0
        self._seq = 0
        self._queue: list[_Event] = []
        self._streams: dict[str, random.Random] = {}
        self.trace: list[tuple[int, int, str]] | None = [] if trace else None
        self.after_dispatch: Callable[[], None] | None = None

    @property
    def now_us(self) -> int:
        return self._now

    @property
    def now_ms(self) -> float:
        return us_to_ms(self._now)

    def stream(self, label: str) -> random.Random:
        rng = self._streams.get(label)
        if rng is None:
            digest = blake2b(f"{self.seed}:{label}".encode(), digest_size=8).digest()
            rng = random.Random(int.from_bytes(digest, "big"))
            self._streams[label] = rng
        return rng

    def schedule(self, fire_at_us: int, kind: str, fn: Callable, *args) -> int:
        """Enqueue an event; returns its sequence number (the handle)."""
        if fire_at_us < self._now:
            raise PastTime(f"schedule at {fire_at_us}us but now is {self._now}us")
        self._seq += 1
        heapq.heappush(self._queue, _Event(fire_at_us, self._seq, kind, fn, args))
        return self._seq

    def schedule_in(self, delay_us: int, kind: str, fn: Callable, *args) -> int:
        return self.schedule(self._now + delay_us, kind, fn, *args)

    def _dispatch(self, limit_us: int | None) -> int:
        count = 0
        q = self._queue
        while q and (limit_us is None or q[0].fire_at <= limit_us):
            ev = heapq.heappop(q)
            self._now = ev.fire_at
            if self.trace is not None:
                self.trace.append((ev.fire_at, ev.seq, ev.kind))
            ev.fn(*ev.args)
            if self.after_dispatch is not None:
                self.after_dispatch()
            count += 1
        return count

    def run_until(self, t_end_us: int) -> int:
        """Dispatch everything due at or before t_end; clock lands on t_end."""
        count = self._dispatch(t_end_us)
        if t_end_us > self._now:
            self._now = t_end_us
        return count

    def run_all(self) -> int:
        """Dispatch until the queue drains; clock lands on the last event."""
        return self._dispatch(None)

    def pending(self) -> int:
        return len(self._queue)
