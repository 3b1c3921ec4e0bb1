"""Discrete-event core: virtual clock, event queue, seeded RNG streams.

Time is integer microseconds from the start of the run.  Events scheduled
for the same instant fire in scheduling order (FIFO tie-break), which keeps
every run byte-for-byte reproducible for a given master seed.
"""

import hashlib
import heapq
from typing import Callable, NamedTuple

import numpy as np

US_PER_SEC = 1_000_000


class RunSummary(NamedTuple):
    dispatched: int
    time: int


class Event:
    """Handle for a scheduled callback.  Cancel via Engine.cancel()."""

    __slots__ = ("time", "seq", "fn", "args", "cancelled")

    def __init__(self, time, seq, fn, args):
        self.time = time
        self.seq = seq
        self.fn = fn
        self.args = args
        self.cancelled = False

    def __repr__(self):
        return f"Event(t={self.time}, seq={self.seq}, fn={getattr(self.fn, '__qualname__', self.fn)})"


class RngStream:
    """Named random stream, independent of all streams with other labels.

    The child seed mixes the master seed with a stable hash of the label, so
    adding a new stream never perturbs the draws of existing ones.
    """

    __slots__ = ("label", "seed", "gen", "_buf", "_pos")

    _BUF = 1024

    def __init__(self, label: str, seed: int):
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        key = int.from_bytes(digest[:8], "big")
        self.label = label
        self.seed = seed
        self.gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, key])))
        self._buf = None
        self._pos = 0

    def random(self) -> float:
        # buffered scalar uniform in [0, 1); cheap enough for per-packet use
        if self._buf is None or self._pos >= self._BUF:
            self._buf = self.gen.random(self._BUF)
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v

    def integers(self, low, high=None):
        return int(self.gen.integers(low, high))

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        return self.gen.choice(n, size=k, replace=False)


class Engine:
    """Event loop with an integer-microsecond virtual clock."""

    def __init__(self, master_seed: int = 0):
        self.now = 0
        self.master_seed = master_seed
        self._heap = []
        self._seq = 0
        self._streams = {}

    def schedule(self, time: int, fn: Callable, *args) -> Event:
        if time < self.now:
            raise ValueError(f"cannot schedule at t={time} before now={self.now}")
        ev = Event(time, self._seq, fn, args)
        self._seq += 1
        heapq.heappush(self._heap, (time, ev.seq, ev))
        return ev

    def schedule_in(self, delay: int, fn: Callable, *args) -> Event:
        return self.schedule(self.now + delay, fn, *args)

    def cancel(self, ev: Event) -> None:
        # lazy removal: the entry stays in the heap and is skipped on pop
        ev.cancelled = True

    def run_until(self, t_end: int) -> RunSummary:
        """Dispatch every event with time <= t_end, then set the clock to t_end."""
        dispatched = 0
        heap = self._heap
        while heap and heap[0][0] <= t_end:
            time, _, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now = time
            ev.fn(*ev.args)
            dispatched += 1
        self.now = t_end
        return RunSummary(dispatched, self.now)

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    def stream(self, label: str) -> RngStream:
        s = self._streams.get(label)
        if s is None:
            s = RngStream(label, self.master_seed)
            self._streams[label] = s
        return s
