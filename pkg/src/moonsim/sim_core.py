"""Deterministic discrete-event core: clock, event queue and seedable random streams.

Time is kept as integer picoseconds so that slot boundaries (2.1 us slots),
frame serialization times (0.49152 us at 100 Gbps, 1.96608 us at 25 Gbps) and
ring propagation arcs are all exact integers.  Public helpers convert to and
from microseconds at the edges.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

PS_PER_US = 1_000_000
SLOT_PS = 2_100_000          # 2.1 us time slot
SLOTS_PER_RING = 240
RING_PROP_PS = SLOTS_PER_RING * SLOT_PS      # 504 us MAN ring
MCN_RING_PROP_PS = 10 * RING_PROP_PS         # 5040 us MCN ring
DEFAULT_HORIZON_US = 2520.0                  # 1200 slots


class ConfigurationError(ValueError):
    """Invalid user-supplied parameter (bad load, node count, buffer...)."""


class SimulationError(RuntimeError):
    """Internal engine invariant broken; always indicates a bug."""


class SchedulingError(SimulationError):
    """An event was scheduled in the past."""


def us_to_ps(us: float) -> int:
    return int(round(us * PS_PER_US))


def ps_to_us(ps: int) -> float:
    return ps / PS_PER_US


class SimClock:
    """Monotonic simulation clock in integer picoseconds."""

    __slots__ = ("now_ps", "slot_duration_ps")

    def __init__(self, slot_duration_ps: int = SLOT_PS):
        self.now_ps = 0
        self.slot_duration_ps = slot_duration_ps

    @property
    def now_us(self) -> float:
        return ps_to_us(self.now_ps)

    @property
    def slot_index(self) -> int:
        return self.now_ps // self.slot_duration_ps

    def advance(self, to_ps: int) -> None:
        if to_ps < self.now_ps:
            raise SimulationError(
                f"clock moved backwards: {self.now_ps} -> {to_ps} ps")
        self.now_ps = to_ps


class EventQueue:
    """Priority queue of (timestamp, sequence, event) with deterministic ties.

    Events with equal timestamps pop in insertion order.  Scheduling before
    the current clock time is a hard error: it would mean the model produced
    an effect before its cause.
    """

    def __init__(self):
        self._heap: list[tuple[int, int, object]] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, at_ps: int, event, *, clock: SimClock | None = None) -> None:
        if clock is not None and at_ps < clock.now_ps:
            raise SchedulingError(
                f"schedule at {at_ps} ps before clock {clock.now_ps} ps")
        heapq.heappush(self._heap, (at_ps, self._seq, event))
        self._seq += 1

    def peek_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> tuple[int, object]:
        at_ps, _, event = heapq.heappop(self._heap)
        return at_ps, event


def schedule(queue: EventQueue, at_ps: int, event, *, clock: SimClock | None = None) -> EventQueue:
    queue.schedule(at_ps, event, clock=clock)
    return queue


def run_until(clock: SimClock, queue: EventQueue, horizon_ps: int, handler=None) -> int:
    """Process every event with timestamp <= horizon; leave later events queued.

    Events are dispatched through ``handler(clock, event)``; when no handler is
    given, callable events are invoked as ``event(clock)``.  Returns the number
    of events processed.  The clock ends at max(last event time, horizon is not
    forced) -- an empty queue simply ends the run.
    """
    if horizon_ps < 0:
        raise ConfigurationError("horizon must be non-negative")
    processed = 0
    while queue:
        head = queue.peek_time()
        if head is None or head > horizon_ps:
            break
        at_ps, event = queue.pop()
        clock.advance(at_ps)
        if handler is not None:
            handler(clock, event)
        elif callable(event):
            event(clock)
        processed += 1
    return processed


# Slice codes keying the per-pair random streams.  Arrival processes must not
# change when wavelength counts or buffer sizes change, so the stream identity
# is (master seed, slice code, slice instance, source, destination) only.
STREAM_OTS_INTRA = 1
STREAM_OCS_INTRA = 2
STREAM_OCS_MCN = 3
STREAM_OTS_AGG = 4


@dataclass
class RandomStream:
    """Counter-based random stream bound to one (slice, src, dst) identity.

    Uses Philox keyed by the full identity tuple, so the sequence for a given
    (seed, stream_id) is identical on every platform and independent of any
    other stream.
    """

    seed: int
    slice_code: int
    source: int
    destination: int
    instance: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        ss = np.random.SeedSequence(
            [self.seed, self.slice_code, self.instance, self.source, self.destination])
        self._gen = np.random.Generator(np.random.Philox(ss))

    def exponential_us(self, mean_us: float) -> float:
        if mean_us <= 0:
            raise ConfigurationError("exponential mean must be > 0")
        return float(self._gen.exponential(mean_us))

    def exponential_batch_us(self, mean_us: float, n: int) -> np.ndarray:
        if mean_us <= 0:
            raise ConfigurationError("exponential mean must be > 0")
        return self._gen.exponential(mean_us, n)

    def interarrival_times_ps(self, rate_per_s: float, horizon_ps: int) -> np.ndarray:
        """Cumulative Poisson arrival times in ps, truncated to the horizon."""
        if rate_per_s <= 0:
            return np.empty(0, dtype=np.int64)
        mean_s = 1.0 / rate_per_s
        expect = rate_per_s * horizon_ps * 1e-12
        chunk = max(int(expect * 1.25) + 32, 64)
        times_s = np.cumsum(self._gen.exponential(mean_s, chunk))
        while times_s[-1] * 1e12 <= horizon_ps:
            more = times_s[-1] + np.cumsum(self._gen.exponential(mean_s, chunk))
            times_s = np.concatenate([times_s, more])
        times_ps = np.rint(times_s * 1e12).astype(np.int64)
        return times_ps[times_ps <= horizon_ps]


def sample_exponential(stream: RandomStream, mean_us: float) -> float:
    """One exponential sample (microseconds); reproducible per (seed, stream id)."""
    return stream.exponential_us(mean_us)
