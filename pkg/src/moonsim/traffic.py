"""Poisson multi-frame sources per (source, destination) pair.

Offered load is expressed in wire bits: every generated packet turns into a
whole number of multi-frames of 49152 bits each, and the per-pair Poisson rate
is chosen so that the aggregate wire-bit rate converges to the configured
offered load.  The default packet size (47545 bits = 185 blocks) fills exactly
one multi-frame, making one packet == one multi-frame with an unambiguous
generation time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .framing import (MULTIFRAME_CLIENT_BITS, MULTIFRAME_WIRE_BITS, Slice,
                      multiframes_for_bits)
from .sim_core import ConfigurationError, RandomStream


@dataclass(frozen=True)
class TrafficConfig:
    """One slice's offered traffic.

    ``offered_gbps`` is the aggregate wire-bit rate over the whole slice.
    ``pair_weights`` maps ordered (src, dst) pairs to relative weights; the
    default is a uniform matrix over the slice's ordered pairs.
    """

    slice: Slice
    offered_gbps: float
    packet_bits: int = MULTIFRAME_CLIENT_BITS
    pair_weights: dict[tuple[int, int], float] | None = None

    def __post_init__(self):
        if self.offered_gbps < 0:
            raise ConfigurationError("offered load must be >= 0")
        if self.packet_bits < 1:
            raise ConfigurationError("packet_bits must be >= 1")

    @property
    def frames_per_packet(self) -> int:
        return multiframes_for_bits(self.packet_bits)

    @property
    def wire_bits_per_packet(self) -> int:
        return self.frames_per_packet * MULTIFRAME_WIRE_BITS


def ordered_pairs(slice_tag: Slice, n_nodes: int,
                  n_remote: int | None = None) -> list[tuple[int, int]]:
    """Ordered traffic pairs for a slice; no self-traffic within a ring."""
    if slice_tag is Slice.OTS_AGG:
        remote = n_remote if n_remote is not None else n_nodes
        return [(s, d) for s in range(n_nodes) for d in range(remote)]
    return [(s, d) for s in range(n_nodes) for d in range(n_nodes) if s != d]


def nominal_capacity_gbps(slice_tag: Slice, M: int | None = None,
                          W: int | None = None, B: int | None = None) -> float:
    """Nominal slice capacity: the denominator of normalized load."""
    if slice_tag is Slice.OTS_INTRA:
        if W is None or W < 1:
            raise ConfigurationError("OTS intra-MAN capacity needs W >= 1")
        return 25.0 * W
    if slice_tag is Slice.OCS_INTRA:
        if M is None or M < 2:
            raise ConfigurationError("OCS intra-MAN capacity needs M >= 2")
        return 100.0 * M * (M - 1)
    if slice_tag is Slice.OCS_MCN:
        if B is None or B < 2:
            raise ConfigurationError("OCS MCN capacity needs B >= 2")
        return 100.0 * B * (B - 1)
    if slice_tag is Slice.OTS_AGG:
        return 100.0
    raise ConfigurationError(f"unknown slice {slice_tag!r}")


@dataclass(frozen=True)
class ArrivalBatch:
    """Time-sorted multi-frame arrivals for one slice over one horizon.

    One row per multi-frame: arrival time (ps), source and destination.
    Ties are broken by (time, src, dst) so the order is deterministic.
    """

    time_ps: np.ndarray
    src: np.ndarray
    dst: np.ndarray

    def __len__(self) -> int:
        return len(self.time_ps)

    @property
    def wire_bits(self) -> int:
        return len(self.time_ps) * MULTIFRAME_WIRE_BITS


def pair_rates(config: TrafficConfig, n_nodes: int,
               n_remote: int | None = None) -> dict[tuple[int, int], float]:
    """Per-pair packet rates in packets/s; weights normalized to sum to 1."""
    pairs = ordered_pairs(config.slice, n_nodes, n_remote)
    if config.pair_weights is None:
        weights = {p: 1.0 for p in pairs}
    else:
        unknown = set(config.pair_weights) - set(pairs)
        if unknown:
            raise ConfigurationError(f"pair weights for non-existent pairs {sorted(unknown)}")
        weights = {p: config.pair_weights.get(p, 0.0) for p in pairs}
    total_w = sum(weights.values())
    if total_w <= 0:
        raise ConfigurationError("pair weights must sum to a positive value")
    packet_rate = config.offered_gbps * 1e9 / config.wire_bits_per_packet
    return {p: packet_rate * w / total_w for p, w in weights.items()}


def generate_arrivals(config: TrafficConfig, master_seed: int, horizon_ps: int,
                      n_nodes: int, n_remote: int | None = None,
                      instance: int = 0) -> ArrivalBatch:
    """Draw every multi-frame arrival for one slice up to the horizon.

    Each ordered pair has its own Philox stream keyed by
    (seed, slice, instance, src, dst), so the arrival sequence is untouched by
    changes to wavelength counts, buffer sizes, or other pairs' parameters.
    Packets larger than one multi-frame emit several frames at the same
    timestamp (the multi-frames of one packet are generated together).
    """
    rates = pair_rates(config, n_nodes, n_remote)
    k = config.frames_per_packet
    chunks = []
    for (s, d), rate in sorted(rates.items()):
        if rate <= 0:
            continue
        stream = RandomStream(master_seed, int(config.slice), s, d, instance)
        t = stream.interarrival_times_ps(rate, horizon_ps)
        if k > 1:
            t = np.repeat(t, k)
        chunks.append((t, np.full(len(t), s, dtype=np.int32),
                       np.full(len(t), d, dtype=np.int32)))
    if not chunks:
        empty = np.empty(0, dtype=np.int64)
        return ArrivalBatch(empty, empty.astype(np.int32), empty.astype(np.int32))
    time_ps = np.concatenate([c[0] for c in chunks])
    src = np.concatenate([c[1] for c in chunks])
    dst = np.concatenate([c[2] for c in chunks])
    order = np.lexsort((dst, src, time_ps))
    return ArrivalBatch(time_ps[order], src[order], dst[order])
