"""Client-packet encapsulation: 257-bit blocks, OSU frames, 32-frame multi-frames.

A client packet is segmented into 257-bit blocks.  The first bit of each block
is carried in frame overhead and the remaining 256 bits form payload.  An OSU
frame is 192 bytes on the wire (185 payload + 7 overhead), and 32 OSU frames
are grouped into one multi-frame keyed by (destination, traffic slice).  The
payload of one multi-frame is exactly 32 * 185 bytes = 185 * 256 payload bits,
so a full multi-frame carries exactly 185 blocks and always occupies
32 * 192 * 8 = 49152 bits on the optical channel, padding included.

The binary multi-frame serialization below is a test fixture format, not a
wire standard.  Layout (little-endian):

    offset  size  field
    0       2     magic b"MF"
    2       1     format version (1)
    3       1     slice code
    4       2     destination node id (u16)
    6       2     blocks_used (u16, 1..185)
    8       8     generation_time_ps (u64)
    16      ...   blocks_used packed 257-bit blocks, overhead bit first,
                  bit-packed MSB-first and zero-padded to a byte boundary
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from .sim_core import ConfigurationError

BLOCK_BITS = 257
BLOCK_PAYLOAD_BITS = 256
BLOCK_OVERHEAD_BITS = 1
OSU_TOTAL_BYTES = 192
OSU_PAYLOAD_BYTES = 185
OSU_OVERHEAD_BYTES = 7
FRAMES_PER_MULTIFRAME = 32
BLOCKS_PER_MULTIFRAME = (FRAMES_PER_MULTIFRAME * OSU_PAYLOAD_BYTES * 8) // BLOCK_PAYLOAD_BITS  # 185
MULTIFRAME_WIRE_BITS = FRAMES_PER_MULTIFRAME * OSU_TOTAL_BYTES * 8   # 49152
MULTIFRAME_WIRE_BYTES = MULTIFRAME_WIRE_BITS // 8                    # 6144
MULTIFRAME_CLIENT_BITS = BLOCKS_PER_MULTIFRAME * BLOCK_BITS          # 47545

_HEADER = struct.Struct("<2sBBHHQ")
_MAGIC = b"MF"
_VERSION = 1


class Slice(enum.IntEnum):
    """Traffic slice tags; double as stream codes and report labels."""

    OTS_INTRA = 1
    OCS_INTRA = 2
    OCS_MCN = 3
    OTS_AGG = 4

    @property
    def label(self) -> str:
        return _SLICE_LABELS[self]


_SLICE_LABELS = {
    Slice.OTS_INTRA: "ots_intra",
    Slice.OCS_INTRA: "ocs_intra",
    Slice.OCS_MCN: "ocs_mcn",
    Slice.OTS_AGG: "ots_agg",
}


@dataclass(frozen=True)
class FramingConstants:
    block_bits: int = BLOCK_BITS
    block_payload_bits: int = BLOCK_PAYLOAD_BITS
    block_overhead_bits: int = BLOCK_OVERHEAD_BITS
    osu_total_bytes: int = OSU_TOTAL_BYTES
    osu_payload_bytes: int = OSU_PAYLOAD_BYTES
    osu_overhead_bytes: int = OSU_OVERHEAD_BYTES
    frames_per_multiframe: int = FRAMES_PER_MULTIFRAME

    def __post_init__(self):
        if self.osu_total_bytes != self.osu_payload_bytes + self.osu_overhead_bytes:
            raise ConfigurationError("OSU payload + overhead must equal total size")
        if (self.frames_per_multiframe * self.osu_payload_bytes * 8) % self.block_payload_bits:
            raise ConfigurationError("multi-frame payload must hold whole blocks")


FRAMING = FramingConstants()


@dataclass(frozen=True)
class Block:
    """One 257-bit data block: 1 overhead bit + 256 payload bits."""

    overhead_bit: int
    payload: bytes            # exactly 32 bytes
    arrival_time_ps: int = 0

    def __post_init__(self):
        if self.overhead_bit not in (0, 1):
            raise ConfigurationError("overhead bit must be 0 or 1")
        if len(self.payload) != BLOCK_PAYLOAD_BITS // 8:
            raise ConfigurationError("block payload must be exactly 32 bytes")


@dataclass(frozen=True)
class MultiFrame:
    """Atomic transport unit: 32 grouped OSU frames for one (destination, slice).

    The wire footprint is constant (49152 bits) no matter how many blocks are
    actually used; unused payload is zero padding.  ``generation_time_ps`` is
    the arrival time of the last contributing block.
    """

    destination: int
    slice: Slice
    blocks_used: int
    generation_time_ps: int
    blocks: tuple[Block, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 1 <= self.blocks_used <= BLOCKS_PER_MULTIFRAME:
            raise ConfigurationError(
                f"blocks_used must be in [1, {BLOCKS_PER_MULTIFRAME}]")

    @property
    def wire_bits(self) -> int:
        return MULTIFRAME_WIRE_BITS

    @property
    def client_bits(self) -> int:
        return self.blocks_used * BLOCK_BITS


def multiframe_wire_bits() -> int:
    """Constant on-channel size of any multi-frame: 32 frames x 192 bytes."""
    return MULTIFRAME_WIRE_BITS


def blocks_for_bits(packet_bits: int) -> int:
    if packet_bits < 1:
        raise ConfigurationError("packet must contain at least one bit")
    return -(-packet_bits // BLOCK_BITS)


def multiframes_for_bits(packet_bits: int) -> int:
    return -(-blocks_for_bits(packet_bits) // BLOCKS_PER_MULTIFRAME)


def segment_packet(packet_bits: int, arrival_time_ps: int,
                   payload: bytes | None = None) -> list[Block]:
    """Cut a client packet into 257-bit blocks, zero-padding the last one.

    ``payload`` supplies the actual bit content (MSB-first); when omitted the
    packet is all-zero, which is enough for everything except codec tests.
    """
    n_blocks = blocks_for_bits(packet_bits)
    if payload is None:
        bits = bytearray(-(-packet_bits // 8))
    else:
        if len(payload) * 8 < packet_bits:
            raise ConfigurationError("payload shorter than declared packet_bits")
        bits = bytearray(payload[:-(-packet_bits // 8)])
        # zero out any bits beyond packet_bits in the final byte
        extra = len(bits) * 8 - packet_bits
        if extra:
            bits[-1] &= 0xFF << extra & 0xFF
    stream = _BitReader(bits, packet_bits)
    blocks = []
    for _ in range(n_blocks):
        overhead = stream.take_bit()
        blocks.append(Block(overhead, stream.take_bytes(BLOCK_PAYLOAD_BITS // 8),
                            arrival_time_ps))
    return blocks


def build_multiframes(blocks: list[Block], destination: int,
                      slice_tag: Slice) -> list[MultiFrame]:
    """Group blocks into multi-frames of up to 185 blocks each.

    Every output multi-frame is stamped with the arrival time of its last
    included block and occupies the full 49152-bit wire footprint.
    """
    if not blocks:
        raise ConfigurationError("cannot build a multi-frame from zero blocks")
    frames = []
    for i in range(0, len(blocks), BLOCKS_PER_MULTIFRAME):
        group = tuple(blocks[i:i + BLOCKS_PER_MULTIFRAME])
        frames.append(MultiFrame(
            destination=destination,
            slice=slice_tag,
            blocks_used=len(group),
            generation_time_ps=group[-1].arrival_time_ps,
            blocks=group,
        ))
    return frames


def serialize_multiframe(mf: MultiFrame) -> bytes:
    if mf.blocks is None:
        raise ConfigurationError("multi-frame carries no block content")
    writer = _BitWriter()
    for b in mf.blocks:
        writer.put_bit(b.overhead_bit)
        writer.put_bytes(b.payload)
    return _HEADER.pack(_MAGIC, _VERSION, int(mf.slice), mf.destination,
                        mf.blocks_used, mf.generation_time_ps) + writer.to_bytes()


def deserialize_multiframe(data: bytes) -> MultiFrame:
    magic, version, slice_code, dest, used, gen_ps = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise ConfigurationError("not a serialized multi-frame")
    reader = _BitReader(bytearray(data[_HEADER.size:]), used * BLOCK_BITS)
    blocks = tuple(
        Block(reader.take_bit(), reader.take_bytes(BLOCK_PAYLOAD_BITS // 8), gen_ps)
        for _ in range(used))
    return MultiFrame(destination=dest, slice=Slice(slice_code), blocks_used=used,
                      generation_time_ps=gen_ps, blocks=blocks)


class _BitReader:
    """MSB-first bit reader over a byte buffer, zero-fill past the end."""

    def __init__(self, buf: bytearray, total_bits: int):
        self._buf = buf
        self._pos = 0
        self._limit = max(total_bits, 0)

    def take_bit(self) -> int:
        if self._pos >= self._limit:
            self._pos += 1
            return 0
        byte = self._buf[self._pos >> 3]
        bit = (byte >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    def take_bytes(self, n: int) -> bytes:
        out = bytearray(n)
        for i in range(n * 8):
            if self.take_bit():
                out[i >> 3] |= 1 << (7 - (i & 7))
        return bytes(out)


class _BitWriter:
    def __init__(self):
        self._buf = bytearray()
        self._nbits = 0

    def put_bit(self, bit: int) -> None:
        if self._nbits % 8 == 0:
            self._buf.append(0)
        if bit:
            self._buf[-1] |= 1 << (7 - (self._nbits & 7))
        self._nbits += 1

    def put_bytes(self, data: bytes) -> None:
        for byte in data:
            for k in range(8):
                self.put_bit((byte >> (7 - k)) & 1)

    def to_bytes(self) -> bytes:
        return bytes(self._buf)
