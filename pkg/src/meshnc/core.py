"""Packets, frames, ACKs and the XOR codec shared by every protocol.

Everything here is an immutable value type plus pure functions, so instances
can be broadcast to many receivers without defensive copying.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping, Optional, Sequence, Union

NodeId = int

DATA_HEADER_BYTES = 40
ACK_FRAME_BYTES = 14
REPORT_LEN = 8


class Protocol(IntEnum):
    PLAIN = 0
    COPE = 1
    BEND = 2
    FLEXONC = 3


class CodingError(ValueError):
    """Raised when packets violate the coding rules (e.g. duplicate next hops)."""


@dataclass(frozen=True, slots=True)
class PayloadId:
    """Identity of one generated datagram: (flow index, sequence number)."""
    flow: int
    seq: int


@dataclass(frozen=True, slots=True)
class NativePacket:
    id: PayloadId
    src: NodeId
    dst: NodeId
    prev_hop: NodeId
    next_hop: NodeId
    payload: bytes
    second_next_hop: Optional[NodeId] = None


@dataclass(frozen=True, slots=True)
class CodedComponent:
    """Routing metadata of one native packet folded into a coded frame."""
    id: PayloadId
    src: NodeId
    dst: NodeId
    intended_next_hop: NodeId


@dataclass(frozen=True, slots=True)
class CodedPacket:
    components: tuple[CodedComponent, ...]
    payload: bytes
    sender: NodeId

    def intended_set(self) -> frozenset[NodeId]:
        return frozenset(c.intended_next_hop for c in self.components)


@dataclass(frozen=True, slots=True)
class Ack:
    """Link-layer acknowledgment carrying the address of its *sender*."""
    ack_sender: NodeId
    payload: PayloadId


Body = Union[NativePacket, CodedPacket, Ack]


@dataclass(frozen=True, slots=True)
class Frame:
    """On-air unit: a data or ack body plus a piggybacked reception report."""
    body: Body
    reception_report: tuple[PayloadId, ...]
    bits: int

    @property
    def kind(self) -> str:
        return "ack" if isinstance(self.body, Ack) else "data"

    @property
    def transmitter(self) -> NodeId:
        body = self.body
        if isinstance(body, NativePacket):
            return body.prev_hop
        if isinstance(body, CodedPacket):
            return body.sender
        return body.ack_sender


def data_frame_bits(payload_len: int) -> int:
    return DATA_HEADER_BYTES * 8 + 8 * payload_len


def ack_frame_bits() -> int:
    return ACK_FRAME_BYTES * 8


def xor_payloads(a: bytes, b: bytes) -> bytes:
    """Bytewise XOR; the shorter input is zero-padded to the longer length."""
    n = max(len(a), len(b))
    if n == 0:
        return b""
    x = int.from_bytes(a, "little") ^ int.from_bytes(b, "little")
    return x.to_bytes(n, "little")


def encode(natives: Sequence[NativePacket], sender: NodeId) -> CodedPacket:
    """Fold two or more native packets into one XOR-coded packet.

    Every native must have a distinct next hop (at most one packet per next
    hop); violating that is a caller bug, not a runtime condition.
    """
    if len(natives) < 2:
        raise CodingError("coded packet needs at least two components")
    hops = [p.next_hop for p in natives]
    if len(set(hops)) != len(hops):
        raise CodingError(f"duplicate next hop among coded components: {hops}")
    payload = natives[0].payload
    for p in natives[1:]:
        payload = xor_payloads(payload, p.payload)
    components = tuple(
        CodedComponent(p.id, p.src, p.dst, p.next_hop) for p in natives
    )
    return CodedPacket(components=components, payload=payload, sender=sender)


def decodable(
    coded: CodedPacket,
    pool: Mapping[PayloadId, bytes] | frozenset[PayloadId] | set[PayloadId],
    target: CodedComponent,
) -> bool:
    """True iff every component except `target` is available in `pool`."""
    return all(c.id in pool for c in coded.components if c.id != target.id)


def decode(
    coded: CodedPacket,
    pool: Mapping[PayloadId, bytes],
    target: CodedComponent,
) -> Optional[NativePacket]:
    """Peel `target` out of a coded packet using pooled payloads.

    Returns None when some other component's payload is missing (not
    decodable); that is an expected runtime condition, not a fault.
    """
    if target not in coded.components:
        raise CodingError("target is not a component of this coded packet")
    payload = coded.payload
    for c in coded.components:
        if c.id == target.id:
            continue
        other = pool.get(c.id)
        if other is None:
            return None
        payload = xor_payloads(payload, other)
    return NativePacket(
        id=target.id,
        src=target.src,
        dst=target.dst,
        prev_hop=coded.sender,
        next_hop=target.intended_next_hop,
        payload=payload,
    )
