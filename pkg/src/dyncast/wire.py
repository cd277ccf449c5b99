"""Packet header shared by the sender, the receiver and the trace tools.

Fixed 32-byte big-endian layout in front of the payload:

    version:1  flags:1  group:2  session_id:4  tsi:4  seq:4
    buffer_id:4  offset:4  buffer_length:4  payload_len:2  reserved:2

With the default 1448-byte payload a datagram is exactly 1480 bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

HEADER_FORMAT = ">BBHIIIIIIHH"
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)
assert HEADER_SIZE == 32

PROTOCOL_VERSION = 1
MAX_PAYLOAD = 1448


class MalformedPacketError(Exception):
    """The datagram does not parse as a protocol packet."""


@dataclass(frozen=True)
class PacketHeader:
    group: int
    session_id: int
    tsi: int
    seq: int
    buffer_id: int
    offset: int
    buffer_length: int
    payload_len: int
    version: int = PROTOCOL_VERSION
    flags: int = 0
    reserved: int = 0


def pack_header(h: PacketHeader) -> bytes:
    return struct.pack(
        HEADER_FORMAT,
        h.version,
        h.flags,
        h.group & 0xFFFF,
        h.session_id & 0xFFFFFFFF,
        h.tsi & 0xFFFFFFFF,
        h.seq & 0xFFFFFFFF,
        h.buffer_id & 0xFFFFFFFF,
        h.offset,
        h.buffer_length,
        h.payload_len,
        h.reserved,
    )


def pack_packet(h: PacketHeader, payload: bytes) -> bytes:
    if len(payload) != h.payload_len:
        raise ValueError("payload_len does not match the payload")
    return pack_header(h) + payload


def parse_packet(datagram: bytes) -> tuple[PacketHeader, bytes]:
    """Split a datagram into (header, payload), validating the framing."""
    if len(datagram) < HEADER_SIZE:
        raise MalformedPacketError("datagram shorter than the header")
    fields = struct.unpack(HEADER_FORMAT, datagram[:HEADER_SIZE])
    (version, flags, group, session_id, tsi, seq,
     buffer_id, offset, buffer_length, payload_len, reserved) = fields
    if version != PROTOCOL_VERSION:
        raise MalformedPacketError(f"unknown protocol version {version}")
    payload = datagram[HEADER_SIZE:]
    if len(payload) != payload_len:
        raise MalformedPacketError("payload length does not match the header")
    if payload_len > MAX_PAYLOAD:
        raise MalformedPacketError("payload larger than the maximum")
    if offset + payload_len > buffer_length:
        raise MalformedPacketError("PDU extends past the end of its buffer")
    header = PacketHeader(
        group=group,
        session_id=session_id,
        tsi=tsi,
        seq=seq,
        buffer_id=buffer_id,
        offset=offset,
        buffer_length=buffer_length,
        payload_len=payload_len,
        version=version,
        flags=flags,
        reserved=reserved,
    )
    return header, payload
