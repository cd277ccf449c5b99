"""Maps the bytes of one application buffer onto the group ladder.

The buffer is cut into fixed-size PDUs (one per packet) numbered ``j``
from 0: lower ``j`` means more important, because receivers consume the
buffer as a prefix.  The scheduling window is cut into tiles, one per
(active group, sub slot) cell, and tiles are ranked by their minimal
cumulative rate: a receiver subscribed at rate R receives exactly the
tiles ranked below R, so giving the lowest PDU numbers to the
lowest-ranked tiles makes every subscription level decode a prefix.

Inside one tile the PDUs are emitted in decreasing ``j`` so that the most
important packet of the tile leaves last: a receiver that joins the
group mid-tile still collects the prefix end of the tile's range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .channel import ChannelConfig, TileBudget, tiles_in_window


class EmptyBufferError(ValueError):
    """The buffer to sequence holds no data."""


class NoCapacityError(Exception):
    """The scheduling window has a zero packet budget."""


class InvalidRateError(Exception):
    """A rate used to size buffers must be positive."""


@dataclass(frozen=True)
class SequenceRequest:
    data: bytes
    buffer_time: float
    buffer_id: int = 0
    buffer_length: int | None = None

    def __post_init__(self) -> None:
        if not self.data:
            raise EmptyBufferError("buffer holds no data")
        if self.buffer_length is not None and self.buffer_length != len(self.data):
            raise ValueError("buffer_length must equal len(data)")
        if self.buffer_time <= 0:
            raise ValueError("buffer_time must be positive")

    @property
    def length(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class SequencedPacket:
    pdu_index: int  # j: position of the PDU in the buffer
    group: int  # g: multicast group carrying the packet
    seq: int  # s: per-group send counter inside the buffer window
    send_time: float
    offset: int
    payload: bytes = field(repr=False)


def infer_buffer_time(first_level_bytes: int, min_rate: float) -> float:
    """Seconds needed to push the first-level bytes at the minimal rate."""
    if min_rate <= 0:
        raise InvalidRateError("minimal rate must be positive")
    if first_level_bytes < 0:
        raise ValueError("byte count cannot be negative")
    return first_level_bytes * 8.0 / min_rate


def infer_buffer_length(buffer_time: float, max_rate: float) -> int:
    """Bytes that fit in ``buffer_time`` at the maximal rate (floored)."""
    return math.floor(buffer_time * max_rate / 8.0)


def tile_rank_order(tiles: list[TileBudget]) -> list[TileBudget]:
    """Tiles sorted by importance: minimal cumulative rate first.

    Ties (same rung) are broken by earlier interval, then lower group id,
    which keeps the order total and deterministic.
    """
    return sorted(tiles, key=lambda tb: (tb.min_cum_rate, tb.tile.interval, tb.tile.group))


def next_boundary(cfg: ChannelConfig, t: float) -> float:
    s = cfg.sub_tsi
    return math.ceil(t / s - 1e-9) * s


def sequence(
    request: SequenceRequest,
    cfg: ChannelConfig,
    t_start: float,
    *,
    align_start: bool = False,
) -> list[SequencedPacket]:
    """Schedule one buffer over [t_start, t_start + buffer_time).

    Returns packets sorted by send time.  With ``align_start`` the window
    is pushed to the next sub-slot boundary first; by default the window
    is used as given so consecutive buffers can tile time back to back
    (edge tiles then carry pro-rated budgets).
    """
    if not request.data:
        raise EmptyBufferError("refusing to sequence an empty buffer")
    t0 = next_boundary(cfg, t_start) if align_start else t_start
    tiles = tiles_in_window(cfg, t0, t0 + request.buffer_time)
    ranked = tile_rank_order(tiles)
    if sum(tb.packet_count for tb in ranked) == 0:
        raise NoCapacityError("window budget is zero packets")

    pdu_size = cfg.packet_payload
    total_pdus = math.ceil(request.length / pdu_size)

    emitted: list[tuple[float, int, int, int]] = []  # (send_time, group, j, tiebreak)
    next_j = 0
    for tb in ranked:
        if next_j >= total_pdus or tb.packet_count == 0:
            continue
        count = min(tb.packet_count, total_pdus - next_j)
        first_j = next_j
        next_j += count
        step = (tb.end - tb.start) / count
        # Most important PDU of the tile (lowest j) leaves last.
        for pos in range(count):
            j = first_j + count - 1 - pos
            send_time = tb.start + (pos + 0.5) * step
            emitted.append((send_time, tb.tile.group, j, pos))

    emitted.sort(key=lambda e: (e[0], e[1], e[3]))
    counters: dict[int, int] = {}
    packets: list[SequencedPacket] = []
    for send_time, group, j, _ in emitted:
        seq = counters.get(group, 0)
        counters[group] = seq + 1
        offset = j * pdu_size
        packets.append(
            SequencedPacket(
                pdu_index=j,
                group=group,
                seq=seq,
                send_time=send_time,
                offset=offset,
                payload=request.data[offset : offset + pdu_size],
            )
        )
    return packets
