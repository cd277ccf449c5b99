"""Deterministic discrete-event simulation of one bottleneck multicast path.

Packets from a time-ordered source stream pass through a single
drop-tail queue served at the bottleneck rate, then through an optional
loss stage (independent losses, a two-state burst model, or both), and
are finally delivered to every receiver subscribed to the packet's
group at that instant.  Receivers adjust their subscription only at
sub-slot boundaries: they join the next younger group whenever the
average rate they would have consumed since their start, including one
sub slot ahead at the candidate's rate, stays within their target.
Groups are left only once quiescent, which costs nothing by then.

Everything random flows from one seeded generator drawn in a fixed
order, so equal seeds give bit-identical traces and counters.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .channel import (
    BASE_GROUP,
    ChannelConfig,
    cumulative_rate_integral,
    group_quiescence_time,
    interval_index,
)
from . import wire

_EPS = 1e-9


@dataclass(frozen=True)
class ReceiverSpec:
    target_rate: float
    start_time: float = 0.0

    def __post_init__(self) -> None:
        if self.target_rate <= 0:
            raise ValueError("target_rate must be positive")
        if self.start_time < 0:
            raise ValueError("start_time cannot be negative")


@dataclass(frozen=True)
class GilbertLoss:
    """Two-state burst loss: stationary loss rate and mean burst length."""

    rate: float = 0.10
    mean_burst: float = 8.0

    def __post_init__(self) -> None:
        if not 0.0 < self.rate < 1.0:
            raise ValueError("burst loss rate must be in (0, 1)")
        if self.mean_burst < 1.0:
            raise ValueError("mean burst length must be >= 1 packet")

    @property
    def p_exit(self) -> float:
        return 1.0 / self.mean_burst

    @property
    def p_enter(self) -> float:
        return self.rate * self.p_exit / (1.0 - self.rate)


@dataclass(frozen=True)
class Scenario:
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    bottleneck_rate: float = 4_000_000.0
    queue_capacity: int = 25
    iid_loss: float = 0.0
    burst: GilbertLoss | None = None
    receivers: tuple[ReceiverSpec, ...] = ()
    duration: float = 60.0
    seed: int = 1

    def __post_init__(self) -> None:
        if self.bottleneck_rate <= 0:
            raise ValueError("bottleneck_rate must be positive")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if not 0.0 <= self.iid_loss < 1.0:
            raise ValueError("iid_loss must be in [0, 1)")
        if self.duration <= 0:
            raise ValueError("duration must be positive")


@dataclass
class LinkCounters:
    offered: int = 0
    delivered: int = 0
    queue_dropped: int = 0
    channel_lost: int = 0
    offered_bytes: int = 0
    delivered_bytes: int = 0

    @property
    def in_flight(self) -> int:
        return self.offered - self.delivered - self.queue_dropped - self.channel_lost


class ReceiverState:
    """Subscription state and bookkeeping of one simulated receiver."""

    RATE_WINDOW = 8.0  # seconds of history in the delivery-rate estimate

    def __init__(self, spec: ReceiverSpec, cfg: ChannelConfig):
        self.spec = spec
        self.cfg = cfg
        s = cfg.sub_tsi
        self.start_time = math.ceil(spec.start_time / s - _EPS) * s
        self.top_group: int | None = None
        self.rate_integral = 0.0  # bits of nominal subscription since start
        self.last_eval = self.start_time
        self.joins: list[tuple[float, int]] = []
        self.received = 0
        self.received_bytes = 0
        self.missed = 0
        self.done = False
        self.done_time: float | None = None
        self._window: list[tuple[float, int]] = []

    # -- subscription ----------------------------------------------------

    def active(self, t: float) -> bool:
        return t >= self.start_time - _EPS

    def _effective_top(self, t: float) -> int | None:
        if self.top_group is None:
            return None
        oldest = interval_index(self.cfg, t) + 1
        return self.top_group if self.top_group >= oldest else None

    def subscribed(self, group: int, t: float) -> bool:
        if not self.active(t):
            return False
        if group == BASE_GROUP:
            return True
        top = self._effective_top(t)
        return top is not None and group <= top

    def subscription_rate_integral(self, t0: float, t1: float) -> float:
        """Bits of nominal subscription rate over [t0, t1]."""
        if t1 <= t0:
            return 0.0
        if self.top_group is None:
            return self.cfg.base_rate * (t1 - t0)
        quiesce = group_quiescence_time(self.cfg, self.top_group)
        bits = cumulative_rate_integral(self.cfg, self.top_group, t0, min(t1, quiesce))
        if t1 > quiesce:
            # All joined dynamic groups are gone past this point.
            bits += self.cfg.base_rate * (t1 - max(t0, quiesce))
        return bits

    # -- delivery accounting ----------------------------------------------

    def note_delivery(self, t: float, size: int) -> None:
        self.received += 1
        self.received_bytes += size
        self._window.append((t, size))
        horizon = t - self.RATE_WINDOW
        while self._window and self._window[0][0] < horizon:
            self._window.pop(0)

    @property
    def received_rate_estimate(self) -> float:
        if not self._window:
            return 0.0
        t0 = self._window[0][0]
        t1 = self._window[-1][0]
        span = max(t1 - t0, self.cfg.sub_tsi)
        return sum(size for _, size in self._window) * 8.0 / span


def receiver_policy_step(state: ReceiverState, t: float, cfg: ChannelConfig) -> list[int]:
    """Evaluate joins at sub-slot boundary ``t``; returns groups joined now.

    The controller keeps the receiver's long-run average subscription
    rate on its target: it joins the next group whenever the average
    since start, projected one sub slot ahead at the candidate's rate,
    would still not exceed the target.
    """
    state.rate_integral += state.subscription_rate_integral(state.last_eval, t)
    state.last_eval = t
    s = cfg.sub_tsi
    elapsed = t - state.start_time
    target = state.spec.target_rate
    idx = interval_index(cfg, t)
    oldest, youngest = idx + 1, idx + cfg.group_count - 1
    joined: list[int] = []
    while True:
        top = state.top_group if (state.top_group is not None and state.top_group >= oldest) else None
        candidate = oldest if top is None else top + 1
        if candidate > youngest:
            break
        lookahead = cumulative_rate_integral(cfg, candidate, t, t + s)
        projected = target * (elapsed + s) - (state.rate_integral + lookahead)
        if projected < -_EPS * max(1.0, target * s):
            break
        state.top_group = candidate
        state.joins.append((t, candidate))
        joined.append(candidate)
    return joined


@dataclass
class DeliveryRecord:
    time: float
    group: int
    packet: bytes


@dataclass
class ReceiverResult:
    state: ReceiverState
    trace: list[DeliveryRecord]


@dataclass
class SimResult:
    receivers: list[ReceiverResult]
    link: LinkCounters
    link_events: list[tuple[float, int, int, str]]  # (time, group, size, event)
    end_time: float


# Event kinds, in tie-break priority order at equal timestamps.
_EV_POLICY = 0
_EV_SERVICE = 1
_EV_EMIT = 2


def run(
    scenario: Scenario,
    packet_source,
    *,
    on_delivery=None,
    collect_traces: bool = True,
    collect_link_events: bool = False,
) -> SimResult:
    """Simulate ``packet_source`` (iterable of (time, group, bytes)) over the path.

    ``on_delivery(receiver_index, time, group, packet) -> bool`` may mark a
    receiver as done; the run stops early once every receiver is done.
    """
    cfg = scenario.channel
    rng = random.Random(scenario.seed)
    rxs = [ReceiverState(spec, cfg) for spec in scenario.receivers]
    results = [ReceiverResult(state, []) for state in rxs]
    link = LinkCounters()
    link_events: list[tuple[float, int, int, str]] = []
    gilbert_bad = False

    source = iter(packet_source)
    heap: list[tuple[float, int, int, object]] = []
    seq = 0

    def push(time: float, kind: int, payload: object) -> None:
        nonlocal seq
        heapq.heappush(heap, (time, kind, seq, payload))
        seq += 1

    def pull_emission() -> None:
        try:
            t_emit, group, packet = next(source)
        except StopIteration:
            return
        if t_emit <= scenario.duration:
            push(t_emit, _EV_EMIT, (group, packet))

    s = cfg.sub_tsi
    n_boundaries = math.floor(scenario.duration / s + _EPS) + 1
    for i in range(n_boundaries):
        push(i * s, _EV_POLICY, i)
    pull_emission()

    queue: list[tuple[int, bytes]] = []
    in_service: tuple[int, bytes] | None = None

    def lose_packet() -> bool:
        nonlocal gilbert_bad
        lost = False
        if scenario.iid_loss > 0.0 and rng.random() < scenario.iid_loss:
            lost = True
        if scenario.burst is not None:
            r = rng.random()
            if gilbert_bad:
                if r < scenario.burst.p_exit:
                    gilbert_bad = False
            else:
                if r < scenario.burst.p_enter:
                    gilbert_bad = True
            lost = lost or gilbert_bad
        return lost

    def start_service(t: float) -> None:
        nonlocal in_service
        if in_service is None and queue:
            in_service = queue.pop(0)
            size = len(in_service[1])
            push(t + size * 8.0 / scenario.bottleneck_rate, _EV_SERVICE, None)

    end_time = 0.0
    while heap:
        t, kind, _, payload = heapq.heappop(heap)
        if t > scenario.duration + _EPS:
            break
        end_time = max(end_time, t)
        if kind == _EV_POLICY:
            for state in rxs:
                if state.active(t) and not state.done:
                    receiver_policy_step(state, t, cfg)
        elif kind == _EV_EMIT:
            group, packet = payload  # type: ignore[misc]
            link.offered += 1
            link.offered_bytes += len(packet)
            if collect_link_events:
                link_events.append((t, group, len(packet), "emit"))
            if in_service is not None and len(queue) >= scenario.queue_capacity:
                link.queue_dropped += 1
                if collect_link_events:
                    link_events.append((t, group, len(packet), "drop"))
                for state in rxs:
                    if not state.done and state.subscribed(group, t):
                        state.missed += 1
            else:
                queue.append((group, packet))
                start_service(t)
            pull_emission()
        else:  # _EV_SERVICE
            group, packet = in_service  # type: ignore[misc]
            in_service = None
            if lose_packet():
                link.channel_lost += 1
                if collect_link_events:
                    link_events.append((t, group, len(packet), "lost"))
                for state in rxs:
                    if not state.done and state.subscribed(group, t):
                        state.missed += 1
            else:
                link.delivered += 1
                link.delivered_bytes += len(packet)
                for i, state in enumerate(rxs):
                    if state.done or not state.subscribed(group, t):
                        continue
                    state.note_delivery(t, len(packet))
                    if collect_traces:
                        results[i].trace.append(DeliveryRecord(t, group, packet))
                    if on_delivery is not None and on_delivery(i, t, group, packet):
                        state.done = True
                        state.done_time = t
            start_service(t)
        assert link.in_flight == len(queue) + (in_service is not None)
        if rxs and all(state.done for state in rxs):
            break
    return SimResult(results, link, link_events, end_time)


# ---------------------------------------------------------------------------
# Scenario files: one "key = value" per line, receivers repeatable.

_SCENARIO_KEYS = {
    "base_rate": float,
    "max_rate": float,
    "decay": float,
    "tsd": float,
    "groups_per_tsi": int,
    "payload": int,
    "group_count": int,
    "bottleneck_rate": float,
    "queue_capacity": int,
    "iid_loss": float,
    "burst_loss": float,
    "burst_length": float,
    "duration": float,
    "seed": int,
}


def parse_scenario(text: str) -> Scenario:
    values: dict[str, object] = {}
    receivers: list[ReceiverSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key == "receiver":
            fields = [f.strip() for f in value.split(",")]
            if len(fields) not in (1, 2):
                raise ValueError(f"line {lineno}: receiver takes 'rate[, start]'")
            rate = float(fields[0])
            start = float(fields[1]) if len(fields) == 2 else 0.0
            receivers.append(ReceiverSpec(rate, start))
        elif key in _SCENARIO_KEYS:
            values[key] = _SCENARIO_KEYS[key](value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    channel = ChannelConfig(
        base_rate=values.get("base_rate", 64_000.0),
        max_cumulative_rate=values.get("max_rate", 4_000_000.0),
        decay_ratio=values.get("decay", 0.7),
        tsd=values.get("tsd", 4.0),
        groups_per_tsi=values.get("groups_per_tsi", 1),
        packet_payload=values.get("payload", 1448),
        group_count=values.get("group_count", 12),
    )
    burst = None
    if values.get("burst_loss", 0.0):
        burst = GilbertLoss(values["burst_loss"], values.get("burst_length", 8.0))
    return Scenario(
        channel=channel,
        bottleneck_rate=values.get("bottleneck_rate", 4_000_000.0),
        queue_capacity=values.get("queue_capacity", 25),
        iid_loss=values.get("iid_loss", 0.0),
        burst=burst,
        receivers=tuple(receivers),
        duration=values.get("duration", 60.0),
        seed=values.get("seed", 1),
    )


def load_scenario(path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def format_trace_line(time: float, group: int, packet: bytes, event: str) -> str:
    """One trace record: ``time_us group buffer_id offset len event``."""
    buffer_id = offset = 0
    try:
        header, _ = wire.parse_packet(packet)
        buffer_id, offset = header.buffer_id, header.offset
    except wire.MalformedPacketError:
        pass
    return f"{round(time * 1e6)} {group} {buffer_id} {offset} {len(packet)} {event}"


def write_receiver_trace(path, trace: list[DeliveryRecord]) -> None:
    lines = [format_trace_line(r.time, r.group, r.packet, "deliver") for r in trace]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def write_link_trace(path, link_events) -> None:
    lines = [f"{round(t * 1e6)} {g} 0 0 {size} {ev}" for (t, g, size, ev) in link_events]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
