"""Bidirectional five-tuple flow assembly.

A flow groups every packet sharing {initiator ip:port, responder ip:port,
transport} regardless of direction. Orientation is fixed by the first
packet seen for the tuple: its sender is the initiator. Packet size
throughout the toolkit is the IP total length (link layer excluded).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .pcapio import PacketRecord, Transport, TCP_FIN, TCP_RST

REORDER_TOLERANCE_MICROS = 1_000

TUNNELED = "tunneled"
UNTUNNELED = "untunneled"


class Direction(enum.Enum):
    FROM_INITIATOR = 1
    FROM_RESPONDER = -1


def direction_sign(direction: Direction) -> int:
    """+1 for initiator-to-responder packets, -1 for the reverse."""
    return direction.value


@dataclass(frozen=True, slots=True)
class FlowKey:
    initiator_ip: str
    initiator_port: int
    responder_ip: str
    responder_port: int
    proto: Transport

    def canonical(self):
        """Direction-agnostic lookup key: (a->b) and (b->a) collide."""
        a = (self.initiator_ip, self.initiator_port)
        b = (self.responder_ip, self.responder_port)
        return (self.proto, *sorted((a, b)))

    def __str__(self) -> str:
        return (
            f"{self.proto.name.lower()}:"
            f"{self.initiator_ip}:{self.initiator_port}>"
            f"{self.responder_ip}:{self.responder_port}"
        )


@dataclass(slots=True)
class FlowLabels:
    traffic_class: str | None = None  # untunneled | tunneled
    tunnel_kind: str | None = None
    app_kind: str | None = None
    mtu: int | None = None
    dataset_tag: str | None = None


@dataclass
class Flow:
    """Ordered, direction-annotated packet sequence under one five-tuple.

    Per-packet data lives in parallel numpy arrays; ``dir_signs`` holds
    +1/-1 per :func:`direction_sign`. The first packet is always from the
    initiator and timestamps are non-decreasing.
    """

    key: FlowKey
    ts_micros: np.ndarray
    dir_signs: np.ndarray
    sizes: np.ndarray
    payloads: np.ndarray
    labels: FlowLabels = field(default_factory=FlowLabels)

    @classmethod
    def from_packets(cls, key: FlowKey, packets, labels: FlowLabels | None = None):
        """Build from (ts_micros, Direction, size, payload) tuples."""
        ts = np.array([p[0] for p in packets], dtype=np.int64)
        signs = np.array([direction_sign(p[1]) for p in packets], dtype=np.int8)
        sizes = np.array([p[2] for p in packets], dtype=np.int64)
        payloads = np.array([p[3] for p in packets], dtype=np.int64)
        return cls(key, ts, signs, sizes, payloads, labels or FlowLabels())

    def __post_init__(self):
        if len(self.ts_micros) == 0:
            raise ValueError("a flow cannot be empty")
        if self.dir_signs[0] != 1:
            raise ValueError("first packet of a flow must come from the initiator")
        if np.any(np.diff(self.ts_micros) < 0):
            raise ValueError("flow timestamps must be non-decreasing")

    @property
    def n_packets(self) -> int:
        return len(self.ts_micros)

    @property
    def start_ts(self) -> int:
        return int(self.ts_micros[0])

    @property
    def end_ts(self) -> int:
        return int(self.ts_micros[-1])

    @property
    def duration_s(self) -> float:
        return (self.end_ts - self.start_ts) / 1e6

    @property
    def signed_sizes(self) -> np.ndarray:
        return self.sizes * self.dir_signs

    def packets(self):
        """Yield (ts_micros, Direction, size, payload) tuples."""
        for i in range(self.n_packets):
            yield (
                int(self.ts_micros[i]),
                Direction(int(self.dir_signs[i])),
                int(self.sizes[i]),
                int(self.payloads[i]),
            )


@dataclass
class AssemblyConfig:
    idle_timeout_s: float = 600.0
    tcp_close_ends_flow: bool = True

    def __post_init__(self):
        if self.idle_timeout_s <= 0:
            raise ValueError("idle_timeout_s must be positive")


class _Builder:
    __slots__ = ("key", "ts", "signs", "sizes", "payloads", "last_ts",
                 "fin_init", "fin_resp", "closed", "order")

    def __init__(self, key: FlowKey, order: int):
        self.key = key
        self.ts: list[int] = []
        self.signs: list[int] = []
        self.sizes: list[int] = []
        self.payloads: list[int] = []
        self.last_ts = 0
        self.fin_init = False
        self.fin_resp = False
        self.closed = False
        self.order = order

    def add(self, rec: PacketRecord, sign: int, cfg: AssemblyConfig):
        self.ts.append(rec.ts_micros)
        self.signs.append(sign)
        self.sizes.append(rec.ip_total_len)
        self.payloads.append(rec.payload_len)
        self.last_ts = rec.ts_micros
        if rec.proto == Transport.TCP and cfg.tcp_close_ends_flow:
            if rec.tcp_flags & TCP_RST:
                self.closed = True
            if rec.tcp_flags & TCP_FIN:
                if sign == 1:
                    self.fin_init = True
                else:
                    self.fin_resp = True
                if self.fin_init and self.fin_resp:
                    self.closed = True

    def finish(self) -> Flow:
        return Flow(
            key=self.key,
            ts_micros=np.array(self.ts, dtype=np.int64),
            dir_signs=np.array(self.signs, dtype=np.int8),
            sizes=np.array(self.sizes, dtype=np.int64),
            payloads=np.array(self.payloads, dtype=np.int64),
        )


def assemble(records, cfg: AssemblyConfig | None = None) -> list[Flow]:
    """Group packet records into flows.

    Input must be time-sorted; disorder up to 1 ms is fixed by a stable
    re-sort, anything worse raises ValueError. A gap over the idle
    timeout, or a packet after FIN-FIN/RST when ``tcp_close_ends_flow``,
    starts a new flow on the same tuple. Output is ordered by start time.
    """
    cfg = cfg or AssemblyConfig()
    records = list(records)
    running_max = None
    for rec in records:
        if running_max is not None and running_max - rec.ts_micros > REORDER_TOLERANCE_MICROS:
            raise ValueError(
                f"packet at {rec.ts_micros} us arrives more than 1 ms after "
                f"a later packet ({running_max} us); input not time-sorted"
            )
        if running_max is None or rec.ts_micros > running_max:
            running_max = rec.ts_micros
    records.sort(key=lambda r: r.ts_micros)

    timeout_micros = int(cfg.idle_timeout_s * 1e6)
    open_flows: dict[tuple, _Builder] = {}
    done: list[_Builder] = []
    order = 0

    for rec in records:
        key = FlowKey(rec.src_ip, rec.src_port, rec.dst_ip, rec.dst_port, rec.proto)
        canon = key.canonical()
        builder = open_flows.get(canon)
        if builder is not None:
            expired = rec.ts_micros - builder.last_ts > timeout_micros
            if expired or builder.closed:
                done.append(builder)
                builder = None
        if builder is None:
            builder = _Builder(key, order)
            order += 1
            open_flows[canon] = builder
        sign = 1 if (rec.src_ip, rec.src_port) == (
            builder.key.initiator_ip, builder.key.initiator_port) else -1
        builder.add(rec, sign, cfg)

    done.extend(open_flows.values())
    done.sort(key=lambda b: (b.ts[0], b.order))
    return [b.finish() for b in done]
