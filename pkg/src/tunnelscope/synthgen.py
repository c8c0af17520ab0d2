"""Seeded synthetic labeled flow corpus.

Each tunnel kind contributes a deterministic handshake prefix, a
per-packet encapsulation overhead, and a payload rounding granularity;
applications contribute request/response size processes and turn counts.
Logical messages are padded to the granularity, then segmented so every
packet's IP total length stays at or below the cell's MTU.

``per_packet_overhead`` is the full on-wire per-packet overhead including
IP and transport headers, so an untunneled TCP packet carries 40 bytes of
overhead and a tunneled one adds its encapsulation on top.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidMtuError
from .flows import TUNNELED, UNTUNNELED, Flow, FlowKey, FlowLabels
from .pcapio import PacketRecord, Transport, base_header_len, write_pcap

MIN_MTU = 576
DEFAULT_MTUS = [1500, 1472, 1420, 1400, 1300, 1200]

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TunnelProfile:
    kind: str
    transport: Transport
    handshake_template: tuple[int, ...]  # signed IP total lengths
    per_packet_overhead: int
    record_granularity: int
    port: int = 0

    def __post_init__(self):
        if any(abs(v) < 1 for v in self.handshake_template):
            raise ValueError("handshake template sizes must be >= 1 in magnitude")
        if self.handshake_template and self.handshake_template[0] <= 0:
            raise ValueError("handshake must start from the initiator")
        if self.per_packet_overhead < base_header_len(self.transport):
            raise ValueError("overhead cannot be below the bare IP+transport headers")
        if self.record_granularity < 1:
            raise ValueError("record_granularity must be >= 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "transport": self.transport.name.lower(),
            "handshake_template": list(self.handshake_template),
            "per_packet_overhead": self.per_packet_overhead,
            "record_granularity": self.record_granularity,
            "port": self.port,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TunnelProfile":
        return cls(
            kind=d["kind"],
            transport=Transport.TCP if d["transport"] == "tcp" else Transport.UDP,
            handshake_template=tuple(d["handshake_template"]),
            per_packet_overhead=d["per_packet_overhead"],
            record_granularity=d["record_granularity"],
            port=d.get("port", 0),
        )


@dataclass(frozen=True)
class AppProfile:
    kind: str
    request_size: dict
    response_size: dict
    turns: dict
    iat: dict
    port: int = 0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "request_size": dict(self.request_size),
            "response_size": dict(self.response_size),
            "turns": dict(self.turns),
            "iat": dict(self.iat),
            "port": self.port,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AppProfile":
        return cls(d["kind"], d["request_size"], d["response_size"],
                   d["turns"], d["iat"], d.get("port", 0))


def _draw_positive(spec: dict, rng) -> float:
    dist = spec["dist"]
    if dist == "lognormal":
        return float(rng.lognormal(spec["mean"], spec["sigma"]))
    if dist == "uniform_int":
        return float(rng.integers(spec["low"], spec["high"] + 1))
    if dist == "constant":
        return float(spec["value"])
    if dist == "exponential":
        return float(rng.exponential(spec["mean"]))
    raise ValueError(f"unknown distribution {dist!r}")


def draw_size(spec: dict, rng) -> int:
    return max(1, int(round(_draw_positive(spec, rng))))


def draw_count(spec: dict, rng) -> int:
    return max(1, int(round(_draw_positive(spec, rng))))


def draw_iat_micros(spec: dict, rng) -> int:
    return max(1, int(round(_draw_positive(spec, rng) * 1e6)))


def default_tunnel_profiles() -> list[TunnelProfile]:
    """Five stand-in tunnel profiles with pairwise distinct handshakes.

    The constants are plausible for the protocols they imitate but are
    profile data, not protocol implementations; template magnitudes stay
    below 1150 so common MTU values never clip the handshake.
    """
    return [
        TunnelProfile("ssh", Transport.TCP,
                      (74, -61, 1098, -1082, 106, -486, 58, -58),
                      per_packet_overhead=84, record_granularity=16, port=22),
        TunnelProfile("openvpn-tcp", Transport.TCP,
                      (102, -94, 1132, -1146, 386, -330, 290),
                      per_packet_overhead=97, record_granularity=1, port=1194),
        TunnelProfile("openvpn-udp", Transport.UDP,
                      (86, -94, 1110, -1134, 342, -270),
                      per_packet_overhead=69, record_granularity=1, port=1194),
        TunnelProfile("ipsec-esp", Transport.UDP,
                      (218, -238, 1102, -922),
                      per_packet_overhead=65, record_granularity=4, port=4500),
        TunnelProfile("wireguard", Transport.UDP,
                      (176, -120),
                      per_packet_overhead=60, record_granularity=16, port=51820),
    ]


def default_app_profiles() -> list[AppProfile]:
    """Web browsing, wget, FTP download and FTP upload processes."""
    return [
        AppProfile(
            "web",
            request_size={"dist": "lognormal", "mean": 6.1, "sigma": 0.5},
            response_size={"dist": "lognormal", "mean": 9.4, "sigma": 1.2},
            turns={"dist": "uniform_int", "low": 4, "high": 16},
            iat={"dist": "exponential", "mean": 0.06},
            port=443,
        ),
        AppProfile(
            "wget",
            request_size={"dist": "lognormal", "mean": 5.3, "sigma": 0.3},
            response_size={"dist": "lognormal", "mean": 11.6, "sigma": 0.8},
            turns={"dist": "uniform_int", "low": 1, "high": 3},
            iat={"dist": "exponential", "mean": 0.01},
            port=80,
        ),
        AppProfile(
            "ftp-get",
            request_size={"dist": "lognormal", "mean": 4.0, "sigma": 0.4},
            response_size={"dist": "lognormal", "mean": 8.6, "sigma": 2.2},
            turns={"dist": "uniform_int", "low": 6, "high": 14},
            iat={"dist": "exponential", "mean": 0.02},
            port=21,
        ),
        AppProfile(
            "ftp-put",
            request_size={"dist": "lognormal", "mean": 8.6, "sigma": 2.2},
            response_size={"dist": "lognormal", "mean": 4.0, "sigma": 0.4},
            turns={"dist": "uniform_int", "low": 6, "high": 14},
            iat={"dist": "exponential", "mean": 0.02},
            port=21,
        ),
    ]


@dataclass
class GenConfig:
    mtu_list: list[int] = field(default_factory=lambda: list(DEFAULT_MTUS))
    flows_per_cell: int = 100
    apps: list[AppProfile] = field(default_factory=default_app_profiles)
    tunnels: list[TunnelProfile] = field(default_factory=default_tunnel_profiles)
    include_untunneled: bool = True
    master_seed: int = 0
    dataset_tag: str = "synth"

    def __post_init__(self):
        if self.flows_per_cell < 1:
            raise ValueError("flows_per_cell must be >= 1")


def _segment_message(nbytes: int, granularity: int, capacity: int,
                     overhead: int) -> list[int]:
    """IP total lengths for one logical message after padding, overhead
    and MTU clipping."""
    padded = int(math.ceil(nbytes / granularity)) * granularity
    full, rem = divmod(padded, capacity)
    sizes = [capacity + overhead] * full
    if rem:
        sizes.append(rem + overhead)
    return sizes


def generate_flow(tunnel: TunnelProfile | None, app: AppProfile, mtu: int,
                  rng, key: FlowKey, start_ts: int = 0,
                  dataset_tag: str | None = None) -> Flow:
    """One synthetic flow: handshake template verbatim (clipped only when
    an entry exceeds the MTU), then the application's request/response
    turns, all segmented to the MTU."""
    if mtu < MIN_MTU:
        raise InvalidMtuError(f"mtu {mtu} below the supported minimum {MIN_MTU}")
    transport = tunnel.transport if tunnel else Transport.TCP
    overhead = tunnel.per_packet_overhead if tunnel else base_header_len(transport)
    granularity = tunnel.record_granularity if tunnel else 1
    capacity = mtu - overhead
    if capacity < 1:
        raise InvalidMtuError(f"mtu {mtu} leaves no payload room after "
                              f"{overhead} bytes of overhead")

    sizes: list[int] = []
    signs: list[int] = []
    if tunnel:
        for v in tunnel.handshake_template:
            sizes.append(min(abs(v), mtu))
            signs.append(1 if v > 0 else -1)

    for _ in range(draw_count(app.turns, rng)):
        for sign, spec in ((1, app.request_size), (-1, app.response_size)):
            for s in _segment_message(draw_size(spec, rng), granularity,
                                      capacity, overhead):
                sizes.append(s)
                signs.append(sign)

    ts = np.empty(len(sizes), dtype=np.int64)
    t = start_ts
    for i in range(len(sizes)):
        ts[i] = t
        t += draw_iat_micros(app.iat, rng)

    base = base_header_len(transport)
    sizes_arr = np.array(sizes, dtype=np.int64)
    labels = FlowLabels(
        traffic_class=TUNNELED if tunnel else UNTUNNELED,
        tunnel_kind=tunnel.kind if tunnel else None,
        app_kind=app.kind,
        mtu=mtu,
        dataset_tag=dataset_tag,
    )
    return Flow(
        key=key,
        ts_micros=ts,
        dir_signs=np.array(signs, dtype=np.int8),
        sizes=sizes_arr,
        payloads=sizes_arr - base,
        labels=labels,
    )


def generate_corpus(cfg: GenConfig) -> list[Flow]:
    """flows_per_cell x |mtu_list| x |apps| flows per tunnel kind, plus
    the same grid untunneled; deterministic for a fixed master seed."""
    cells: list[TunnelProfile | None] = list(cfg.tunnels)
    if cfg.include_untunneled:
        cells.append(None)
    total = len(cells) * len(cfg.mtu_list) * len(cfg.apps) * cfg.flows_per_cell
    seeds = np.random.SeedSequence(cfg.master_seed).spawn(total)

    flows: list[Flow] = []
    counter = 0
    for tunnel in cells:
        for mtu in cfg.mtu_list:
            for app in cfg.apps:
                for _ in range(cfg.flows_per_cell):
                    rng = np.random.default_rng(seeds[counter])
                    key = _flow_key(counter, tunnel, app)
                    start = 1_700_000_000_000_000 + counter * 1_000_000
                    flows.append(generate_flow(tunnel, app, mtu, rng, key,
                                               start, cfg.dataset_tag))
                    counter += 1
    return flows


def _flow_key(counter: int, tunnel: TunnelProfile | None, app: AppProfile) -> FlowKey:
    transport = tunnel.transport if tunnel else Transport.TCP
    resp_port = tunnel.port if tunnel else app.port
    return FlowKey(
        initiator_ip=f"10.{(counter >> 16) & 255}.{(counter >> 8) & 255}.{counter & 255}",
        initiator_port=40_000 + counter % 20_000,
        responder_ip=f"198.51.100.{counter % 250 + 1}",
        responder_port=resp_port or 9000,
        proto=transport,
    )


# profile file round-trip

def save_profiles(tunnels: list[TunnelProfile], apps: list[AppProfile], path) -> None:
    doc = {
        "tunnels": [t.to_dict() for t in tunnels],
        "apps": [a.to_dict() for a in apps],
    }
    Path(path).write_text(json.dumps(doc, indent=2))


def load_profiles(path) -> tuple[list[TunnelProfile], list[AppProfile]]:
    doc = json.loads(Path(path).read_text())
    return (
        [TunnelProfile.from_dict(t) for t in doc["tunnels"]],
        [AppProfile.from_dict(a) for a in doc["apps"]],
    )


# pcap + label manifest export

def flows_to_records(flows: list[Flow]) -> list[PacketRecord]:
    records: list[PacketRecord] = []
    for flow in flows:
        key = flow.key
        base = base_header_len(key.proto)
        for i in range(flow.n_packets):
            outbound = flow.dir_signs[i] == 1
            records.append(PacketRecord(
                ts_micros=int(flow.ts_micros[i]),
                src_ip=key.initiator_ip if outbound else key.responder_ip,
                dst_ip=key.responder_ip if outbound else key.initiator_ip,
                proto=key.proto,
                src_port=key.initiator_port if outbound else key.responder_port,
                dst_port=key.responder_port if outbound else key.initiator_port,
                ip_total_len=int(flow.sizes[i]),
                payload_len=int(flow.sizes[i]) - base,
            ))
    records.sort(key=lambda r: r.ts_micros)
    return records


def export_corpus(flows: list[Flow], pcap_path, manifest_path,
                  snaplen: int = 128) -> None:
    """Write the corpus as a pcap plus a sidecar JSON label manifest
    keyed by five-tuple and flow start timestamp."""
    write_pcap(flows_to_records(flows), pcap_path, snaplen=snaplen)
    entries = []
    for flow in flows:
        entries.append({
            "proto": flow.key.proto.name.lower(),
            "initiator_ip": flow.key.initiator_ip,
            "initiator_port": flow.key.initiator_port,
            "responder_ip": flow.key.responder_ip,
            "responder_port": flow.key.responder_port,
            "start_ts_micros": flow.start_ts,
            "labels": {
                "traffic_class": flow.labels.traffic_class,
                "tunnel_kind": flow.labels.tunnel_kind,
                "app_kind": flow.labels.app_kind,
                "mtu": flow.labels.mtu,
                "dataset_tag": flow.labels.dataset_tag,
            },
        })
    Path(manifest_path).write_text(json.dumps(
        {"version": MANIFEST_VERSION, "flows": entries}))


def apply_manifest(flows: list[Flow], manifest_path) -> int:
    """Label assembled flows from a manifest; returns the number of flows
    matched. Unmatched flows keep empty labels."""
    doc = json.loads(Path(manifest_path).read_text())
    if doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {doc.get('version')!r}")
    index = {}
    for entry in doc["flows"]:
        key = (entry["proto"], entry["initiator_ip"], entry["initiator_port"],
               entry["responder_ip"], entry["responder_port"],
               entry["start_ts_micros"])
        index[key] = entry["labels"]
    matched = 0
    for flow in flows:
        key = (flow.key.proto.name.lower(), flow.key.initiator_ip,
               flow.key.initiator_port, flow.key.responder_ip,
               flow.key.responder_port, flow.start_ts)
        labels = index.get(key)
        if labels is not None:
            flow.labels = FlowLabels(
                traffic_class=labels.get("traffic_class"),
                tunnel_kind=labels.get("tunnel_kind"),
                app_kind=labels.get("app_kind"),
                mtu=labels.get("mtu"),
                dataset_tag=labels.get("dataset_tag"),
            )
            matched += 1
    return matched
