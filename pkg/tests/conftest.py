"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from tunnelscope.flows import Direction, Flow, FlowKey
from tunnelscope.pcapio import PacketRecord, Transport, base_header_len
from tunnelscope.synthgen import GenConfig, generate_corpus

TCP = Transport.TCP
UDP = Transport.UDP


def make_key(proto=TCP, a="10.0.0.1", ap=1111, b="10.0.0.2", bp=2222) -> FlowKey:
    return FlowKey(a, ap, b, bp, proto)


def flow_from_signed(signed_sizes, ts_micros=None, proto=TCP, key=None) -> Flow:
    """Build a flow from signed packet sizes (+ = initiator)."""
    if ts_micros is None:
        ts_micros = list(range(0, len(signed_sizes) * 1000, 1000))
    packets = [
        (int(ts), Direction.FROM_INITIATOR if s > 0 else Direction.FROM_RESPONDER,
         abs(int(s)), max(abs(int(s)) - 40, 0))
        for ts, s in zip(ts_micros, signed_sizes)
    ]
    return Flow.from_packets(key or make_key(proto=proto), packets)


def random_records(rng, n, start_ts=0, tuples=3):
    """Time-ordered, header-consistent records over a few five-tuples."""
    records = []
    ts = start_ts
    for _ in range(n):
        ts += int(rng.integers(1, 5000))
        proto = TCP if rng.random() < 0.6 else UDP
        k = int(rng.integers(0, tuples))
        fwd = bool(rng.integers(0, 2))
        a = (f"192.168.0.{k + 1}", 10000 + k)
        b = ("10.1.2.3", 443)
        src, dst = (a, b) if fwd else (b, a)
        payload = int(rng.integers(0, 1400))
        records.append(PacketRecord(
            ts_micros=ts,
            src_ip=src[0], dst_ip=dst[0],
            proto=proto,
            src_port=src[1], dst_port=dst[1],
            ip_total_len=base_header_len(proto) + payload,
            payload_len=payload,
            tcp_flags=0x18 if proto == TCP else 0,
        ))
    return records


@pytest.fixture(scope="session")
def small_corpus():
    """720 labeled flows: 6 per cell over all 6 MTUs, 4 apps, 5 tunnels
    plus untunneled."""
    return generate_corpus(GenConfig(flows_per_cell=6, master_seed=99))


@pytest.fixture(scope="session")
def tiny_corpus():
    """96 labeled flows over 2 MTUs, for fast CLI and pipeline tests."""
    return generate_corpus(GenConfig(mtu_list=[1500, 1200], flows_per_cell=2,
                                     master_seed=7))
