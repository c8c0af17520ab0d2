"""Flow assembly: grouping, orientation, timeouts, TCP close handling."""

import numpy as np
import pytest

from tunnelscope.flows import (
    AssemblyConfig,
    Direction,
    Flow,
    FlowKey,
    assemble,
    direction_sign,
)
from tunnelscope.pcapio import PacketRecord, Transport

from conftest import TCP, UDP, make_key, random_records


def pkt(ts, src, sport, dst, dport, proto=TCP, payload=10, flags=0):
    base = 40 if proto == TCP else 28
    return PacketRecord(ts_micros=ts, src_ip=src, dst_ip=dst, proto=proto,
                        src_port=sport, dst_port=dport,
                        ip_total_len=base + payload, payload_len=payload,
                        tcp_flags=flags)


def test_direction_sign():
    assert direction_sign(Direction.FROM_INITIATOR) == 1
    assert direction_sign(Direction.FROM_RESPONDER) == -1
    for d in Direction:
        assert direction_sign(d) * direction_sign(d) == 1


def test_bidirectional_grouping():
    records = [
        pkt(1000, "10.0.0.1", 1111, "10.0.0.2", 2222),
        pkt(2000, "10.0.0.2", 2222, "10.0.0.1", 1111),
    ]
    flows = assemble(records)
    assert len(flows) == 1
    assert list(flows[0].dir_signs) == [1, -1]
    assert flows[0].key.initiator_ip == "10.0.0.1"


def test_distinct_src_ports_are_distinct_flows():
    records = [
        pkt(1000, "10.0.0.1", 1111, "10.0.0.2", 2222),
        pkt(2000, "10.0.0.1", 1112, "10.0.0.2", 2222),
    ]
    assert len(assemble(records)) == 2


def test_idle_timeout_splits_udp_tuple():
    records = [
        pkt(0, "1.1.1.1", 5, "2.2.2.2", 6, proto=UDP),
        pkt(700_000_000, "1.1.1.1", 5, "2.2.2.2", 6, proto=UDP),
    ]
    flows = assemble(records, AssemblyConfig(idle_timeout_s=600))
    assert [f.n_packets for f in flows] == [1, 1]


def test_fin_fin_ends_flow():
    records = [
        pkt(1, "7.0.0.1", 1, "7.0.0.2", 2, flags=0x02),
        pkt(2, "7.0.0.1", 1, "7.0.0.2", 2, flags=0x11),  # FIN+ACK
        pkt(3, "7.0.0.2", 2, "7.0.0.1", 1, flags=0x11),  # FIN+ACK
        pkt(4, "7.0.0.1", 1, "7.0.0.2", 2, flags=0x02),  # new flow
    ]
    flows = assemble(records)
    assert [f.n_packets for f in flows] == [3, 1]


def test_rst_ends_flow_and_flag_can_be_disabled():
    records = [
        pkt(1, "1.0.0.1", 1, "2.0.0.2", 2),
        pkt(2, "2.0.0.2", 2, "1.0.0.1", 1, flags=0x04),
        pkt(3, "1.0.0.1", 1, "2.0.0.2", 2),
    ]
    assert [f.n_packets for f in assemble(records)] == [2, 1]
    relaxed = assemble(records, AssemblyConfig(tcp_close_ends_flow=False))
    assert [f.n_packets for f in relaxed] == [3]


def test_packet_conservation_and_determinism():
    rng = np.random.default_rng(42)
    records = random_records(rng, 500, tuples=7)
    flows_a = assemble(records)
    flows_b = assemble(records)
    assert sum(f.n_packets for f in flows_a) == len(records)
    assert len(flows_a) == len(flows_b)
    for fa, fb in zip(flows_a, flows_b):
        assert fa.key == fb.key
        assert np.array_equal(fa.ts_micros, fb.ts_micros)
        assert np.array_equal(fa.sizes, fb.sizes)


def test_orientation_fixed_by_first_packet():
    # responder-heavy traffic after the first packet never flips the key
    records = [pkt(1, "9.0.0.1", 7, "9.0.0.2", 8)]
    records += [pkt(1 + i, "9.0.0.2", 8, "9.0.0.1", 7) for i in range(1, 10)]
    flows = assemble(records)
    assert len(flows) == 1
    assert flows[0].key.initiator_ip == "9.0.0.1"
    assert list(flows[0].dir_signs[1:]) == [-1] * 9


def test_mild_disorder_tolerated_and_gross_disorder_rejected():
    a = pkt(1000, "1.0.0.1", 1, "2.0.0.2", 2)
    b = pkt(1500, "1.0.0.1", 1, "2.0.0.2", 2)
    flows = assemble([b, a])  # 0.5 ms early: tolerated
    assert list(flows[0].ts_micros) == [1000, 1500]

    late = pkt(5_000_000, "1.0.0.1", 1, "2.0.0.2", 2)
    with pytest.raises(ValueError, match="not time-sorted"):
        assemble([late, a])


def test_flows_emitted_by_start_time():
    records = [
        pkt(100, "1.0.0.1", 1, "2.0.0.2", 2),
        pkt(200, "3.0.0.3", 3, "4.0.0.4", 4),
        pkt(300, "1.0.0.1", 1, "2.0.0.2", 2),
    ]
    flows = assemble(records)
    assert [f.start_ts for f in flows] == [100, 200]


def test_flow_invariants_enforced():
    key = make_key()
    with pytest.raises(ValueError, match="empty"):
        Flow.from_packets(key, [])
    with pytest.raises(ValueError, match="initiator"):
        Flow.from_packets(key, [(0, Direction.FROM_RESPONDER, 50, 10)])
    with pytest.raises(ValueError, match="non-decreasing"):
        Flow.from_packets(key, [
            (10, Direction.FROM_INITIATOR, 50, 10),
            (5, Direction.FROM_INITIATOR, 50, 10),
        ])


def test_key_is_direction_agnostic():
    k1 = FlowKey("1.1.1.1", 10, "2.2.2.2", 20, TCP)
    k2 = FlowKey("2.2.2.2", 20, "1.1.1.1", 10, TCP)
    assert k1.canonical() == k2.canonical()
    assert k1 != k2
