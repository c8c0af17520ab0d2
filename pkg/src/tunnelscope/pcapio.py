"""Classic pcap reading/writing and Ethernet/IPv4/TCP/UDP frame decoding.

The reader is total on arbitrary bytes: any input either yields packet
records or raises one of the typed errors from :mod:`tunnelscope.errors`.
Malformed frames inside a structurally sound capture are skipped and
counted, never fatal.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    CorruptCaptureError,
    UnsupportedFormatError,
    UnsupportedLinkTypeError,
)

ETHERTYPE_IPV4 = 0x0800
LINKTYPE_ETHERNET = 1

# magic -> (struct byte-order prefix, nanosecond resolution)
_MAGICS = {
    0xA1B2C3D4: ("micro", "<"),
    0xA1B23C4D: ("nano", "<"),
}

TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_ACK = 0x10

_ETH_HEADER = 14
_IP_MIN_HEADER = 20
_TCP_MIN_HEADER = 20
_UDP_HEADER = 8


class Transport(enum.IntEnum):
    TCP = 6
    UDP = 17


@dataclass(frozen=True, slots=True)
class PacketRecord:
    """One decoded IPv4 TCP/UDP packet.

    ``ip_total_len`` is the IP-header total length field (header plus
    payload, link layer excluded); ``payload_len`` is the transport
    payload byte count. ``tcp_flags`` is the raw TCP flag byte (0 for UDP).
    """

    ts_micros: int
    src_ip: str
    dst_ip: str
    proto: Transport
    src_port: int
    dst_port: int
    ip_total_len: int
    payload_len: int
    tcp_flags: int = 0


@dataclass
class CaptureMeta:
    magic_variant: str  # micro-le | micro-be | nano-le | nano-be
    link_type: int
    snaplen: int
    decoded: int = 0
    skipped: int = 0

    @property
    def total_frames(self) -> int:
        return self.decoded + self.skipped


def read_pcap(path) -> tuple[list[PacketRecord], CaptureMeta]:
    """Read a classic pcap file into packet records plus capture metadata."""
    data = Path(path).read_bytes()
    return parse_pcap_bytes(data)


def parse_pcap_bytes(data: bytes) -> tuple[list[PacketRecord], CaptureMeta]:
    """Decode an in-memory classic pcap image (fuzz target)."""
    if len(data) < 4:
        raise UnsupportedFormatError(
            f"file too short for a pcap magic number ({len(data)} bytes)"
        )

    magic_le = struct.unpack_from("<I", data, 0)[0]
    magic_be = struct.unpack_from(">I", data, 0)[0]
    if magic_le in _MAGICS:
        resolution, order = _MAGICS[magic_le]
        variant = f"{resolution}-le"
    elif magic_be in _MAGICS:
        resolution, _ = _MAGICS[magic_be]
        order = ">"
        variant = f"{resolution}-be"
    else:
        raise UnsupportedFormatError(f"unrecognized pcap magic 0x{magic_be:08x}")

    if len(data) < 24:
        raise CorruptCaptureError("truncated global header", offset=len(data))

    snaplen, link_type = struct.unpack_from(order + "II", data, 16)
    if link_type != LINKTYPE_ETHERNET:
        raise UnsupportedLinkTypeError(
            f"link type {link_type} not supported (need Ethernet = 1)"
        )

    meta = CaptureMeta(magic_variant=variant, link_type=link_type, snaplen=snaplen)
    records: list[PacketRecord] = []
    rec_header = struct.Struct(order + "IIII")
    offset = 24
    nano = resolution == "nano"

    while offset < len(data):
        if offset + 16 > len(data):
            raise CorruptCaptureError("truncated record header", offset=offset)
        ts_sec, ts_frac, incl_len, orig_len = rec_header.unpack_from(data, offset)
        offset += 16
        if offset + incl_len > len(data):
            raise CorruptCaptureError(
                f"record body of {incl_len} bytes runs past end of file",
                offset=offset,
            )
        frame = data[offset : offset + incl_len]
        offset += incl_len

        ts_micros = ts_sec * 1_000_000 + (ts_frac // 1000 if nano else ts_frac)
        record = _decode_frame(frame, ts_micros)
        if record is None:
            meta.skipped += 1
        else:
            meta.decoded += 1
            records.append(record)

    return records, meta


def _decode_frame(frame: bytes, ts_micros: int) -> PacketRecord | None:
    """Decode one Ethernet frame; None means skip (non-IPv4, non-TCP/UDP,
    or too mangled to carry the five-tuple)."""
    if len(frame) < _ETH_HEADER:
        return None
    ethertype = struct.unpack_from("!H", frame, 12)[0]
    if ethertype != ETHERTYPE_IPV4:
        return None

    ip_off = _ETH_HEADER
    if len(frame) < ip_off + _IP_MIN_HEADER:
        return None
    ver_ihl = frame[ip_off]
    if ver_ihl >> 4 != 4:
        return None
    ihl = (ver_ihl & 0x0F) * 4
    if ihl < _IP_MIN_HEADER or len(frame) < ip_off + ihl:
        return None
    ip_total_len, = struct.unpack_from("!H", frame, ip_off + 2)
    proto = frame[ip_off + 9]
    if proto not in (Transport.TCP, Transport.UDP):
        return None
    src_ip = _ip_str(frame, ip_off + 12)
    dst_ip = _ip_str(frame, ip_off + 16)

    l4_off = ip_off + ihl
    if proto == Transport.TCP:
        if len(frame) < l4_off + _TCP_MIN_HEADER:
            return None
        src_port, dst_port = struct.unpack_from("!HH", frame, l4_off)
        doff = (frame[l4_off + 12] >> 4) * 4
        if doff < _TCP_MIN_HEADER:
            return None
        tcp_flags = frame[l4_off + 13]
        payload_len = max(ip_total_len - ihl - doff, 0)
    else:
        if len(frame) < l4_off + _UDP_HEADER:
            return None
        src_port, dst_port, udp_len = struct.unpack_from("!HHH", frame, l4_off)
        tcp_flags = 0
        payload_len = min(
            max(udp_len - _UDP_HEADER, 0),
            max(ip_total_len - ihl - _UDP_HEADER, 0),
        )

    return PacketRecord(
        ts_micros=ts_micros,
        src_ip=src_ip,
        dst_ip=dst_ip,
        proto=Transport(proto),
        src_port=src_port,
        dst_port=dst_port,
        ip_total_len=ip_total_len,
        payload_len=payload_len,
        tcp_flags=tcp_flags,
    )


def _ip_str(buf: bytes, off: int) -> str:
    return f"{buf[off]}.{buf[off + 1]}.{buf[off + 2]}.{buf[off + 3]}"


def base_header_len(proto: Transport) -> int:
    """On-wire IP + transport header bytes for option-free headers."""
    return _IP_MIN_HEADER + (_TCP_MIN_HEADER if proto == Transport.TCP else _UDP_HEADER)


def write_pcap(records, path, snaplen: int = 65535) -> None:
    """Write records as a micro-LE classic pcap with synthetic headers.

    Records must be time-ordered and header-consistent: since the emitted
    IPv4/TCP/UDP headers are option-free, ``ip_total_len`` must equal the
    base header length plus ``payload_len`` or the file could not decode
    back to the same record. Payload bytes are zero-filled and truncated
    at ``snaplen`` on disk (the reader recovers lengths from header
    fields, so truncation is lossless at the record level).
    """
    out = bytearray()
    out += struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET)

    prev_ts = None
    for i, rec in enumerate(records):
        if prev_ts is not None and rec.ts_micros < prev_ts:
            raise ValueError(f"records not time-ordered at index {i}")
        prev_ts = rec.ts_micros
        expect = base_header_len(rec.proto) + rec.payload_len
        if rec.ip_total_len != expect:
            raise ValueError(
                f"record {i}: ip_total_len {rec.ip_total_len} inconsistent with "
                f"option-free headers + payload ({expect})"
            )
        frame = _encode_frame(rec)
        ts_sec, ts_usec = divmod(rec.ts_micros, 1_000_000)
        if not 0 <= ts_sec < 2**32:
            raise ValueError(f"record {i}: timestamp out of pcap range")
        incl = min(len(frame), snaplen)
        out += struct.pack("<IIII", ts_sec, ts_usec, incl, len(frame))
        out += frame[:incl]

    Path(path).write_bytes(bytes(out))


def _encode_frame(rec: PacketRecord) -> bytes:
    eth = (
        bytes.fromhex("020000000002")
        + bytes.fromhex("020000000001")
        + struct.pack("!H", ETHERTYPE_IPV4)
    )
    ip_wo_cksum = struct.pack(
        "!BBHHHBBH4s4s",
        0x45,
        0,
        rec.ip_total_len,
        0,
        0,
        64,
        int(rec.proto),
        0,
        _ip_bytes(rec.src_ip),
        _ip_bytes(rec.dst_ip),
    )
    cksum = _inet_checksum(ip_wo_cksum)
    ip = ip_wo_cksum[:10] + struct.pack("!H", cksum) + ip_wo_cksum[12:]

    if rec.proto == Transport.TCP:
        l4 = struct.pack(
            "!HHIIBBHHH",
            rec.src_port,
            rec.dst_port,
            0,
            0,
            5 << 4,
            rec.tcp_flags & 0xFF,
            65535,
            0,
            0,
        )
    else:
        l4 = struct.pack(
            "!HHHH", rec.src_port, rec.dst_port, _UDP_HEADER + rec.payload_len, 0
        )
    return eth + ip + l4 + bytes(rec.payload_len)


def _ip_bytes(ip: str) -> bytes:
    parts = [int(p) for p in ip.split(".")]
    if len(parts) != 4 or any(not 0 <= p <= 255 for p in parts):
        raise ValueError(f"bad IPv4 address {ip!r}")
    return bytes(parts)


def _inet_checksum(header: bytes) -> int:
    total = 0
    for i in range(0, len(header), 2):
        total += (header[i] << 8) | header[i + 1]
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF
