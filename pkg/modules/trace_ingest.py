"""
Packet trace ingestion.

Reads classic pcap captures (Ethernet link type, either byte order, micro- or
nanosecond timestamps) and the canonical CSV trace format, and assigns DL/UL
direction relative to the client station.
"""

import csv
import io
import ipaddress
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Iterable, NamedTuple, TextIO

from modules.errors import TraceFormatError, UnsupportedFormatError

logger = logging.getLogger(__name__)

# https://wiki.wireshark.org/Development/LibpcapFileFormat
# Global Header | Packet Header | Packet Data | Packet Header | Packet Data | ...
GLOBAL_HEADER_LEN = 24
PACKET_HEADER_LEN = 16
GLOBAL_HEADER_FMT = "IHHiIII"
PACKET_HEADER_FMT = "IIII"

# magic as it appears on disk -> (struct byte order, timestamp fraction divisor to reach µs)
PCAP_MAGICS = {
    b"\xd4\xc3\xb2\xa1": ("<", 1),
    b"\xa1\xb2\xc3\xd4": (">", 1),
    b"\x4d\x3c\xb2\xa1": ("<", 1000),
    b"\xa1\xb2\x3c\x4d": (">", 1000),
}
LINKTYPE_ETHERNET = 1

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_IPV6 = 0x86DD
IPPROTO_TCP = 6
IPPROTO_UDP = 17

CSV_HEADER = ("timestamp_us", "direction", "size_bytes", "src_ip", "src_port", "dst_ip", "dst_port", "protocol")


class Protocol(str, Enum):
    UDP = "UDP"
    TCP = "TCP"


class Direction(str, Enum):
    DL = "DL"
    UL = "UL"


@dataclass(frozen=True)
class FlowKey:
    src_ip: ipaddress.IPv4Address
    src_port: int
    dst_ip: ipaddress.IPv4Address
    dst_port: int
    protocol: Protocol

    def __post_init__(self):
        object.__setattr__(self, "src_ip", ipaddress.IPv4Address(self.src_ip))
        object.__setattr__(self, "dst_ip", ipaddress.IPv4Address(self.dst_ip))
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        for port in (self.src_port, self.dst_port):
            if not 0 <= port <= 65535:
                raise ValueError(f"port out of range: {port}")

    def reversed(self) -> "FlowKey":
        return FlowKey(self.dst_ip, self.dst_port, self.src_ip, self.src_port, self.protocol)

    def normalized(self) -> "FlowKey":
        """Orientation-independent key shared by a flow and its reversal."""
        forward = (int(self.src_ip), self.src_port, int(self.dst_ip), self.dst_port)
        backward = (int(self.dst_ip), self.dst_port, int(self.src_ip), self.src_port)
        return self if forward <= backward else self.reversed()


@dataclass(frozen=True)
class PacketRecord:
    timestamp_us: int
    direction: Direction
    size_bytes: int
    flow: FlowKey

    def __post_init__(self):
        if self.size_bytes < 1:
            raise ValueError(f"packet size must be >= 1, got {self.size_bytes}")
        object.__setattr__(self, "direction", Direction(self.direction))


@dataclass(frozen=True)
class TraceMetadata:
    client_ip: ipaddress.IPv4Address | None
    t0_us: int
    packet_count: int
    duration_us: int


class PcapEntry(NamedTuple):
    timestamp_us: int
    frame_len: int
    flow: FlowKey | None


class CsvTrace(NamedTuple):
    records: list[PacketRecord]
    warnings: list[str]
    t0_us: int


class DirectedTrace(NamedTuple):
    records: list[PacketRecord]
    dropped: int
    t0_us: int


def _extract_flow(frame: bytes, counters: dict) -> FlowKey | None:
    """Walk Ethernet -> IPv4 -> UDP/TCP; None for anything else."""
    if len(frame) < ETH_HEADER_LEN:
        return None
    (ethertype,) = struct.unpack_from("!H", frame, 12)
    if ethertype == ETHERTYPE_IPV6:
        counters["ipv6"] += 1
        return None
    if ethertype != ETHERTYPE_IPV4:
        counters["non_ip"] += 1
        return None

    ip_offset = ETH_HEADER_LEN
    if len(frame) < ip_offset + 20:
        return None
    version_ihl = frame[ip_offset]
    if version_ihl >> 4 != 4:
        return None
    ihl = (version_ihl & 0x0F) * 4
    (flags_fragment,) = struct.unpack_from("!H", frame, ip_offset + 6)
    if flags_fragment & 0x1FFF:
        # later fragments carry no transport header
        return None
    protocol = frame[ip_offset + 9]
    if protocol == IPPROTO_UDP:
        proto = Protocol.UDP
    elif protocol == IPPROTO_TCP:
        proto = Protocol.TCP
    else:
        return None

    l4_offset = ip_offset + ihl
    if len(frame) < l4_offset + 4:
        return None
    src_port, dst_port = struct.unpack_from("!HH", frame, l4_offset)
    src_ip = ipaddress.IPv4Address(frame[ip_offset + 12:ip_offset + 16])
    dst_ip = ipaddress.IPv4Address(frame[ip_offset + 16:ip_offset + 20])
    return FlowKey(src_ip, src_port, dst_ip, dst_port, proto)


def parse_pcap(data: bytes | BinaryIO) -> list[PcapEntry]:
    """Parse a classic pcap capture into (absolute µs, original frame length, FlowKey|None)."""
    stream = io.BytesIO(data) if isinstance(data, (bytes, bytearray, memoryview)) else data

    header = stream.read(GLOBAL_HEADER_LEN)
    if len(header) < GLOBAL_HEADER_LEN:
        raise TraceFormatError("truncated pcap global header", offset=len(header))
    magic = bytes(header[:4])
    if magic not in PCAP_MAGICS:
        raise UnsupportedFormatError(f"unsupported pcap magic 0x{magic.hex()}", offset=0)
    order, frac_divisor = PCAP_MAGICS[magic]

    _, _, _, _, _, _, link_type = struct.unpack(order + GLOBAL_HEADER_FMT, header)
    if link_type != LINKTYPE_ETHERNET:
        raise UnsupportedFormatError(f"unsupported link type {link_type}", offset=20)

    entries = []
    counters = {"ipv6": 0, "non_ip": 0}
    offset = GLOBAL_HEADER_LEN
    index = 0
    while True:
        packet_header = stream.read(PACKET_HEADER_LEN)
        if not packet_header:
            break
        if len(packet_header) < PACKET_HEADER_LEN:
            raise TraceFormatError("truncated packet header", packet_index=index, offset=offset)
        ts_sec, ts_frac, incl_len, orig_len = struct.unpack(order + PACKET_HEADER_FMT, packet_header)
        frame = stream.read(incl_len)
        if len(frame) < incl_len:
            raise TraceFormatError(
                f"truncated packet body ({len(frame)} of {incl_len} bytes)",
                packet_index=index,
                offset=offset + PACKET_HEADER_LEN,
            )
        timestamp_us = ts_sec * 1_000_000 + ts_frac // frac_divisor
        entries.append(PcapEntry(timestamp_us, orig_len, _extract_flow(frame, counters)))
        offset += PACKET_HEADER_LEN + incl_len
        index += 1

    if counters["ipv6"]:
        logger.warning("Skipped %s IPv6 frames (only IPv4 flows are classified)", counters["ipv6"])
    if counters["non_ip"]:
        logger.debug("Skipped %s non-IP frames", counters["non_ip"])
    logger.info("Parsed %s pcap records", len(entries))
    return entries


def read_pcap(path) -> list[PcapEntry]:
    with open(path, "rb") as f:
        return parse_pcap(f)


def _parse_csv_row(row: list[str], line_no: int) -> tuple[int, Direction, int, FlowKey]:
    if len(row) != len(CSV_HEADER):
        raise TraceFormatError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", line=line_no)
    ts, direction, size, src_ip, src_port, dst_ip, dst_port, protocol = row
    if direction not in ("DL", "UL"):
        raise TraceFormatError(f"invalid direction {direction!r}", line=line_no)
    if protocol not in ("UDP", "TCP"):
        raise TraceFormatError(f"invalid protocol {protocol!r}", line=line_no)
    try:
        size_bytes = int(size)
        flow = FlowKey(src_ip, int(src_port), dst_ip, int(dst_port), Protocol(protocol))
        timestamp = int(ts)
    except ValueError as e:
        raise TraceFormatError(f"malformed row: {e}", line=line_no) from e
    if size_bytes < 1:
        raise TraceFormatError(f"packet size must be >= 1, got {size_bytes}", line=line_no)
    return timestamp, Direction(direction), size_bytes, flow


def parse_canonical_csv(stream: TextIO | Iterable[str]) -> CsvTrace:
    """Parse the canonical CSV trace format.

    Timestamps are rebased to the earliest one, which is kept as `t0_us`;
    `emit_canonical_csv(trace.records, trace.t0_us)` restores the original times.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)

    rows = []
    warnings = []
    header_seen = False
    previous_ts = None
    for line_no, line in enumerate(stream, 1):
        line = line.rstrip("\r\n")
        if not header_seen:
            if line.startswith("#") or not line:
                continue
            if tuple(next(csv.reader([line]))) != CSV_HEADER:
                raise TraceFormatError("unexpected CSV header", line=line_no)
            header_seen = True
            continue
        if not line:
            continue
        row = _parse_csv_row(next(csv.reader([line])), line_no)
        if previous_ts is not None and row[0] < previous_ts:
            warnings.append(f"line {line_no}: timestamp {row[0]} precedes {previous_ts}")
        previous_ts = row[0]
        rows.append(row)

    if not header_seen:
        raise TraceFormatError("missing CSV header", line=1)

    t0 = min((r[0] for r in rows), default=0)
    records = [PacketRecord(ts - t0, direction, size, flow) for ts, direction, size, flow in rows]
    for warning in warnings:
        logger.warning("Non-monotone trace timestamp at %s", warning)
    return CsvTrace(records, warnings, t0)


def read_canonical_csv(path) -> CsvTrace:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return parse_canonical_csv(f)


def emit_canonical_csv(records: Iterable[PacketRecord], t0_us: int = 0) -> str:
    lines = [",".join(CSV_HEADER)]
    for r in records:
        lines.append(
            f"{r.timestamp_us + t0_us},{r.direction.value},{r.size_bytes},{r.flow.src_ip},{r.flow.src_port},"
            f"{r.flow.dst_ip},{r.flow.dst_port},{r.flow.protocol.value}"
        )
    return "\n".join(lines) + "\n"


def write_canonical_csv(records: Iterable[PacketRecord], path, header_lines: Iterable[str] = ()) -> Path:
    """Rebased records under the header; the header is where callers record the origin."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in header_lines:
            f.write(line + "\n")
        f.write(emit_canonical_csv(records))
    return path


def assign_direction(entries: Iterable[PcapEntry], client_ip) -> DirectedTrace:
    """Label packets DL (to client) or UL (from client); everything else is dropped and tallied."""
    client = ipaddress.IPv4Address(client_ip)
    kept = []
    dropped = 0
    for entry in entries:
        flow = entry.flow
        if flow is None:
            dropped += 1
        elif flow.dst_ip == client:
            kept.append((entry.timestamp_us, Direction.DL, entry.frame_len, flow))
        elif flow.src_ip == client:
            kept.append((entry.timestamp_us, Direction.UL, entry.frame_len, flow))
        else:
            dropped += 1

    t0 = min((k[0] for k in kept), default=0)
    records = [PacketRecord(ts - t0, direction, size, flow) for ts, direction, size, flow in kept]
    if dropped:
        logger.info("Dropped %s packets not addressed to/from %s", dropped, client)
    return DirectedTrace(records, dropped, t0)


def filter_flow(records: Iterable[PacketRecord], flow: FlowKey, bidirectional: bool = True) -> list[PacketRecord]:
    wanted = {flow, flow.reversed()} if bidirectional else {flow}
    return [r for r in records if r.flow in wanted]


def trace_metadata(records: list[PacketRecord], client_ip=None, t0_us: int = 0) -> TraceMetadata:
    if records:
        first = min(r.timestamp_us for r in records)
        duration = max(r.timestamp_us for r in records) - first
    else:
        duration = 0
    client = ipaddress.IPv4Address(client_ip) if client_ip is not None else None
    return TraceMetadata(client, t0_us, len(records), duration)
