import ipaddress
import struct

import numpy as np
import pytest

from modules.feature_extract import ExtractionConfig, FeatureVector, N_FEATURES
from modules.trace_ingest import Direction, FlowKey, PacketRecord, Protocol

SERVER_IP = "10.0.0.1"
CLIENT_IP = "10.0.0.2"

MAGIC_LE_US = struct.pack("<I", 0xA1B2C3D4)
MAGIC_BE_US = struct.pack(">I", 0xA1B2C3D4)
MAGIC_LE_NS = struct.pack("<I", 0xA1B23C4D)
MAGIC_BE_NS = struct.pack(">I", 0xA1B23C4D)

_ORDERS = {MAGIC_LE_US: "<", MAGIC_BE_US: ">", MAGIC_LE_NS: "<", MAGIC_BE_NS: ">"}


def ipv4_frame(src_ip, dst_ip, src_port, dst_port, frame_len, protocol=17) -> bytes:
    """Ethernet + IPv4 + UDP/TCP frame padded to exactly frame_len bytes."""
    ethernet = b"\x00\x11\x22\x33\x44\x55" + b"\x66\x77\x88\x99\xaa\xbb" + struct.pack("!H", 0x0800)
    ip_total = frame_len - len(ethernet)
    ip = struct.pack(
        "!BBHHHBBH4s4s", 0x45, 0, ip_total, 1, 0, 64, protocol, 0,
        ipaddress.IPv4Address(src_ip).packed, ipaddress.IPv4Address(dst_ip).packed,
    )
    if protocol == 17:
        l4 = struct.pack("!HHHH", src_port, dst_port, ip_total - 20, 0)
    else:
        l4 = struct.pack("!HHIIBBHHH", src_port, dst_port, 0, 0, 0x50, 0x18, 1024, 0, 0)
    frame = ethernet + ip + l4
    return frame + b"\x00" * (frame_len - len(frame))


def ipv6_frame(frame_len=100) -> bytes:
    ethernet = b"\x00" * 12 + struct.pack("!H", 0x86DD)
    return ethernet + b"\x60" + b"\x00" * (frame_len - len(ethernet) - 1)


def build_pcap(packets, magic=MAGIC_LE_US, link_type=1) -> bytes:
    """packets: (ts_sec, ts_frac, frame_bytes[, orig_len]) tuples."""
    order = _ORDERS[magic]
    out = magic + struct.pack(order + "HHiIII", 2, 4, 0, 0, 65535, link_type)
    for packet in packets:
        sec, frac, frame = packet[:3]
        orig_len = packet[3] if len(packet) > 3 else len(frame)
        out += struct.pack(order + "IIII", sec, frac, len(frame), orig_len) + frame
    return out


def make_records(rows, client_ip=CLIENT_IP, server_ip=SERVER_IP) -> list[PacketRecord]:
    """rows: (timestamp_us, "DL"|"UL", size) tuples on one UDP flow."""
    dl_flow = FlowKey(server_ip, 9944, client_ip, 9943, Protocol.UDP)
    records = []
    for ts, direction, size in rows:
        flow = dl_flow if direction == "DL" else dl_flow.reversed()
        records.append(PacketRecord(ts, Direction(direction), size, flow))
    return records


def random_rows(n, label, seed=0) -> list[FeatureVector]:
    rng = np.random.default_rng(seed)
    return [FeatureVector(tuple(float(v) for v in rng.random(N_FEATURES)), label) for _ in range(n)]


def separable_dataset(n_per_class=60, seed=0, n_features=4):
    """Two Gaussian blobs; feature 0 separates the classes, the rest is noise."""
    rng = np.random.default_rng(seed)
    X0 = rng.normal(0.0, 1.0, (n_per_class, n_features))
    X1 = rng.normal(0.0, 1.0, (n_per_class, n_features))
    X0[:, 0] -= 4.0
    X1[:, 0] += 4.0
    X = np.vstack([X0, X1])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return X, y


@pytest.fixture
def extraction():
    return ExtractionConfig(omega_ms=500, n_subsamples=20)


@pytest.fixture
def dl_flow():
    return FlowKey(SERVER_IP, 9944, CLIENT_IP, 9943, Protocol.UDP)


@pytest.fixture
def blobs():
    return separable_dataset()
