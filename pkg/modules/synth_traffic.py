"""
Seeded synthetic VR and Non-VR packet traces.

VR: per rendered frame, a DL batch of maximum-size fragments plus one residual
fragment, with periodic UL tracking packets and one small UL feedback packet per
frame. Non-VR: either bursty on-demand streaming (requests, then a chunk
download, then idle) or a steady bidirectional meeting flow.
"""

import json
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from modules.errors import ContractError
from modules.feature_extract import LABEL_NONVR, LABEL_VR
from modules.trace_ingest import Direction, FlowKey, PacketRecord, Protocol, write_canonical_csv

logger = logging.getLogger(__name__)

SERVER_IP = "192.168.1.10"
VR_CLIENT_IP = "192.168.1.20"
NONVR_CLIENT_IP = "192.168.1.30"
CDN_IP = "142.250.200.14"

VR_FPS = (60, 90, 120)
VR_BITRATES_MBPS = (40.0, 50.0, 100.0)


@dataclass(frozen=True)
class VrProfile:
    fps: int = 90
    bitrate_mbps: float = 100.0
    dl_fragment_bytes: int = 1490
    ul_tracking_bytes: int = 254
    ul_interval_ms: float = 2.0
    frame_size_jitter: float = 0.10
    intra_batch_gap_us: int = 50
    ul_feedback_bytes: int = 120
    frame_timing_jitter: float = 0.2
    # one transport ack per `ul_ack_every` DL fragments received; 0 disables
    ul_ack_bytes: int = 64
    ul_ack_every: int = 16

    def __post_init__(self):
        if self.fps <= 0 or self.bitrate_mbps <= 0:
            raise ContractError("fps and bitrate must be positive")
        if self.dl_fragment_bytes <= 1:
            raise ContractError("fragment size must exceed 1 byte")
        if self.ul_interval_ms <= 0:
            raise ContractError("UL tracking interval must be positive")
        if not 0 <= self.frame_size_jitter < 1 or not 0 <= self.frame_timing_jitter < 0.5:
            raise ContractError("jitter fractions out of range")
        if self.ul_ack_every < 0 or self.ul_ack_bytes < 0:
            raise ContractError("ack settings must be >= 0")

    @property
    def name(self) -> str:
        return f"vr-{self.fps}fps-{self.bitrate_mbps:g}mbps"

    @property
    def nominal_frame_bytes(self) -> float:
        return self.bitrate_mbps * 1e6 / 8 / self.fps


class NonVrKind(str, Enum):
    STREAMING = "streaming"
    MEETING = "meeting"


@dataclass(frozen=True)
class NonVrProfile:
    kind: NonVrKind = NonVrKind.STREAMING
    dl_packet_bytes: int = 1290
    ul_packet_bytes: int = 80
    burst_ms: float = 200.0
    idle_ms: float = 800.0
    burst_rate_mbps: float = 40.0
    burst_jitter: float = 0.10
    requests_per_burst: int = 2
    request_lead_ms: float = 10.0
    meeting_dl_pps: float = 200.0
    meeting_ul_pps: float = 150.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NonVrKind(self.kind))
        if min(self.dl_packet_bytes, self.ul_packet_bytes) < 1:
            raise ContractError("packet sizes must be positive")
        if min(self.burst_ms, self.idle_ms, self.burst_rate_mbps, self.meeting_dl_pps, self.meeting_ul_pps) <= 0:
            raise ContractError("durations and rates must be positive")

    @property
    def name(self) -> str:
        return f"nonvr-{self.kind.value}"


def _records(times: np.ndarray, sizes: np.ndarray, direction: Direction, flow: FlowKey) -> list[tuple]:
    return [(int(t), direction, int(s), flow) for t, s in zip(times, sizes)]


def _finish(rows: list[tuple], duration_us: int) -> list[PacketRecord]:
    rows = [r for r in rows if r[0] < duration_us]
    # stable sort keeps batch order on equal timestamps
    rows.sort(key=lambda r: r[0])
    return [PacketRecord(*r) for r in rows]


def vr_frame_bytes(profile: VrProfile, rng: np.random.Generator, n_frames: int) -> np.ndarray:
    nominal = profile.nominal_frame_bytes
    if profile.frame_size_jitter:
        factors = rng.uniform(1 - profile.frame_size_jitter, 1 + profile.frame_size_jitter, n_frames)
    else:
        factors = np.ones(n_frames)
    return np.maximum(np.rint(nominal * factors), 1).astype(np.int64)


def split_frame(frame_bytes: int, fragment_bytes: int) -> list[int]:
    """Full fragments followed by the residual (omitted when the frame divides evenly)."""
    full, residual = divmod(int(frame_bytes), fragment_bytes)
    return [fragment_bytes] * full + ([residual] if residual else [])


def gen_vr_trace(profile: VrProfile, duration_ms: float, seed: int) -> list[PacketRecord]:
    duration_us = int(round(duration_ms * 1000))
    if duration_us <= 0:
        return []
    rng = np.random.default_rng(seed)
    dl_flow = FlowKey(SERVER_IP, 9944, VR_CLIENT_IP, 9943, Protocol.UDP)
    ul_flow = dl_flow.reversed()

    n_frames = (duration_us * profile.fps + 999_999) // 1_000_000
    nominal_starts = (np.arange(n_frames, dtype=np.int64) * 1_000_000) // profile.fps
    period_us = 1_000_000 / profile.fps
    if profile.frame_timing_jitter:
        offsets = rng.uniform(-profile.frame_timing_jitter, profile.frame_timing_jitter, n_frames) * period_us
        starts = np.maximum(nominal_starts + np.rint(offsets).astype(np.int64), 0)
    else:
        starts = nominal_starts
    frame_bytes = vr_frame_bytes(profile, rng, n_frames)

    rows = []
    dl_times = []
    for start, size in zip(starts, frame_bytes):
        fragments = split_frame(size, profile.dl_fragment_bytes)
        times = int(start) + np.arange(len(fragments)) * profile.intra_batch_gap_us
        rows.extend(_records(times, np.asarray(fragments), Direction.DL, dl_flow))
        if profile.ul_feedback_bytes:
            rows.append((int(times[-1]), Direction.UL, profile.ul_feedback_bytes, ul_flow))
        dl_times.append(times)

    if profile.ul_ack_every and profile.ul_ack_bytes and dl_times:
        received = np.sort(np.concatenate(dl_times), kind="stable")
        acks = received[profile.ul_ack_every - 1::profile.ul_ack_every]
        rows.extend(_records(acks, np.full(len(acks), profile.ul_ack_bytes), Direction.UL, ul_flow))

    interval_us = profile.ul_interval_ms * 1000
    tracking = np.rint(np.arange(0, duration_us, interval_us)).astype(np.int64)
    rows.extend(_records(tracking, np.full(len(tracking), profile.ul_tracking_bytes), Direction.UL, ul_flow))

    records = _finish(rows, duration_us)
    logger.debug("Generated %s packets for %s (seed=%s)", len(records), profile.name, seed)
    return records


def _gen_streaming(profile: NonVrProfile, duration_us: int, rng: np.random.Generator,
                   dl_flow: FlowKey, ul_flow: FlowKey) -> list[tuple]:
    cycle_us = (profile.burst_ms + profile.idle_ms) * 1000
    spacing_us = profile.dl_packet_bytes * 8 / profile.burst_rate_mbps
    rows = []
    for cycle_start in np.arange(0, duration_us, cycle_us):
        requests = cycle_start + np.arange(profile.requests_per_burst) * 1000.0
        rows.extend(_records(np.rint(requests), np.full(len(requests), profile.ul_packet_bytes),
                             Direction.UL, ul_flow))
        burst_us = profile.burst_ms * 1000 * rng.uniform(1 - profile.burst_jitter, 1 + profile.burst_jitter)
        burst_start = cycle_start + profile.request_lead_ms * 1000
        times = burst_start + np.arange(0, burst_us, spacing_us)
        rows.extend(_records(np.rint(times), np.full(len(times), profile.dl_packet_bytes),
                             Direction.DL, dl_flow))
    return rows


def _poisson_times(rate_pps: float, duration_us: int, rng: np.random.Generator) -> np.ndarray:
    expected = int(rate_pps * duration_us / 1e6)
    gaps = rng.exponential(1e6 / rate_pps, expected + 10 * int(np.sqrt(expected + 1)) + 10)
    times = np.cumsum(gaps)
    while times[-1] < duration_us:
        more = np.cumsum(rng.exponential(1e6 / rate_pps, expected + 10)) + times[-1]
        times = np.concatenate([times, more])
    return np.rint(times[times < duration_us])


def _gen_meeting(profile: NonVrProfile, duration_us: int, rng: np.random.Generator,
                 dl_flow: FlowKey, ul_flow: FlowKey) -> list[tuple]:
    dl = _poisson_times(profile.meeting_dl_pps, duration_us, rng)
    ul = _poisson_times(profile.meeting_ul_pps, duration_us, rng)
    return (_records(dl, np.full(len(dl), profile.dl_packet_bytes), Direction.DL, dl_flow)
            + _records(ul, np.full(len(ul), profile.ul_packet_bytes), Direction.UL, ul_flow))


def gen_nonvr_trace(profile: NonVrProfile, duration_ms: float, seed: int) -> list[PacketRecord]:
    duration_us = int(round(duration_ms * 1000))
    if duration_us <= 0:
        return []
    rng = np.random.default_rng(seed)
    protocol = Protocol.TCP if profile.kind is NonVrKind.STREAMING else Protocol.UDP
    dl_flow = FlowKey(CDN_IP, 443, NONVR_CLIENT_IP, 50514, protocol)
    ul_flow = dl_flow.reversed()
    if profile.kind is NonVrKind.STREAMING:
        rows = _gen_streaming(profile, duration_us, rng, dl_flow, ul_flow)
    else:
        rows = _gen_meeting(profile, duration_us, rng, dl_flow, ul_flow)
    return _finish(rows, duration_us)


def default_vr_profiles() -> list[VrProfile]:
    return [VrProfile(fps=fps, bitrate_mbps=rate) for fps in VR_FPS for rate in VR_BITRATES_MBPS]


def default_nonvr_profiles() -> list[NonVrProfile]:
    return [NonVrProfile(kind=NonVrKind.STREAMING), NonVrProfile(kind=NonVrKind.MEETING)]


@dataclass
class CorpusTrace:
    name: str
    label: int
    seed: int
    profile: VrProfile | NonVrProfile
    records: list[PacketRecord]


def derive_seeds(seed: int, count: int) -> list[int]:
    """Independent 64-bit child seeds from one base seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def gen_labeled_corpus(vr_profiles: list[VrProfile], nonvr_profiles: list[NonVrProfile],
                       duration_ms: float, seed: int) -> list[CorpusTrace]:
    seeds = derive_seeds(seed, len(vr_profiles) + len(nonvr_profiles))
    corpus = []
    for profile, trace_seed in zip(vr_profiles, seeds):
        corpus.append(CorpusTrace(profile.name, LABEL_VR, trace_seed, profile,
                                  gen_vr_trace(profile, duration_ms, trace_seed)))
    for profile, trace_seed in zip(nonvr_profiles, seeds[len(vr_profiles):]):
        corpus.append(CorpusTrace(profile.name, LABEL_NONVR, trace_seed, profile,
                                  gen_nonvr_trace(profile, duration_ms, trace_seed)))
    logger.info("Generated corpus of %s traces (%s VR, %s Non-VR)",
                len(corpus), len(vr_profiles), len(nonvr_profiles))
    return corpus


def _profile_dict(profile) -> dict:
    data = asdict(profile)
    if isinstance(profile, NonVrProfile):
        data["kind"] = profile.kind.value
    return data


def corpus_manifest(corpus: list[CorpusTrace], duration_ms: float, seed: int) -> dict:
    return {
        "seed": seed,
        "duration_ms": duration_ms,
        "traces": [
            {
                "name": t.name,
                "label": t.label,
                "seed": t.seed,
                "type": "vr" if isinstance(t.profile, VrProfile) else "nonvr",
                "profile": _profile_dict(t.profile),
                "path": f"{t.name}.csv",
                "packets": len(t.records),
            }
            for t in corpus
        ],
    }


def write_corpus(corpus: list[CorpusTrace], out_dir, duration_ms: float, seed: int,
                 header_lines=(), provenance: dict | None = None) -> Path:
    """Write one canonical CSV per trace plus manifest.json; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for trace in corpus:
        write_canonical_csv(trace.records, out_dir / f"{trace.name}.csv", header_lines)
    manifest = corpus_manifest(corpus, duration_ms, seed)
    if provenance is not None:
        manifest["provenance"] = provenance
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    logger.info("Wrote %s traces and manifest to %s", len(corpus), out_dir)
    return manifest_path


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def profile_from_manifest(entry: dict) -> VrProfile | NonVrProfile:
    if entry["type"] == "vr":
        return VrProfile(**entry["profile"])
    return NonVrProfile(**entry["profile"])


def regenerate_trace(entry: dict, duration_ms: float) -> list[PacketRecord]:
    profile = profile_from_manifest(entry)
    if isinstance(profile, VrProfile):
        return gen_vr_trace(profile, duration_ms, entry["seed"])
    return gen_nonvr_trace(profile, duration_ms, entry["seed"])
