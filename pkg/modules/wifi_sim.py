"""
Discrete-event model of an access point's downlink serving one VR station and
one background (BG) station.

The AP is a single non-preemptive server. A transmission opportunity carries up
to `aggregation_limit_packets` consecutive head packets of one station's queue
and costs their airtime plus one fixed overhead. FIFO picks the station whose
head packet arrived first. Under the priority scheduler the AP behaves as FIFO
until the VR flow's first sample has been classified as VR, then always serves
the VR queue before the BG queue.

The simulated VR flow arrives at the AP over wired ingress, so its fragments
are spaced much closer than on the client side of the air link.
"""

import heapq
import itertools
import logging
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np
import pandas as pd

from modules.classifiers import TrainedModel
from modules.errors import ContractError
from modules.feature_extract import LABEL_VR, ExtractionConfig, extract_features, window_packets
from modules.synth_traffic import VrProfile, derive_seeds, gen_vr_trace
from modules.trace_ingest import Direction, PacketRecord

logger = logging.getLogger(__name__)

VR = 0
BG = 1
CLASS_NAMES = ("VR", "BG")

INSTABILITY_QUEUE_FACTOR = 100
SATURATION_BUSY_FRACTION = 0.999
# second-half mean queue over first-half mean queue that counts as a growing backlog
INSTABILITY_GROWTH_FACTOR = 2.0
# wired ingress: one 1490 B fragment per ~12 us at 1 Gbps
AP_INGRESS_GAP_US = 12


class Scheduler(str, Enum):
    FIFO = "fifo"
    VR_PRIORITY = "vr_priority"

    @classmethod
    def parse(cls, value) -> "Scheduler":
        if isinstance(value, cls):
            return value
        if value == "priority":
            return cls.VR_PRIORITY
        return cls(value)


class EventKind(str, Enum):
    BG_STATE_TOGGLE = "bg_state_toggle"
    CLASSIFIER_FIRE = "classifier_fire"
    ARRIVAL_VR = "arrival_vr"
    ARRIVAL_BG = "arrival_bg"
    SERVICE_COMPLETE = "service_complete"


# same-time events are processed in this order
KIND_ORDER = {kind: i for i, kind in enumerate(EventKind)}


class SimEvent(NamedTuple):
    time_us: float
    kind: EventKind
    detail: object = None


class ServiceRecord(NamedTuple):
    start_us: float
    end_us: float
    station: int
    n_packets: int
    first_arrival_us: float
    queued_vr: int
    queued_bg: int


@dataclass(frozen=True)
class SimConfig:
    vr_profile: VrProfile = field(
        default_factory=lambda: VrProfile(fps=90, bitrate_mbps=100.0, intra_batch_gap_us=AP_INGRESS_GAP_US))
    bg_load_mbps: float = 300.0
    bg_on_mean_ms: float = 70.0
    bg_off_mean_ms: float = 30.0
    bg_packet_bytes: int = 1500
    phy_rate_vr_mbps: float = 600.5
    phy_rate_bg_mbps: float = 480.4
    per_frame_overhead_us: float = 100.0
    aggregation_limit_packets: int = 64
    scheduler: Scheduler = Scheduler.VR_PRIORITY
    classify_after_ms: float = 500.0
    duration_s: float = 60.0
    warmup_s: float = 2.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheduler", Scheduler.parse(self.scheduler))
        problems = []
        if self.bg_load_mbps < 0:
            problems.append("bg_load_mbps must be >= 0")
        for name in ("bg_on_mean_ms", "bg_off_mean_ms", "phy_rate_vr_mbps", "phy_rate_bg_mbps",
                     "classify_after_ms", "duration_s"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        if self.bg_packet_bytes < 1:
            problems.append("bg_packet_bytes must be >= 1")
        if self.per_frame_overhead_us < 0:
            problems.append("per_frame_overhead_us must be >= 0")
        if self.aggregation_limit_packets < 1:
            problems.append("aggregation_limit_packets must be >= 1")
        if not 0 <= self.warmup_s < self.duration_s:
            problems.append("warmup_s must be in [0, duration_s)")
        if problems:
            raise ContractError("; ".join(problems))

    @property
    def duration_us(self) -> float:
        return self.duration_s * 1e6

    def as_dict(self) -> dict:
        data = asdict(self)
        data["scheduler"] = self.scheduler.value
        return data


@dataclass(frozen=True)
class ClassDelay:
    count: int
    mean_ms: float
    median_ms: float
    p99_ms: float
    max_ms: float
    served_bytes: int

    @classmethod
    def from_delays(cls, delays_us: np.ndarray, served_bytes: int) -> "ClassDelay":
        if len(delays_us) == 0:
            return cls(0, float("nan"), float("nan"), float("nan"), float("nan"), served_bytes)
        ms = np.asarray(delays_us) / 1000.0
        median, p99 = np.percentile(ms, [50, 99])
        return cls(len(ms), float(ms.mean()), float(median), float(p99), float(ms.max()), served_bytes)


class DelayStats(NamedTuple):
    vr: ClassDelay
    bg: ClassDelay


@dataclass(frozen=True)
class ClassifierDecision:
    label: int
    source: str
    at_ms: float

    @property
    def triggers_priority(self) -> bool:
        return self.label == LABEL_VR


@dataclass
class SimResult:
    stats: DelayStats
    arrivals: tuple[int, int]
    served: tuple[int, int]
    queued_end: tuple[int, int]
    mean_queue: float
    end_queue: int
    offered_airtime_us: float
    busy_us: float
    horizon_us: float
    unstable: bool
    priority_at_us: float | None = None
    decision: ClassifierDecision | None = None
    events: list = field(default_factory=list)
    services: list = field(default_factory=list)
    delays: pd.DataFrame | None = None


class _Packet(NamedTuple):
    arrival_us: float
    order: int
    size: int


def _as_arrivals(arrivals) -> tuple[np.ndarray, np.ndarray]:
    data = np.asarray(arrivals, dtype=float).reshape(-1, 2)
    times, sizes = data[:, 0], data[:, 1].astype(np.int64)
    if len(times) and (np.any(np.diff(times) < 0) or times[0] < 0):
        raise ContractError("arrival times must be non-negative and sorted")
    return times, sizes


def simulate(vr_arrivals, bg_arrivals, *, phy_rate_vr_mbps: float, phy_rate_bg_mbps: float,
             per_frame_overhead_us: float, aggregation_limit: int, priority_at_us: float | None = None,
             warmup_us: float = 0.0, end_us: float | None = None, bg_toggles=(),
             keep_log: bool = False, keep_delays: bool = False) -> SimResult:
    """Run the event loop over explicit (time_us, size_bytes) arrivals.

    priority_at_us schedules the switch to strict VR priority; None keeps FIFO
    throughout. Without end_us the run continues until every packet is served.
    """
    if aggregation_limit < 1:
        raise ContractError("aggregation_limit must be >= 1")
    streams = (_as_arrivals(vr_arrivals), _as_arrivals(bg_arrivals))
    rates = (phy_rate_vr_mbps, phy_rate_bg_mbps)
    arrival_kinds = (EventKind.ARRIVAL_VR, EventKind.ARRIVAL_BG)
    horizon = float("inf") if end_us is None else float(end_us)

    heap = []
    tiebreak = itertools.count()

    def push(time_us, kind, payload=None):
        heapq.heappush(heap, (time_us, KIND_ORDER[kind], next(tiebreak), kind, payload))

    for cls, (times, _) in enumerate(streams):
        if len(times):
            push(times[0], arrival_kinds[cls], 0)
    for time_us, state in bg_toggles:
        push(float(time_us), EventKind.BG_STATE_TOGGLE, state)
    if priority_at_us is not None:
        push(float(priority_at_us), EventKind.CLASSIFIER_FIRE)

    queues = (deque(), deque())
    arrivals = [0, 0]
    served = [0, 0]
    served_bytes = [0, 0]
    offered_airtime = 0.0
    delays = ([], [])
    dump = []
    events = []
    services = []
    order = itertools.count()
    priority = False
    in_service = None
    busy_us = 0.0
    area = 0.0
    area_at_mid = None
    midpoint = horizon / 2.0
    last_t = 0.0

    def accumulate(until):
        nonlocal area, area_at_mid, last_t
        depth = len(queues[VR]) + len(queues[BG])
        if area_at_mid is None and until >= midpoint:
            area_at_mid = area + depth * (midpoint - last_t)
        area += depth * (until - last_t)
        last_t = until

    def start_service(now):
        nonlocal in_service, busy_us
        vr_q, bg_q = queues
        if priority:
            cls = VR if vr_q else BG
        elif vr_q and bg_q:
            cls = VR if vr_q[0].order < bg_q[0].order else BG
        else:
            cls = VR if vr_q else BG
        queue = queues[cls]
        batch = [queue.popleft()]
        while queue and len(batch) < aggregation_limit:
            batch.append(queue.popleft())
        airtime = sum(p.size for p in batch) * 8 / rates[cls] + per_frame_overhead_us
        end = now + airtime
        busy_us += airtime
        in_service = (cls, batch)
        services.append(ServiceRecord(now, end, cls, len(batch), batch[0].arrival_us, len(vr_q), len(bg_q)))
        push(end, EventKind.SERVICE_COMPLETE, cls)

    while heap:
        now = heap[0][0]
        if now > horizon:
            break
        accumulate(now)
        while heap and heap[0][0] == now:
            _, _, _, kind, payload = heapq.heappop(heap)
            if kind is EventKind.ARRIVAL_VR or kind is EventKind.ARRIVAL_BG:
                cls = VR if kind is EventKind.ARRIVAL_VR else BG
                times, sizes = streams[cls]
                size = int(sizes[payload])
                queues[cls].append(_Packet(now, next(order), size))
                arrivals[cls] += 1
                offered_airtime += size * 8 / rates[cls]
                if payload + 1 < len(times):
                    push(times[payload + 1], kind, payload + 1)
            elif kind is EventKind.SERVICE_COMPLETE:
                cls, batch = in_service
                in_service = None
                for packet in batch:
                    served[cls] += 1
                    served_bytes[cls] += packet.size
                    if packet.arrival_us >= warmup_us:
                        delays[cls].append(now - packet.arrival_us)
                        if keep_delays:
                            dump.append((CLASS_NAMES[cls], packet.arrival_us, now - packet.arrival_us))
            elif kind is EventKind.CLASSIFIER_FIRE:
                priority = True
            if keep_log:
                events.append(SimEvent(now, kind, payload))
        if in_service is None and (queues[VR] or queues[BG]):
            start_service(now)

    end_time = last_t if end_us is None else horizon
    if end_us is not None:
        accumulate(horizon)
    queued_end = [len(queues[VR]), len(queues[BG])]
    if in_service is not None:
        queued_end[in_service[0]] += len(in_service[1])
    end_queue = queued_end[VR] + queued_end[BG]
    mean_queue = area / end_time if end_time > 0 else 0.0

    growing = False
    if area_at_mid is not None and midpoint > 0:
        first_half = area_at_mid / midpoint
        second_half = (area - area_at_mid) / (end_time - midpoint)
        growing = second_half > INSTABILITY_GROWTH_FACTOR * max(first_half, 1.0) and end_queue >= second_half

    unstable = False
    if end_time > 0:
        unstable = (
            offered_airtime >= end_time
            or end_queue > INSTABILITY_QUEUE_FACTOR * max(mean_queue, 1.0)
            or (min(busy_us, end_time) >= SATURATION_BUSY_FRACTION * end_time and end_queue > mean_queue)
            or growing
        )

    stats = DelayStats(
        ClassDelay.from_delays(np.array(delays[VR]), served_bytes[VR]),
        ClassDelay.from_delays(np.array(delays[BG]), served_bytes[BG]),
    )
    delay_frame = None
    if keep_delays:
        delay_frame = pd.DataFrame(dump, columns=["class", "arrival_us", "delay_us"])
    return SimResult(
        stats=stats,
        arrivals=tuple(arrivals),
        served=tuple(served),
        queued_end=tuple(queued_end),
        mean_queue=mean_queue,
        end_queue=end_queue,
        offered_airtime_us=offered_airtime,
        busy_us=busy_us,
        horizon_us=end_time,
        unstable=unstable,
        priority_at_us=priority_at_us,
        events=events,
        services=services,
        delays=delay_frame,
    )


def generate_bg_arrivals(load_mbps: float, on_mean_ms: float, off_mean_ms: float, packet_bytes: int,
                         duration_us: float, rng: np.random.Generator) -> tuple[np.ndarray, list]:
    """ON/OFF source with exponential state durations and Poisson arrivals while ON.

    The ON-state rate is scaled by (on + off) / on so the long-run average is load_mbps.
    Returns (arrival array of (time_us, size), [(toggle_time_us, is_on), ...]).
    """
    if load_mbps <= 0:
        return np.empty((0, 2)), []
    on_rate_per_us = load_mbps / (packet_bytes * 8) * (on_mean_ms + off_mean_ms) / on_mean_ms
    toggles = []
    chunks = []
    t, on = 0.0, True
    while t < duration_us:
        mean_ms = on_mean_ms if on else off_mean_ms
        end = min(t + rng.exponential(mean_ms * 1000.0), duration_us)
        toggles.append((t, on))
        if on:
            count = rng.poisson(on_rate_per_us * (end - t))
            chunks.append(np.sort(rng.uniform(t, end, count)))
        t, on = end, not on
    times = np.concatenate(chunks) if chunks else np.empty(0)
    return np.column_stack([times, np.full(len(times), packet_bytes)]), toggles


def _dl_arrivals(records: list[PacketRecord]) -> np.ndarray:
    dl = [(r.timestamp_us, r.size_bytes) for r in records if r.direction is Direction.DL]
    return np.array(dl, dtype=float).reshape(-1, 2)


def classify_trigger_hook(records: list[PacketRecord], model: TrainedModel | None,
                          classify_after_ms: float = 500.0, n_subsamples: int = 20) -> ClassifierDecision:
    """Classify the first classify_after_ms of the VR station's flow (both directions)."""
    if model is None:
        logger.warning("No classifier model supplied; using oracle VR label at %sms", classify_after_ms)
        return ClassifierDecision(LABEL_VR, "oracle", classify_after_ms)
    config = ExtractionConfig(omega_ms=int(round(classify_after_ms)), n_subsamples=n_subsamples)
    samples = window_packets(records, config)
    first = next((s for s in samples if s.index == 0), None)
    if first is None:
        logger.warning("VR flow has no packets in its first %sms; priority stays off", classify_after_ms)
        return ClassifierDecision(1 - LABEL_VR, "model", classify_after_ms)
    label = model.predict(extract_features(first, config).values)
    logger.info("First %sms sample of VR flow classified as %s", classify_after_ms,
                "VR" if label == LABEL_VR else "Non-VR")
    return ClassifierDecision(int(label), "model", classify_after_ms)


def run_sim(config: SimConfig, model: TrainedModel | None = None, keep_log: bool = False,
            keep_delays: bool = False) -> SimResult:
    vr_seed, bg_seed = derive_seeds(config.seed, 2)
    duration_ms = config.duration_s * 1000.0
    vr_records = gen_vr_trace(config.vr_profile, duration_ms, vr_seed)
    bg_arrivals, toggles = generate_bg_arrivals(
        config.bg_load_mbps, config.bg_on_mean_ms, config.bg_off_mean_ms, config.bg_packet_bytes,
        config.duration_us, np.random.default_rng(bg_seed))

    decision = None
    priority_at_us = None
    if config.scheduler is Scheduler.VR_PRIORITY:
        decision = classify_trigger_hook(vr_records, model, config.classify_after_ms)
        if decision.triggers_priority:
            priority_at_us = config.classify_after_ms * 1000.0

    result = simulate(
        _dl_arrivals(vr_records), bg_arrivals,
        phy_rate_vr_mbps=config.phy_rate_vr_mbps,
        phy_rate_bg_mbps=config.phy_rate_bg_mbps,
        per_frame_overhead_us=config.per_frame_overhead_us,
        aggregation_limit=config.aggregation_limit_packets,
        priority_at_us=priority_at_us,
        warmup_us=config.warmup_s * 1e6,
        end_us=config.duration_us,
        bg_toggles=toggles,
        keep_log=keep_log,
        keep_delays=keep_delays,
    )
    result.decision = decision
    if result.unstable:
        logger.warning("Run at %s Mbps (%s) is unstable: %s packets queued at end, mean queue %.1f",
                       config.bg_load_mbps, config.scheduler.value, result.end_queue, result.mean_queue)
    logger.info("Sim %s Mbps %s: VR p99 %.3fms, BG p99 %.3fms", config.bg_load_mbps, config.scheduler.value,
                result.stats.vr.p99_ms, result.stats.bg.p99_ms)
    return result


class SweepRow(NamedTuple):
    bg_load_mbps: float
    scheduler: Scheduler
    result: SimResult


def sweep(config: SimConfig, bg_loads, model: TrainedModel | None = None,
          schedulers=(Scheduler.FIFO, Scheduler.VR_PRIORITY), keep_delays: bool = False) -> list[SweepRow]:
    """One run per (load, scheduler); both schedulers at a load share that load's seed."""
    bg_loads = list(bg_loads)
    seeds = derive_seeds(config.seed, len(bg_loads))
    rows = []
    for load, seed in zip(bg_loads, seeds):
        for scheduler in schedulers:
            run_config = replace(config, bg_load_mbps=float(load), scheduler=Scheduler.parse(scheduler), seed=seed)
            rows.append(SweepRow(float(load), run_config.scheduler, run_sim(run_config, model,
                                                                            keep_delays=keep_delays)))
    return rows


SWEEP_COLUMNS = ["load_mbps", "scheduler", "class", "count", "mean_ms", "median_ms", "p99_ms", "max_ms",
                 "served_bytes", "unstable"]


def sweep_frame(rows: list[SweepRow]) -> pd.DataFrame:
    records = []
    for row in rows:
        for name, stats in zip(CLASS_NAMES, row.result.stats):
            records.append({"load_mbps": row.bg_load_mbps, "scheduler": row.scheduler.value, "class": name,
                            **asdict(stats), "unstable": row.result.unstable})
    return pd.DataFrame(records, columns=SWEEP_COLUMNS)


def improvement_factors(frame: pd.DataFrame, load_mbps: float) -> tuple[float, float]:
    """(fifo / priority VR p99, priority / fifo BG p99) at one load."""
    at_load = frame[frame["load_mbps"] == load_mbps].set_index(["scheduler", "class"])["p99_ms"]
    fifo, prio = Scheduler.FIFO.value, Scheduler.VR_PRIORITY.value
    vr_factor = at_load[(fifo, "VR")] / at_load[(prio, "VR")]
    bg_factor = at_load[(prio, "BG")] / at_load[(fifo, "BG")]
    return float(vr_factor), float(bg_factor)


def format_summary(rows: list[SweepRow]) -> str:
    frame = sweep_frame(rows)
    lines = [f"{'load':>6} {'scheduler':<12}{'class':<6}{'count':>9}{'median_ms':>11}{'p99_ms':>11}{'max_ms':>11}"]
    for _, rec in frame.iterrows():
        flag = "  UNSTABLE" if rec["unstable"] else ""
        lines.append(f"{rec['load_mbps']:>6g} {rec['scheduler']:<12}{rec['class']:<6}{int(rec['count']):>9d}"
                     f"{rec['median_ms']:>11.3f}{rec['p99_ms']:>11.3f}{rec['max_ms']:>11.3f}{flag}")
    schedulers = set(frame["scheduler"])
    if {Scheduler.FIFO.value, Scheduler.VR_PRIORITY.value} <= schedulers:
        lines.append("")
        for load in sorted(set(frame["load_mbps"])):
            vr_factor, bg_factor = improvement_factors(frame, load)
            lines.append(f"load {load:g} Mbps: VR p99 improvement x{vr_factor:.2f}, "
                         f"BG p99 degradation x{bg_factor:.2f}")
    decisions = {(r.bg_load_mbps, r.result.decision) for r in rows if r.result.decision is not None}
    for load, decision in sorted(decisions, key=lambda d: d[0]):
        lines.append(f"load {load:g} Mbps: classifier ({decision.source}) at {decision.at_ms:g}ms -> "
                     f"{'VR, priority on' if decision.triggers_priority else 'Non-VR, priority off'}")
    if any(r.result.unstable for r in rows):
        lines.append("WARNING: one or more runs are unstable (offered load at or above capacity)")
    return "\n".join(lines) + "\n"


def write_delay_dump(rows: list[SweepRow], path, header_lines: list[str] = ()) -> None:
    """Per-packet delays of every row that kept them, under the provenance header."""
    frames = []
    for row in rows:
        if row.result.delays is None:
            continue
        frame = row.result.delays.copy()
        frame.insert(0, "scheduler", row.scheduler.value)
        frame.insert(0, "load_mbps", row.bg_load_mbps)
        frames.append(frame)
    columns = ["load_mbps", "scheduler", "class", "arrival_us", "delay_us"]
    out = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in header_lines:
            f.write(line + "\n")
        out.to_csv(f, index=False, lineterminator="\n")
