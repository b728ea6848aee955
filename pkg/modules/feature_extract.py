"""
Windowed statistical features for VR traffic identification.

A trace is cut into samples of duration omega; each sample yields 23 features:
per-direction counts, byte totals, packet-size and inter-arrival statistics,
the DL/UL ratios, and the Pearson correlation of per-sub-sample DL and UL
byte totals.
"""

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
import pandas as pd

from modules.errors import ContractError, DatasetFormatError
from modules.trace_ingest import Direction, PacketRecord

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "NoPDL", "NoPUL",
    "TBDL", "TBUL",
    "MinPSDL", "MinPSUL",
    "MaxPSDL", "MaxPSUL",
    "MeanPSDL", "MeanPSUL",
    "StdPSDL", "StdPSUL",
    "MinPIATDL", "MinPIATUL",
    "MaxPIATDL", "MaxPIATUL",
    "MeanPIATDL", "MeanPIATUL",
    "StdPIATDL", "StdPIATUL",
    "RoNoP", "RoTB", "CC",
)
N_FEATURES = len(FEATURE_NAMES)
LABEL_COLUMN = "label"
LABEL_VR = 1
LABEL_NONVR = 0
LABEL_NAMES = {LABEL_NONVR: "Non-VR", LABEL_VR: "VR"}


@dataclass(frozen=True)
class ExtractionConfig:
    omega_ms: int = 500
    n_subsamples: int = 20

    def __post_init__(self):
        if self.omega_ms < 1:
            raise ContractError(f"omega_ms must be >= 1, got {self.omega_ms}")
        if self.n_subsamples < 2:
            raise ContractError(f"n_subsamples must be >= 2, got {self.n_subsamples}")

    @property
    def omega_us(self) -> int:
        return self.omega_ms * 1000

    @property
    def tau_ms(self) -> float:
        return self.omega_ms / self.n_subsamples


@dataclass
class Sample:
    index: int
    window_start_us: int
    window_end_us: int
    dl_packets: list[tuple[int, int]] = field(default_factory=list)
    ul_packets: list[tuple[int, int]] = field(default_factory=list)


class DirectionStats(NamedTuple):
    count: int
    total_bytes: int
    min_size: float
    max_size: float
    mean_size: float
    std_size: float
    min_iat_ms: float
    max_iat_ms: float
    mean_iat_ms: float
    std_iat_ms: float


class SubsampleVectors(NamedTuple):
    D: np.ndarray
    U: np.ndarray


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    label: int | None = None

    def __post_init__(self):
        if len(self.values) != N_FEATURES:
            raise ContractError(f"expected {N_FEATURES} feature values, got {len(self.values)}")
        if self.label not in (None, LABEL_NONVR, LABEL_VR):
            raise ContractError(f"label must be 0, 1 or None, got {self.label!r}")

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_NAMES.index(name)]

    def as_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.values))

    def with_label(self, label: int | None) -> "FeatureVector":
        return FeatureVector(self.values, label)


def window_packets(records: Iterable[PacketRecord], config: ExtractionConfig) -> list[Sample]:
    """Group packets into [k*omega, (k+1)*omega) windows, keeping only non-empty ones."""
    omega_us = config.omega_us
    samples: dict[int, Sample] = {}
    for r in records:
        k = r.timestamp_us // omega_us
        sample = samples.get(k)
        if sample is None:
            sample = samples[k] = Sample(k, k * omega_us, (k + 1) * omega_us)
        target = sample.dl_packets if r.direction is Direction.DL else sample.ul_packets
        target.append((r.timestamp_us, r.size_bytes))
    return [samples[k] for k in sorted(samples)]


def direction_stats(packets: list[tuple[int, int]]) -> DirectionStats:
    if not packets:
        return DirectionStats(0, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    ts = np.fromiter((p[0] for p in packets), dtype=np.int64, count=len(packets))
    sizes = np.fromiter((p[1] for p in packets), dtype=np.float64, count=len(packets))
    size_stats = (float(sizes.min()), float(sizes.max()), float(sizes.mean()), float(sizes.std()))

    if len(packets) < 2:
        iat_stats = (0.0, 0.0, 0.0, 0.0)
    else:
        iat = np.diff(ts) / 1000.0
        iat_stats = (float(iat.min()), float(iat.max()), float(iat.mean()), float(iat.std()))

    return DirectionStats(len(packets), int(sizes.sum()), *size_stats, *iat_stats)


def subsample_bytes(sample: Sample, config: ExtractionConfig) -> SubsampleVectors:
    """Per-sub-sample byte totals; boundaries at exact multiples of omega/N (in µs)."""
    n = config.n_subsamples
    span = sample.window_end_us - sample.window_start_us

    def _bins(packets):
        if not packets:
            return np.zeros(n)
        offsets = np.fromiter((p[0] - sample.window_start_us for p in packets), dtype=np.int64)
        sizes = np.fromiter((p[1] for p in packets), dtype=np.float64)
        slots = np.minimum((offsets * n) // span, n - 1)
        return np.bincount(slots, weights=sizes, minlength=n)

    return SubsampleVectors(_bins(sample.dl_packets), _bins(sample.ul_packets))


def pearson_cc(d, u) -> float:
    """Pearson correlation of D and U; 0 when either vector is constant."""
    d = np.asarray(d, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if d.shape != u.shape or d.ndim != 1:
        raise ContractError(f"D and U must be equal-length vectors, got {d.shape} and {u.shape}")
    if len(d) < 2:
        raise ContractError("correlation needs at least 2 sub-samples")
    if np.all(d == d[0]) or np.all(u == u[0]):
        return 0.0

    dc = d - d.mean()
    uc = u - u.mean()
    denominator = np.sqrt(np.dot(dc, dc) * np.dot(uc, uc))
    if denominator == 0.0:
        return 0.0
    return float(np.clip(np.dot(dc, uc) / denominator, -1.0, 1.0))


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else float(numerator)


def extract_features(sample: Sample, config: ExtractionConfig, label: int | None = None) -> FeatureVector:
    dl = direction_stats(sample.dl_packets)
    ul = direction_stats(sample.ul_packets)
    vectors = subsample_bytes(sample, config)

    values = (
        dl.count, ul.count,
        dl.total_bytes, ul.total_bytes,
        dl.min_size, ul.min_size,
        dl.max_size, ul.max_size,
        dl.mean_size, ul.mean_size,
        dl.std_size, ul.std_size,
        dl.min_iat_ms, ul.min_iat_ms,
        dl.max_iat_ms, ul.max_iat_ms,
        dl.mean_iat_ms, ul.mean_iat_ms,
        dl.std_iat_ms, ul.std_iat_ms,
        _ratio(dl.count, ul.count),
        _ratio(dl.total_bytes, ul.total_bytes),
        pearson_cc(vectors.D, vectors.U),
    )
    return FeatureVector(tuple(float(v) for v in values), label)


def extract_trace_features(records: Iterable[PacketRecord], config: ExtractionConfig,
                           label: int | None = None) -> list[FeatureVector]:
    samples = window_packets(records, config)
    rows = [extract_features(s, config, label) for s in samples]
    logger.info(
        "Extracted %s samples (omega=%sms, N=%s, label=%s)",
        len(rows), config.omega_ms, config.n_subsamples, label,
    )
    return rows


def balance_dataset(vr: list[FeatureVector], nonvr: list[FeatureVector]) -> list[FeatureVector]:
    """Trim the longer class from its tail so both classes have equal counts; VR rows first."""
    if not vr or not nonvr:
        raise ContractError(f"both classes are required (VR={len(vr)}, Non-VR={len(nonvr)})")
    n = min(len(vr), len(nonvr))
    if len(vr) != len(nonvr):
        logger.info("Balancing dataset: dropping %s trailing %s samples",
                    abs(len(vr) - len(nonvr)), "VR" if len(vr) > n else "Non-VR")
    return [row.with_label(LABEL_VR) for row in vr[:n]] + [row.with_label(LABEL_NONVR) for row in nonvr[:n]]


def to_frame(rows: Iterable[FeatureVector]) -> pd.DataFrame:
    rows = list(rows)
    frame = pd.DataFrame([r.values for r in rows], columns=list(FEATURE_NAMES), dtype=np.float64)
    frame[LABEL_COLUMN] = pd.array([r.label for r in rows], dtype="Int64")
    return frame


def to_matrix(rows: Iterable[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and label vector; rows must be labeled."""
    rows = list(rows)
    if any(r.label is None for r in rows):
        raise ContractError("unlabeled rows cannot be used for training or evaluation")
    X = np.array([r.values for r in rows], dtype=np.float64).reshape(len(rows), N_FEATURES)
    y = np.array([r.label for r in rows], dtype=np.int64)
    return X, y


def emit_dataset_csv(rows: Iterable[FeatureVector], path, header_lines: Iterable[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in header_lines:
            f.write(line + "\n")
        to_frame(rows).to_csv(f, index=False, float_format="%.15g", lineterminator="\n")
    return path


def _parse_float(text: str) -> float:
    # exact decimal conversion; pd.to_numeric may be off in the last bit
    try:
        return float(text)
    except ValueError:
        return np.nan


def load_dataset_csv(path) -> list[FeatureVector]:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.readlines()
    skipped = 0
    while skipped < len(lines) and lines[skipped].startswith("#"):
        skipped += 1
    if skipped == len(lines):
        raise DatasetFormatError(f"{path}: empty dataset file")

    header = [c.strip() for c in lines[skipped].rstrip("\n").split(",")]
    expected = list(FEATURE_NAMES) + [LABEL_COLUMN]
    if header != expected:
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        raise DatasetFormatError(f"{path}: dataset header mismatch", missing=missing, extra=extra,
                                 line=skipped + 1)

    frame = pd.read_csv(io.StringIO("".join(lines[skipped:])), dtype=str, keep_default_na=False)
    first_data_line = skipped + 2

    values = frame[list(FEATURE_NAMES)].apply(lambda column: column.map(_parse_float))
    bad_values = values.isna().any(axis=1)
    if bad_values.any():
        row = int(np.flatnonzero(bad_values.to_numpy())[0])
        raise DatasetFormatError(f"{path}: non-numeric feature value", line=first_data_line + row)

    raw_labels = frame[LABEL_COLUMN].str.strip()
    labels = pd.to_numeric(raw_labels, errors="coerce")
    bad_labels = (raw_labels != "") & ~labels.isin([LABEL_NONVR, LABEL_VR])
    if bad_labels.any():
        row = int(np.flatnonzero(bad_labels.to_numpy())[0])
        raise DatasetFormatError(f"{path}: label must be 0 or 1", line=first_data_line + row)

    matrix = values.to_numpy(dtype=np.float64)
    rows = []
    for i in range(len(frame)):
        label = None if raw_labels.iat[i] == "" else int(labels.iat[i])
        rows.append(FeatureVector(tuple(float(v) for v in matrix[i]), label))
    logger.info("Loaded %s dataset rows from %s", len(rows), path)
    return rows


def cc_summary(rows_by_setting: dict[tuple[int, int], list[FeatureVector]]) -> pd.DataFrame:
    """Mean CC per class for every (omega_ms, N) setting, in long form."""
    records = []
    cc_index = FEATURE_NAMES.index("CC")
    for (omega_ms, n_subsamples), rows in sorted(rows_by_setting.items(), key=lambda kv: (-kv[0][0], kv[0][1])):
        for label in (LABEL_VR, LABEL_NONVR):
            cc = [r.values[cc_index] for r in rows if r.label == label]
            records.append({
                "omega_ms": omega_ms,
                "traffic": LABEL_NAMES[label],
                "samples": len(cc),
                "N": n_subsamples,
                "mean_cc": float(np.mean(cc)) if cc else float("nan"),
            })
    return pd.DataFrame.from_records(records, columns=["omega_ms", "traffic", "samples", "N", "mean_cc"])
