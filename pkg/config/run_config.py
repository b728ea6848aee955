"""
Run configuration: a flat key=value file (dotenv syntax) whose keys mirror the
CLI flags. Unknown keys and bad values are collected and reported together.
"""

import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from dotenv import dotenv_values

from config.config import (
    CV_FOLDS,
    DEFAULT_N_REPEATS,
    DEFAULT_OMEGA_MS,
    DEFAULT_SEED,
    DEFAULT_SUBSAMPLES,
    RESULTS_DIR,
    TRAIN_FRACTION,
)
from modules.errors import ConfigError

logger = logging.getLogger(__name__)

FAMILY_CHOICES = ("lr", "knn", "dt", "rf", "nb")
SCHEDULER_CHOICES = ("fifo", "priority", "vr_priority")


@dataclass(frozen=True)
class RunConfig:
    run_dir: str = str(RESULTS_DIR / "run")
    seed: int = DEFAULT_SEED
    # extraction
    omega_ms: int = DEFAULT_OMEGA_MS
    n_subsamples: int = DEFAULT_SUBSAMPLES
    # corpus
    corpus_duration_ms: float = 60000.0
    # model selection
    family: str = "rf"
    train_fraction: float = TRAIN_FRACTION
    cv_folds: int = CV_FOLDS
    n_repeats: int = DEFAULT_N_REPEATS
    # simulator
    bg_loads: tuple = (200.0, 300.0, 400.0)
    scheduler: str = "priority"
    sim_duration_s: float = 60.0
    warmup_s: float = 2.0
    classify_after_ms: float = 500.0
    bg_on_mean_ms: float = 70.0
    bg_off_mean_ms: float = 30.0
    bg_packet_bytes: int = 1500
    phy_rate_vr_mbps: float = 600.5
    phy_rate_bg_mbps: float = 480.4
    per_frame_overhead_us: float = 100.0
    aggregation_limit_packets: int = 64
    vr_fps: int = 90
    vr_bitrate_mbps: float = 100.0
    vr_ingress_gap_us: int = 12
    oracle: bool = False
    model_path: str = ""

    def with_overrides(self, **flags) -> "RunConfig":
        """Apply CLI flags; None means the flag was not given."""
        given = {k: v for k, v in flags.items() if v is not None}
        unknown = sorted(set(given) - {f.name for f in fields(self)})
        if unknown:
            raise ConfigError([f"unknown key: {k}" for k in unknown])
        if "bg_loads" in given:
            given["bg_loads"] = tuple(float(v) for v in given["bg_loads"])
        updated = replace(self, **given)
        problems = updated.validate()
        if problems:
            raise ConfigError(problems)
        return updated

    def validate(self) -> list[str]:
        problems = []
        positive = ("omega_ms", "corpus_duration_ms", "cv_folds", "n_repeats", "sim_duration_s",
                    "classify_after_ms", "bg_on_mean_ms", "bg_off_mean_ms", "bg_packet_bytes",
                    "phy_rate_vr_mbps", "phy_rate_bg_mbps", "aggregation_limit_packets", "vr_fps",
                    "vr_bitrate_mbps", "vr_ingress_gap_us")
        for name in positive:
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be > 0")
        if self.n_subsamples < 2:
            problems.append("n_subsamples must be >= 2")
        if self.cv_folds < 2:
            problems.append("cv_folds must be >= 2")
        if not 0 < self.train_fraction < 1:
            problems.append("train_fraction must be in (0, 1)")
        if self.family not in FAMILY_CHOICES:
            problems.append(f"family must be one of {', '.join(FAMILY_CHOICES)}")
        if self.scheduler not in SCHEDULER_CHOICES:
            problems.append(f"scheduler must be one of {', '.join(SCHEDULER_CHOICES)}")
        if not 0 <= self.warmup_s < self.sim_duration_s:
            problems.append("warmup_s must be in [0, sim_duration_s)")
        if self.per_frame_overhead_us < 0:
            problems.append("per_frame_overhead_us must be >= 0")
        if not self.bg_loads or any(load < 0 for load in self.bg_loads):
            problems.append("bg_loads must be a non-empty list of loads >= 0")
        return problems

    def as_dict(self) -> dict:
        return asdict(self)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_loads(text: str) -> tuple:
    return tuple(float(part) for part in text.split(",") if part.strip())


_PARSERS = {
    int: int,
    float: float,
    str: str.strip,
    bool: _parse_bool,
    tuple: _parse_loads,
}


def _field_types() -> dict:
    defaults = RunConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(RunConfig)}


def parse_run_config(values: dict, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    types = _field_types()
    problems = []
    parsed = {}
    for key, raw in values.items():
        if key not in types:
            problems.append(f"unknown key: {key}")
            continue
        if raw is None:
            problems.append(f"{key}: missing value")
            continue
        try:
            parsed[key] = _PARSERS[types[key]](raw)
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    if problems:
        raise ConfigError(problems)
    config = replace(base, **parsed)
    problems = config.validate()
    if problems:
        raise ConfigError(problems)
    return config


def load_run_config(path) -> RunConfig:
    if not Path(path).is_file():
        raise FileNotFoundError(f"run config not found: {path}")
    values = dotenv_values(path)
    config = parse_run_config(values)
    logger.info("Loaded run config from %s (%s keys)", path, len(values))
    return config
