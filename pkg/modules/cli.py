"""
Command-line entry point: `vrid <subcommand>`.

Every subcommand resolves a RunConfig (config file, then flags), does one
pipeline step and writes artifacts that start with a provenance header.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from config.config import LOG_FORMAT, LOG_LEVEL, OMEGA_GRID_MS, SUBSAMPLE_GRID, TOOL_NAME, TOOL_VERSION, get_run_paths
from config.run_config import FAMILY_CHOICES, RunConfig, load_run_config
from modules.classifiers import load_model, params_from_dict, save_model, train
from modules.errors import ConfigError, ContractError, DatasetFormatError, GridSearchError, TraceFormatError
from modules.feature_extract import (
    LABEL_NAMES,
    LABEL_NONVR,
    LABEL_VR,
    ExtractionConfig,
    balance_dataset,
    cc_summary,
    emit_dataset_csv,
    extract_features,
    extract_trace_features,
    load_dataset_csv,
    to_matrix,
    window_packets,
)
from modules.model_select import (
    SplitSpec,
    evaluate,
    expand_grid,
    format_report,
    importance_frame,
    default_grid,
    permutation_importance,
    report_frame,
    run_selection_pipeline,
    stratified_split,
    validation_score_table,
)
from modules.provenance import provenance_dict, provenance_lines, read_provenance, write_text_artifact
from modules.synth_traffic import (
    VrProfile,
    default_nonvr_profiles,
    default_vr_profiles,
    gen_labeled_corpus,
    gen_vr_trace,
    load_manifest,
    write_corpus,
)
from modules.trace_ingest import (
    PCAP_MAGICS,
    Direction,
    assign_direction,
    read_canonical_csv,
    read_pcap,
    trace_metadata,
    write_canonical_csv,
)
from modules.wifi_sim import SimConfig, format_summary, sweep, sweep_frame, write_delay_dump

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_CONTRACT = 4
EXIT_IO = 5


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _is_pcap(path: Path) -> bool:
    with open(path, "rb") as f:
        return f.read(4) in PCAP_MAGICS


def _extraction(config: RunConfig) -> ExtractionConfig:
    return ExtractionConfig(omega_ms=config.omega_ms, n_subsamples=config.n_subsamples)


def _load_trace(path) -> list:
    path = Path(path)
    return read_canonical_csv(path).records


def _load_matrix(path):
    rows = load_dataset_csv(path)
    if any(row.label is None for row in rows):
        raise ContractError(f"dataset {path} has unlabeled rows")
    return to_matrix(rows)


def _manifest_traces(manifest_path):
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    for entry in manifest["traces"]:
        yield entry, manifest_path.parent / entry["path"]


def _extract_corpus(manifest_path, extraction: ExtractionConfig) -> tuple[list, list]:
    vr, nonvr = [], []
    for entry, trace_path in _manifest_traces(manifest_path):
        rows = extract_trace_features(_load_trace(trace_path), extraction, entry["label"])
        (vr if entry["label"] == LABEL_VR else nonvr).extend(rows)
    return vr, nonvr


def _model_header(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f).get("provenance") or {}


def _dataset_extraction(dataset_path, config: RunConfig) -> ExtractionConfig:
    header = read_provenance(dataset_path)
    omega = int(header.get("omega_ms", config.omega_ms))
    n_sub = int(header.get("n_subsamples", config.n_subsamples))
    return ExtractionConfig(omega_ms=omega, n_subsamples=n_sub)


def time_sample_pipeline(model, records, extraction: ExtractionConfig) -> tuple[list[int], float, float]:
    """Predict every sample of a trace; returns (labels, mean extraction s, mean classification s)."""
    samples = window_packets(records, extraction)
    labels = []
    extract_s = classify_s = 0.0
    for sample in samples:
        t0 = time.perf_counter()
        features = extract_features(sample, extraction)
        t1 = time.perf_counter()
        labels.append(model.predict(features.values))
        classify_s += time.perf_counter() - t1
        extract_s += t1 - t0
    n = max(len(samples), 1)
    return labels, extract_s / n, classify_s / n


def _print_timing(extract_s: float, classify_s: float) -> None:
    total = extract_s + classify_s
    print(f"per-sample time: extraction {extract_s * 1000:.3f} ms, classification {classify_s * 1000:.3f} ms, "
          f"total {total * 1000:.3f} ms ({'within' if total < 1.0 else 'OVER'} the 1 s budget)")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args, config: RunConfig, command: str) -> int:
    source = Path(args.input)
    if _is_pcap(source):
        if not args.client_ip:
            raise ContractError("--client-ip is required for pcap input")
        directed = assign_direction(read_pcap(source), args.client_ip)
        records, t0 = directed.records, directed.t0_us
        if not records:
            logger.warning("No packets to or from %s in %s", args.client_ip, source)
    else:
        trace = read_canonical_csv(source)
        records, t0 = trace.records, trace.t0_us
    header = provenance_lines({**config.as_dict(), "input": str(source), "client_ip": args.client_ip or "",
                               "t0_us": t0}, command)
    write_canonical_csv(records, args.out, header)
    meta = trace_metadata(records, args.client_ip, t0)
    n_dl = sum(1 for r in records if r.direction is Direction.DL)
    print(f"packets: {meta.packet_count} (DL {n_dl}, UL {meta.packet_count - n_dl})")
    print(f"duration: {meta.duration_us / 1e6:.3f} s")
    print(f"written: {args.out}")
    return EXIT_OK


def cmd_synth(args, config: RunConfig, command: str) -> int:
    out_dir = Path(args.out or get_run_paths(config.run_dir)["corpus"])
    corpus = gen_labeled_corpus(default_vr_profiles(), default_nonvr_profiles(), config.corpus_duration_ms,
                                config.seed)
    header = provenance_lines(config.as_dict(), command)
    manifest = write_corpus(corpus, out_dir, config.corpus_duration_ms, config.seed, header,
                            provenance_dict(config.as_dict(), command))
    for trace in corpus:
        print(f"{trace.name:<28}{LABEL_NAMES[trace.label]:<8}{len(trace.records):>9} packets")
    print(f"manifest: {manifest}")
    return EXIT_OK


def cmd_extract(args, config: RunConfig, command: str) -> int:
    extraction = _extraction(config)
    out = Path(args.out or get_run_paths(config.run_dir)["dataset"])
    if args.unlabeled:
        rows = []
        for path in args.unlabeled:
            rows.extend(extract_trace_features(_load_trace(path), extraction, None))
        print(f"unlabeled samples: {len(rows)}")
    else:
        if args.manifest or not (args.vr or args.nonvr):
            vr, nonvr = _extract_corpus(args.manifest or get_run_paths(config.run_dir)["manifest"], extraction)
        else:
            vr = [row for path in args.vr or () for row in
                  extract_trace_features(_load_trace(path), extraction, LABEL_VR)]
            nonvr = [row for path in args.nonvr or () for row in
                     extract_trace_features(_load_trace(path), extraction, LABEL_NONVR)]
        print(f"count of obtained VR samples: {len(vr)}")
        print(f"count of obtained Non-VR samples: {len(nonvr)}")
        rows = balance_dataset(vr, nonvr)
        print(f"balanced dataset: {len(rows)} samples")
    emit_dataset_csv(rows, out, provenance_lines(config.as_dict(), command))
    print(f"written: {out}")
    return EXIT_OK


def _parse_params(pairs) -> dict:
    params = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise ContractError(f"expected key=value, got {pair!r}")
        for cast in (int, float):
            try:
                params[key] = cast(value)
                break
            except ValueError:
                continue
        else:
            params[key] = {"true": True, "false": False, "none": None}.get(value.lower(), value)
    return params


def _model_provenance(config: RunConfig, extraction: ExtractionConfig, command: str) -> dict:
    values = {**config.as_dict(), "omega_ms": extraction.omega_ms, "n_subsamples": extraction.n_subsamples}
    return provenance_dict(values, command)


def cmd_train(args, config: RunConfig, command: str) -> int:
    paths = get_run_paths(config.run_dir)
    dataset = Path(args.dataset or paths["dataset"])
    X, y = _load_matrix(dataset)
    train_rows, val_rows = stratified_split(y, SplitSpec(config.train_fraction, config.seed))
    params = params_from_dict(config.family, _parse_params(args.param))
    model = train(config.family, X[train_rows], y[train_rows], params, seed=config.seed)
    report = evaluate(model, X[val_rows], y[val_rows])
    print(format_report(report), end="")
    save_model(model, args.model_out or paths["model"],
               _model_provenance(config, _dataset_extraction(dataset, config), command))
    return EXIT_OK


def cmd_gridsearch(args, config: RunConfig, command: str) -> int:
    paths = get_run_paths(config.run_dir)
    dataset = Path(args.dataset or paths["dataset"])
    X, y = _load_matrix(dataset)
    grid = default_grid(config.family, config.cv_folds)
    result = run_selection_pipeline(X, y, config.family, config.seed, grid, config.n_repeats,
                                    config.train_fraction)
    text = format_report(result.report)
    print(text, end="")
    print(f"validation accuracy: {result.report.accuracy:.5f}")
    values = config.as_dict()
    save_model(result.model, args.model_out or paths["model"],
               _model_provenance(config, _dataset_extraction(dataset, config), command))
    write_text_artifact(args.report_out or paths["report"], text, values, command)
    write_text_artifact(paths["report_csv"], report_frame(result.report).to_csv(index=False, lineterminator="\n"),
                        values, command)
    write_text_artifact(paths["importance"],
                        importance_frame(result.importances).to_csv(index=False, lineterminator="\n"),
                        values, command)
    cv_table = result.grid.scores.to_csv(index=False, lineterminator="\n")
    write_text_artifact(Path(config.run_dir) / "grid_scores.csv", cv_table, values, command)
    return EXIT_OK


def cmd_eval(args, config: RunConfig, command: str) -> int:
    paths = get_run_paths(config.run_dir)
    dataset = Path(args.dataset or paths["dataset"])
    model = load_model(args.model or paths["model"])
    X, y = _load_matrix(dataset)
    if args.all_rows:
        rows = np.arange(len(y))
    else:
        rows = stratified_split(y, SplitSpec(config.train_fraction, config.seed))[1]
    report = evaluate(model, X[rows], y[rows])
    text = format_report(report)
    print(text, end="")

    extraction = _dataset_extraction(dataset, config)
    if args.trace:
        records = _load_trace(args.trace)
    else:
        records = gen_vr_trace(VrProfile(), extraction.omega_ms * 4, config.seed)
    _, extract_s, classify_s = time_sample_pipeline(model, records, extraction)
    _print_timing(extract_s, classify_s)
    if args.report_out:
        write_text_artifact(args.report_out, text, config.as_dict(), command)
    return EXIT_OK


def cmd_importance(args, config: RunConfig, command: str) -> int:
    paths = get_run_paths(config.run_dir)
    X, y = _load_matrix(args.dataset or paths["dataset"])
    model = load_model(args.model or paths["model"])
    val_rows = stratified_split(y, SplitSpec(config.train_fraction, config.seed))[1]
    importances = permutation_importance(model, X[val_rows], y[val_rows], config.n_repeats, config.seed)
    frame = importance_frame(importances)
    print(frame.to_string(index=False))
    write_text_artifact(args.out or paths["importance"], frame.to_csv(index=False, lineterminator="\n"),
                        config.as_dict(), command)
    return EXIT_OK


def cmd_predict(args, config: RunConfig, command: str) -> int:
    paths = get_run_paths(config.run_dir)
    model_path = Path(args.model or paths["model"])
    model = load_model(model_path)
    extraction = _extraction(config)
    model_config = _model_header(model_path).get("config", {})
    if args.omega_ms is None and "omega_ms" in model_config:
        extraction = ExtractionConfig(int(model_config["omega_ms"]), int(model_config["n_subsamples"]))
    records = _load_trace(args.trace)
    labels, extract_s, classify_s = time_sample_pipeline(model, records, extraction)
    n_vr = sum(labels)
    print(f"samples: {len(labels)} (VR {n_vr}, Non-VR {len(labels) - n_vr})")
    if args.expect and labels:
        expected = LABEL_VR if args.expect == "vr" else LABEL_NONVR
        score = float(np.mean(np.asarray(labels) == expected))
        print(f"test score: {score:.5f}")
    _print_timing(extract_s, classify_s)
    return EXIT_OK


def cmd_settings(args, config: RunConfig, command: str) -> int:
    paths = get_run_paths(config.run_dir)
    manifest = args.manifest or paths["manifest"]
    families = args.families or list(FAMILY_CHOICES)
    datasets = {}
    for omega in args.omegas or OMEGA_GRID_MS:
        for n_sub in args.subsample_grid or SUBSAMPLE_GRID:
            extraction = ExtractionConfig(omega_ms=omega, n_subsamples=n_sub)
            datasets[(omega, n_sub)] = to_matrix(balance_dataset(*_extract_corpus(manifest, extraction)))
    grids = {}
    if args.quick:
        # NB's 100-point grid dominates the sweep; a coarse grid keeps it interactive
        grids["nb"] = expand_grid("nb", {"var_smoothing": [1e-9, 1e-6, 1e-3, 1.0]}, config.cv_folds)
    table = validation_score_table(datasets, families, config.seed, config.n_repeats, grids)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    out = args.out or Path(config.run_dir) / "settings.csv"
    write_text_artifact(out, table.to_csv(index=False, lineterminator="\n"), config.as_dict(), command)
    return EXIT_OK


def cmd_cc_table(args, config: RunConfig, command: str) -> int:
    paths = get_run_paths(config.run_dir)
    manifest = args.manifest or paths["manifest"]
    by_setting = {}
    for omega in args.omegas or OMEGA_GRID_MS:
        for n_sub in args.subsample_grid or SUBSAMPLE_GRID:
            vr, nonvr = _extract_corpus(manifest, ExtractionConfig(omega_ms=omega, n_subsamples=n_sub))
            by_setting[(omega, n_sub)] = vr + nonvr
    table = cc_summary(by_setting)
    print(table.to_string(index=False))
    out = args.out or Path(config.run_dir) / "cc_table.csv"
    write_text_artifact(out, table.to_csv(index=False, lineterminator="\n"), config.as_dict(), command)
    return EXIT_OK


def _sim_config(config: RunConfig) -> SimConfig:
    return SimConfig(
        vr_profile=VrProfile(fps=config.vr_fps, bitrate_mbps=config.vr_bitrate_mbps,
                             intra_batch_gap_us=config.vr_ingress_gap_us),
        bg_load_mbps=config.bg_loads[0],
        bg_on_mean_ms=config.bg_on_mean_ms,
        bg_off_mean_ms=config.bg_off_mean_ms,
        bg_packet_bytes=config.bg_packet_bytes,
        phy_rate_vr_mbps=config.phy_rate_vr_mbps,
        phy_rate_bg_mbps=config.phy_rate_bg_mbps,
        per_frame_overhead_us=config.per_frame_overhead_us,
        aggregation_limit_packets=config.aggregation_limit_packets,
        scheduler=config.scheduler,
        classify_after_ms=config.classify_after_ms,
        duration_s=config.sim_duration_s,
        warmup_s=config.warmup_s,
        seed=config.seed,
    )


def cmd_simulate(args, config: RunConfig, command: str) -> int:
    paths = get_run_paths(config.run_dir)
    model = None
    if not config.oracle:
        model_path = Path(config.model_path or paths["model"])
        if model_path.is_file():
            model = load_model(model_path)
        else:
            raise FileNotFoundError(f"model not found: {model_path} (use --oracle to run without one)")
    schedulers = ("fifo", "vr_priority") if args.both or args.scheduler is None else (config.scheduler,)
    rows = sweep(_sim_config(config), config.bg_loads, model, schedulers, keep_delays=bool(args.delay_dump))
    frame = sweep_frame(rows)
    summary = format_summary(rows)
    print(summary, end="")
    values = config.as_dict()
    write_text_artifact(args.out or paths["sim"], frame.to_csv(index=False, lineterminator="\n"), values, command)
    write_text_artifact(args.summary_out or paths["sim_summary"], summary, values, command)
    if args.delay_dump:
        write_delay_dump(rows, args.delay_dump, provenance_lines(values, command))
    if frame["unstable"].any():
        logger.warning("Unstable runs present; see %s", args.summary_out or paths["sim_summary"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config file (key=value)")
    parser.add_argument("--run-dir", help="directory for default artifact paths")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--omega-ms", type=int, help="sample duration in ms")
    parser.add_argument("--subsamples", type=int, help="number of sub-samples per sample")
    parser.add_argument("--family", choices=FAMILY_CHOICES)
    parser.add_argument("--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="VR traffic identification and Wi-Fi priority simulation")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a pcap or CSV capture to a canonical trace")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("--client-ip")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--duration-ms", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="window traces into a feature dataset")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--vr", nargs="+")
    p.add_argument("--nonvr", nargs="+")
    p.add_argument("--unlabeled", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train one classifier with fixed parameters")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--model-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", help="grid search, feature selection, refit and evaluation")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--n-repeats", type=int)
    p.add_argument("--model-out")
    p.add_argument("--report-out")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("eval", help="evaluate a saved model on the validation split")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--all-rows", action="store_true", help="evaluate on every row instead of the validation split")
    p.add_argument("--trace", help="trace used for the per-sample timing measurement")
    p.add_argument("--report-out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("importance", help="permutation importance of a saved model")
    _add_common(p)
    p.add_argument("--dataset")
    p.add_argument("--model")
    p.add_argument("--n-repeats", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("predict", help="classify every sample of an unseen trace")
    _add_common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--model")
    p.add_argument("--expect", choices=("vr", "nonvr"))
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("settings", help="validation score per (omega, N) setting and family")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--families", nargs="+", choices=FAMILY_CHOICES)
    p.add_argument("--omegas", nargs="+", type=int)
    p.add_argument("--subsample-grid", nargs="+", type=int)
    p.add_argument("--quick", action="store_true", help="coarse NB grid")
    p.add_argument("--out")
    p.set_defaults(func=cmd_settings)

    p = sub.add_parser("cc-table", help="mean CC per class and setting")
    _add_common(p)
    p.add_argument("--manifest")
    p.add_argument("--omegas", nargs="+", type=int)
    p.add_argument("--subsample-grid", nargs="+", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cc_table)

    p = sub.add_parser("simulate", help="AP downlink simulation, fifo vs VR priority")
    _add_common(p)
    p.add_argument("--scheduler", choices=("fifo", "priority"))
    p.add_argument("--both", action="store_true", help="run both schedulers (default without --scheduler)")
    p.add_argument("--bg-load", type=float, action="append", help="BG load in Mbps; repeatable")
    p.add_argument("--duration-s", type=float)
    p.add_argument("--oracle", action="store_true", help="skip the classifier and flip priority at the trigger time")
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--summary-out")
    p.add_argument("--delay-dump")
    p.set_defaults(func=cmd_simulate)
    return parser


def resolve_config(args) -> RunConfig:
    config = load_run_config(args.config) if args.config else RunConfig()
    return config.with_overrides(
        run_dir=args.run_dir,
        seed=args.seed,
        omega_ms=args.omega_ms,
        n_subsamples=args.subsamples,
        family=args.family,
        corpus_duration_ms=getattr(args, "duration_ms", None),
        n_repeats=getattr(args, "n_repeats", None),
        scheduler=getattr(args, "scheduler", None),
        bg_loads=getattr(args, "bg_load", None),
        sim_duration_s=getattr(args, "duration_s", None),
        oracle=True if getattr(args, "oracle", False) else None,
        model_path=getattr(args, "model", None) if args.command == "simulate" else None,
    )


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level or LOG_LEVEL),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler()],
    )
    command = " ".join([TOOL_NAME, *argv])
    try:
        config = resolve_config(args)
        return args.func(args, config, command)
    except (TraceFormatError, DatasetFormatError, ConfigError) as e:
        logger.error("Parse error: %s", e)
        return EXIT_PARSE
    except (ContractError, GridSearchError) as e:
        logger.error("Invalid input: %s", e)
        return EXIT_CONTRACT
    except ValueError as e:
        logger.error("Malformed value: %s", e)
        return EXIT_PARSE
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
