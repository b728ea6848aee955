import math

import numpy as np
import pandas as pd
import pytest

from conftest import make_records, random_rows
from modules.errors import ContractError, DatasetFormatError
from modules.feature_extract import (
    FEATURE_NAMES,
    LABEL_NONVR,
    LABEL_VR,
    ExtractionConfig,
    FeatureVector,
    Sample,
    balance_dataset,
    cc_summary,
    direction_stats,
    emit_dataset_csv,
    extract_features,
    extract_trace_features,
    load_dataset_csv,
    pearson_cc,
    subsample_bytes,
    to_frame,
    to_matrix,
    window_packets,
)
from modules.synth_traffic import NonVrKind, NonVrProfile, VrProfile, gen_nonvr_trace, gen_vr_trace


def cc_by_hand(d, u):
    n = len(d)
    md = sum(d) / n
    mu = sum(u) / n
    num = sum((a - md) * (b - mu) for a, b in zip(d, u))
    den = math.sqrt(sum((a - md) ** 2 for a in d) * sum((b - mu) ** 2 for b in u))
    return num / den


def test_feature_order():
    assert len(FEATURE_NAMES) == 23
    assert FEATURE_NAMES[:2] == ("NoPDL", "NoPUL")
    assert FEATURE_NAMES[-3:] == ("RoNoP", "RoTB", "CC")


@pytest.mark.parametrize("omega_ms,n", [(0, 20), (500, 1), (500, 0)])
def test_extraction_config_rejects_bad_values(omega_ms, n):
    with pytest.raises(ContractError):
        ExtractionConfig(omega_ms=omega_ms, n_subsamples=n)


def test_tau():
    assert ExtractionConfig(500, 20).tau_ms == 25.0
    assert ExtractionConfig(100, 5).omega_us == 100_000


def test_window_packets_keeps_ordinals_and_skips_empty_windows(extraction):
    records = make_records([(0, "DL", 100), (600_000, "UL", 80), (1_600_000, "DL", 50)])
    samples = window_packets(records, extraction)
    assert [s.index for s in samples] == [0, 1, 3]
    assert samples[1].window_start_us == 500_000
    assert samples[1].ul_packets == [(600_000, 80)]
    assert samples[2].dl_packets == [(1_600_000, 50)]


def test_window_boundary_belongs_to_next_window(extraction):
    samples = window_packets(make_records([(499_999, "DL", 1), (500_000, "DL", 2)]), extraction)
    assert [s.index for s in samples] == [0, 1]


def test_direction_stats_example():
    stats = direction_stats([(0, 100), (1000, 200), (3000, 300)])
    assert stats.count == 3
    assert stats.total_bytes == 600
    assert stats.min_size == 100 and stats.max_size == 300
    assert stats.mean_size == pytest.approx(200.0)
    assert stats.std_size == pytest.approx(81.6497, abs=1e-4)
    assert stats.min_iat_ms == 1.0 and stats.max_iat_ms == 2.0
    assert stats.mean_iat_ms == pytest.approx(1.5)
    assert stats.std_iat_ms == pytest.approx(0.5)


def test_direction_stats_degenerate_cases():
    assert direction_stats([]) == (0, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    single = direction_stats([(10, 254)])
    assert single.count == 1
    assert single.mean_size == 254.0
    assert single.std_size == 0.0
    assert single.mean_iat_ms == 0.0


def test_subsample_bins(extraction):
    sample = Sample(0, 0, 500_000, dl_packets=[(10_000, 100), (30_000, 200), (480_000, 300)])
    vectors = subsample_bytes(sample, extraction)
    assert len(vectors.D) == 20
    assert np.flatnonzero(vectors.D).tolist() == [0, 1, 19]
    assert vectors.D[[0, 1, 19]].tolist() == [100, 200, 300]
    assert vectors.U.sum() == 0


def test_subsample_bins_use_window_offset(extraction):
    sample = Sample(3, 1_500_000, 2_000_000, ul_packets=[(1_525_000, 80), (1_999_999, 40)])
    vectors = subsample_bytes(sample, extraction)
    assert vectors.U[1] == 80
    assert vectors.U[19] == 40


@pytest.mark.parametrize("d,u,expected", [
    ([1, 2, 3, 4], [2, 4, 6, 8], 1.0),
    ([1, 2, 3, 4], [8, 6, 4, 2], -1.0),
    ([5, 5, 5, 5], [1, 2, 3, 4], 0.0),
    ([1, 2, 3, 4], [0, 0, 0, 0], 0.0),
])
def test_pearson_examples(d, u, expected):
    assert pearson_cc(d, u) == pytest.approx(expected)


def test_pearson_contract():
    with pytest.raises(ContractError):
        pearson_cc([1, 2, 3], [1, 2])
    with pytest.raises(ContractError):
        pearson_cc([1], [1])


def test_pearson_matches_direct_formula():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 40))
        d = rng.random(n) * 1500
        u = rng.random(n) * 300
        assert pearson_cc(d, u) == pytest.approx(cc_by_hand(d.tolist(), u.tolist()), abs=1e-12)


def test_pearson_properties():
    rng = np.random.default_rng(3)
    for _ in range(10_000):
        d = rng.random(20) * 1000
        u = rng.random(20) * 100
        r = pearson_cc(d, u)
        assert -1.0 <= r <= 1.0
        assert pearson_cc(u, d) == pytest.approx(r, abs=1e-12)
        a, b = rng.uniform(0.1, 10), rng.uniform(-50, 50)
        assert pearson_cc(a * d + b, u) == pytest.approx(r, abs=1e-9)
        assert pearson_cc(-a * d + b, u) == pytest.approx(-r, abs=1e-9)


def test_extract_features_ratios(extraction):
    sample = Sample(
        0, 0, 500_000,
        dl_packets=[(i * 1000, 1490) for i in range(6)],
        ul_packets=[(i * 2000, 254) for i in range(3)],
    )
    row = extract_features(sample, extraction, label=LABEL_VR)
    assert row["NoPDL"] == 6 and row["NoPUL"] == 3
    assert row["TBDL"] == 8940 and row["TBUL"] == 762
    assert row["RoNoP"] == pytest.approx(2.0)
    assert row["RoTB"] == pytest.approx(11.7323, abs=1e-4)
    assert row["MeanPIATDL"] == pytest.approx(1.0)
    assert row["StdPSDL"] == 0.0
    assert row.label == LABEL_VR


def test_ratio_with_no_uplink(extraction):
    sample = Sample(0, 0, 500_000, dl_packets=[(0, 100), (100, 100)])
    row = extract_features(sample, extraction)
    assert row["RoNoP"] == 2.0
    assert row["RoTB"] == 200.0
    assert row["CC"] == 0.0
    assert row.label is None


def test_conservation_over_a_synthetic_trace():
    records = gen_vr_trace(VrProfile(fps=60, bitrate_mbps=40.0), 3000, seed=5)
    for omega_ms, n in [(100, 5), (500, 20), (1000, 10)]:
        config = ExtractionConfig(omega_ms, n)
        samples = window_packets(records, config)
        rows = [extract_features(s, config) for s in samples]
        dl = sum(r["NoPDL"] for r in rows)
        ul = sum(r["NoPUL"] for r in rows)
        assert dl + ul == len(records)
        assert sum(r["TBDL"] + r["TBUL"] for r in rows) == sum(r.size_bytes for r in records)
        for s in samples:
            vectors = subsample_bytes(s, config)
            assert vectors.D.sum() == sum(size for _, size in s.dl_packets)
            assert vectors.U.sum() == sum(size for _, size in s.ul_packets)


def test_extract_trace_features_labels_rows(extraction):
    records = make_records([(0, "DL", 100), (1000, "UL", 50), (700_000, "DL", 10)])
    rows = extract_trace_features(records, extraction, LABEL_NONVR)
    assert len(rows) == 2
    assert all(r.label == LABEL_NONVR for r in rows)


def test_vr_correlation_exceeds_streaming():
    vr = gen_vr_trace(VrProfile(), 30_000, seed=11)
    streaming = gen_nonvr_trace(NonVrProfile(kind=NonVrKind.STREAMING), 60_000, seed=12)
    for n in (5, 10, 20):
        config = ExtractionConfig(500, n)
        vr_rows = extract_trace_features(vr, config, LABEL_VR)
        nonvr_rows = extract_trace_features(streaming, config, LABEL_NONVR)
        assert len(vr_rows) >= 50 and len(nonvr_rows) >= 50
        vr_cc = np.mean([r["CC"] for r in vr_rows])
        nonvr_cc = np.mean([r["CC"] for r in nonvr_rows])
        assert vr_cc > nonvr_cc


# --- dataset assembly -------------------------------------------------------------

def test_feature_vector_validation():
    with pytest.raises(ContractError):
        FeatureVector((1.0,) * 22)
    with pytest.raises(ContractError):
        FeatureVector((1.0,) * 23, label=2)


def test_balance_truncates_longer_class_tail():
    vr = random_rows(5, None, seed=1)
    nonvr = random_rows(3, None, seed=2)
    balanced = balance_dataset(vr, nonvr)
    assert len(balanced) == 6
    assert [r.label for r in balanced] == [1, 1, 1, 0, 0, 0]
    assert [r.values for r in balanced[:3]] == [r.values for r in vr[:3]]
    assert [r.values for r in balanced[3:]] == [r.values for r in nonvr]


def test_balance_needs_both_classes():
    with pytest.raises(ContractError):
        balance_dataset(random_rows(3, None), [])


def test_to_matrix_requires_labels():
    X, y = to_matrix(random_rows(4, LABEL_VR))
    assert X.shape == (4, 23)
    assert y.tolist() == [1, 1, 1, 1]
    with pytest.raises(ContractError):
        to_matrix(random_rows(2, None))


def test_to_frame_columns():
    frame = to_frame(random_rows(2, LABEL_NONVR) + random_rows(1, None))
    assert list(frame.columns) == list(FEATURE_NAMES) + ["label"]
    assert frame["label"].isna().tolist() == [False, False, True]


def test_dataset_csv_keeps_15_significant_digits(tmp_path):
    rows = random_rows(5, LABEL_VR, seed=4) + random_rows(5, LABEL_NONVR, seed=5) + random_rows(1, None, seed=6)
    path = emit_dataset_csv(rows, tmp_path / "dataset.csv", ["# tool=vrid 1.0.0", "# seed=1"])
    loaded = load_dataset_csv(path)
    assert [r.label for r in loaded] == [r.label for r in rows]
    np.testing.assert_allclose([r.values for r in loaded], [r.values for r in rows], rtol=1e-14)


def test_dataset_values_parse_exactly(tmp_path):
    frame = to_frame(random_rows(3, LABEL_VR, seed=8))
    texts = ["0.1000000000000000055511151231257827", "123456.78901234567", "9.8765432109876543e-05"]
    path = tmp_path / "dataset.csv"
    lines = frame.to_csv(index=False, float_format="%.15g", lineterminator="\n").splitlines()
    cells = lines[1].split(",")
    cells[:3] = texts
    lines[1] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    loaded = load_dataset_csv(path)
    assert list(loaded[0].values[:3]) == [float(t) for t in texts]


def test_dataset_missing_column(tmp_path):
    frame = to_frame(random_rows(2, LABEL_VR)).drop(columns=["CC"])
    path = tmp_path / "bad.csv"
    frame.to_csv(path, index=False)
    with pytest.raises(DatasetFormatError) as err:
        load_dataset_csv(path)
    assert err.value.missing == ("CC",)
    assert err.value.line == 1


def test_dataset_bad_label_reports_line(tmp_path):
    frame = to_frame(random_rows(3, LABEL_VR))
    frame["label"] = frame["label"].astype(object)
    frame.loc[2, "label"] = 7
    path = tmp_path / "bad.csv"
    with open(path, "w") as f:
        f.write("# header\n")
        frame.to_csv(f, index=False)
    with pytest.raises(DatasetFormatError) as err:
        load_dataset_csv(path)
    assert err.value.line == 5


def test_cc_summary():
    def row(cc, label):
        values = [0.0] * 23
        values[-1] = cc
        return FeatureVector(tuple(values), label)

    summary = cc_summary({
        (500, 20): [row(0.8, 1), row(0.6, 1), row(0.1, 0)],
        (1000, 10): [row(0.9, 1), row(0.2, 0)],
    })
    assert list(summary.columns) == ["omega_ms", "traffic", "samples", "N", "mean_cc"]
    assert summary["omega_ms"].tolist() == [1000, 1000, 500, 500]
    first_500 = summary[(summary["omega_ms"] == 500) & (summary["traffic"] == "VR")].iloc[0]
    assert first_500["mean_cc"] == pytest.approx(0.7)
    assert first_500["samples"] == 2
    assert isinstance(summary, pd.DataFrame)
