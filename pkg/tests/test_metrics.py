from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest

from helpers import oracle_eer
from spoofprobe.metrics import (
    ConfigurationResult,
    ExperimentReport,
    ScoreSet,
    assemble_report,
    compute_eer,
    intervention_ratio,
)


def eer_of(bona, spoof) -> float:
    return compute_eer(ScoreSet(np.asarray(bona, float), np.asarray(spoof, float)))[0]


def test_perfect_separation_is_zero():
    assert eer_of([1, 1, 1], [0, 0, 0]) == 0.0


def test_complete_flip_is_one():
    assert eer_of([0, 0], [1, 1]) == 1.0


def test_half_overlap_case():
    assert eer_of([0.9, 0.4], [0.6, 0.1]) == pytest.approx(0.5, abs=1e-12)


def test_threshold_separates_at_zero_eer():
    eer, threshold = compute_eer(ScoreSet(np.array([1.0, 2.0]), np.array([-1.0, 0.0])))
    assert eer == 0.0
    assert np.all(np.array([1.0, 2.0]) >= threshold)
    assert np.all(np.array([-1.0, 0.0]) < threshold)


def test_empty_class_rejected():
    with pytest.raises(ValueError):
        ScoreSet(np.array([]), np.array([1.0]))
    with pytest.raises(ValueError):
        ScoreSet(np.array([[1.0]]), np.array([1.0]))
    with pytest.raises(ValueError):
        ScoreSet(np.array([np.nan]), np.array([1.0]))


def test_exhaustive_brute_force_small_sets():
    """compute_eer vs the counting oracle on every grid multiset pair, total size <= 8."""
    grid = (0.0, 0.25, 0.5, 0.75, 1.0)
    checked = 0
    for nb in range(1, 8):
        for ns in range(1, 9 - nb):
            for bona in itertools.combinations_with_replacement(grid, nb):
                for spoof in itertools.combinations_with_replacement(grid, ns):
                    got = eer_of(bona, spoof)
                    want = oracle_eer(bona, spoof)
                    assert got == pytest.approx(want, abs=1e-12), (bona, spoof)
                    assert 0.0 <= got <= 1.0
                    checked += 1
    assert checked > 40000


def test_monotone_transform_invariance():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        nb = int(rng.integers(1, 12))
        ns = int(rng.integers(1, 12))
        # coarse grid keeps distinct values distinct after the transform
        bona = rng.integers(-16, 17, nb) / 8.0
        spoof = rng.integers(-16, 17, ns) / 8.0
        a = float(rng.uniform(0.5, 3.0))
        b = float(rng.uniform(-2.0, 2.0))
        before = eer_of(bona, spoof)
        after = eer_of(a * bona + b + 0.1 * bona**3, a * spoof + b + 0.1 * spoof**3)
        assert after == pytest.approx(before, abs=1e-12)


def test_swap_classes_negate_scores_invariance():
    rng = np.random.default_rng(11)
    for _ in range(500):
        bona = rng.integers(-4, 5, int(rng.integers(1, 9))).astype(float)
        spoof = rng.integers(-4, 5, int(rng.integers(1, 9))).astype(float)
        assert eer_of(bona, spoof) == pytest.approx(eer_of(-spoof, -bona), abs=1e-12)


def test_ratio_published_anchor_values():
    assert intervention_ratio(0.83, 9.07, 0.77) == pytest.approx(137.33, abs=0.01)
    assert intervention_ratio(1.39, 8.78, 1.21) == pytest.approx(41.06, abs=0.01)


def test_ratio_equal_deviations_is_one():
    assert intervention_ratio(2.0, 3.0, 1.0) == pytest.approx(1.0)


def test_ratio_te_s_equal_to_o_gives_inf():
    assert intervention_ratio(1.0, 2.0, 1.0) == math.inf


def test_ratio_zero_o_rejected():
    with pytest.raises(ValueError):
        intervention_ratio(0.0, 1.0, 2.0)


def test_ratio_invalid_inputs_rejected():
    with pytest.raises(ValueError):
        intervention_ratio(float("nan"), 1.0, 2.0)
    with pytest.raises(ValueError):
        intervention_ratio(1.0, -0.5, 2.0)


def test_ratio_reciprocal_identity():
    rng = np.random.default_rng(3)
    for _ in range(200):
        o, b, s = rng.uniform(0.01, 0.5, 3)
        if s == o or b == o:
            continue
        fwd = intervention_ratio(o, b, s)
        rev = intervention_ratio(o, s, b)
        if math.isfinite(fwd) and fwd > 0:
            assert fwd * rev == pytest.approx(1.0, rel=1e-12)


def _full_report() -> ExperimentReport:
    results = {
        "noise": {
            cfg: ConfigurationResult(cfg, eer, f"configurations/{cfg}/checkpoint.json", "ab" * 32, f"configurations/{cfg}/telemetry.csv")
            for cfg, eer in [("O", 0.02), ("Tr_B", 0.05), ("Tr_S", 0.03), ("Te_B", 0.40), ("Te_S", 0.04)]
        }
    }
    return assemble_report("mlp-cce", results)


def test_assemble_report_ratio_from_te_rows():
    report = _full_report()
    assert report.ratios["noise"] == pytest.approx(abs(0.02 - 0.40) / abs(0.02 - 0.04))


def test_assemble_report_only_o_has_no_ratio():
    report = assemble_report("x", {"noise": {"O": ConfigurationResult("O", 0.1)}})
    assert report.ratios == {"noise": None}


def test_report_json_round_trip(tmp_path):
    report = _full_report()
    path = report.save_json(tmp_path / "report.json")
    loaded = ExperimentReport.load_json(path)
    assert loaded.label == report.label
    assert loaded.ratios == report.ratios
    assert loaded.results == report.results
    # stored document carries the derived direction flag
    doc = json.loads(path.read_text())
    assert doc["bonafide_more_affected"]["noise"] is True


def test_report_csv_rendering(tmp_path):
    report = _full_report()
    text = (report.save_csv(tmp_path / "report.csv")).read_text()
    lines = text.strip().splitlines()
    assert lines[0] == "System,O,Te_S,Te_B,Ratio"
    assert lines[1] == "mlp-cce/noise,2.00,4.00,40.00,19.00"


def test_report_csv_inf_and_missing_ratio(tmp_path):
    results = {
        "noise": {
            "O": ConfigurationResult("O", 0.1),
            "Te_B": ConfigurationResult("Te_B", 0.2),
            "Te_S": ConfigurationResult("Te_S", 0.1),
        },
        "codec": {"O": ConfigurationResult("O", 0.1)},
    }
    report = assemble_report("m", results)
    lines = report.save_csv(tmp_path / "r.csv").read_text().strip().splitlines()
    codec_row = next(l for l in lines if l.startswith("m/codec"))
    noise_row = next(l for l in lines if l.startswith("m/noise"))
    assert codec_row.endswith(",,,")          # no Te rows -> empty EERs and ratio
    assert noise_row.endswith(",inf")
