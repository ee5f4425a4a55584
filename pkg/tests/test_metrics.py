import math

import numpy as np
import pytest

from rdepth.errors import ContractError, NumericError
from rdepth.metrics import (
    MetricReport,
    abs_inv,
    abs_rel,
    compute_report,
    evaluate_depth_cap,
    range_bucketed_sc_inv,
    rmse,
    rmse_log,
    sc_inv,
)


# ---------------------------------------------------------------------------
# brute-force oracles: direct per-pixel loops over the formulas
# ---------------------------------------------------------------------------

def _loop_metrics(z, gt):
    zs = list(np.asarray(z, dtype=np.float64).reshape(-1))
    gs = list(np.asarray(gt, dtype=np.float64).reshape(-1))
    n = len(zs)
    d = [math.log10(a) - math.log10(b) for a, b in zip(zs, gs)]
    sum_d = sum(d)
    sum_d2 = sum(v * v for v in d)
    out = {
        "sc_inv": math.sqrt(sum_d2 / n - (sum_d / n) ** 2) if sum_d2 / n > (sum_d / n) ** 2 else 0.0,
        "abs_rel": sum(abs(a - b) / b for a, b in zip(zs, gs)) / n,
        "abs_inv": sum(abs(1 / a - 1 / b) for a, b in zip(zs, gs)) / n,
        "rmse": math.sqrt(sum((a - b) ** 2 for a, b in zip(zs, gs)) / n),
        "rmse_log": math.sqrt(sum_d2 / n),
    }
    return out


# ---------------------------------------------------------------------------
# point cases
# ---------------------------------------------------------------------------

def test_all_zero_on_equal_maps():
    z = np.full((3, 3), 2.0)
    assert sc_inv(z, z) == 0.0
    assert abs_rel(z, z) == 0.0
    assert abs_inv(z, z) == 0.0
    assert rmse(z, z) == 0.0
    assert rmse_log(z, z) == 0.0


def test_sc_inv_blind_to_scale():
    rng = np.random.default_rng(0)
    z = rng.uniform(0.5, 20.0, size=(8, 8))
    for c in (1e-3, 0.1, 1.0, 7.3, 1e3):
        assert sc_inv(z, c * z) == pytest.approx(0.0, abs=1e-9)


def test_sc_inv_antisymmetric_pair():
    assert sc_inv(np.array([1.0, 10.0]), np.array([10.0, 1.0])) == pytest.approx(1.0)


def test_abs_rel_and_abs_inv_point_values():
    assert abs_rel(np.array([2.0]), np.array([4.0])) == pytest.approx(0.5)
    assert abs_inv(np.array([2.0]), np.array([4.0])) == pytest.approx(0.25)
    assert abs_rel(np.array([1.0, 3.0]), np.array([2.0, 2.0])) == pytest.approx(0.5)


def test_rmse_point_values():
    assert rmse(np.array([1.0, 1.0]), np.array([2.0, 2.0])) == pytest.approx(1.0)
    assert rmse_log(np.array([1.0]), np.array([10.0])) == pytest.approx(1.0)


def test_nonpositive_depth_rejected():
    with pytest.raises(NumericError):
        sc_inv(np.array([1.0, -2.0]), np.array([1.0, 1.0]))


def test_empty_mask_rejected():
    with pytest.raises(ContractError):
        sc_inv(np.ones(4), np.ones(4), mask=np.zeros(4, dtype=bool))


# ---------------------------------------------------------------------------
# oracle equivalence and properties
# ---------------------------------------------------------------------------

def test_metrics_match_bruteforce_on_100_random_maps():
    rng = np.random.default_rng(42)
    for _ in range(100):
        z = rng.uniform(0.1, 30.0, size=(8, 8))
        gt = rng.uniform(0.1, 30.0, size=(8, 8))
        expected = _loop_metrics(z, gt)
        assert sc_inv(z, gt) == pytest.approx(expected["sc_inv"], abs=1e-10)
        assert abs_rel(z, gt) == pytest.approx(expected["abs_rel"], abs=1e-10)
        assert abs_inv(z, gt) == pytest.approx(expected["abs_inv"], abs=1e-10)
        assert rmse(z, gt) == pytest.approx(expected["rmse"], abs=1e-10)
        assert rmse_log(z, gt) == pytest.approx(expected["rmse_log"], abs=1e-10)


def test_permutation_invariance():
    rng = np.random.default_rng(1)
    z = rng.uniform(0.5, 5.0, size=64)
    gt = rng.uniform(0.5, 5.0, size=64)
    perm = rng.permutation(64)
    for fn in (sc_inv, abs_rel, abs_inv, rmse, rmse_log):
        assert fn(z, gt) == pytest.approx(fn(z[perm], gt[perm]), rel=1e-12)


def test_rmse_log_dominates_sc_inv():
    rng = np.random.default_rng(2)
    for _ in range(50):
        z = rng.uniform(0.2, 10.0, size=30)
        gt = rng.uniform(0.2, 10.0, size=30)
        assert rmse_log(z, gt) >= sc_inv(z, gt) - 1e-12


# ---------------------------------------------------------------------------
# depth cap
# ---------------------------------------------------------------------------

def test_cap_infinite_is_identity():
    z = np.array([1.0, 50.0])
    gt = np.array([2.0, 60.0])
    z2, gt2, mask = evaluate_depth_cap(z, gt, 1e9)
    assert np.array_equal(z2, z)
    assert np.array_equal(gt2, gt)
    assert mask.all()


def test_cap_drops_far_ground_truth():
    z = np.array([45.0, 70.0])
    gt = np.array([50.0, 90.0])
    _, _, mask = evaluate_depth_cap(z, gt, 80.0)
    assert mask.tolist() == [True, False]


def test_cap_clamps_prediction():
    z = np.array([120.0])
    gt = np.array([50.0])
    z2, _, mask = evaluate_depth_cap(z, gt, 80.0)
    assert z2[0] == 80.0 and mask[0]


def test_all_beyond_cap_propagates_empty_mask_error():
    z = np.array([10.0, 20.0])
    gt = np.array([90.0, 95.0])
    z2, gt2, mask = evaluate_depth_cap(z, gt, 80.0)
    with pytest.raises(ContractError):
        sc_inv(z2, gt2, mask)


# ---------------------------------------------------------------------------
# range buckets
# ---------------------------------------------------------------------------

def test_single_bucket_equals_global():
    rng = np.random.default_rng(3)
    z = rng.uniform(1.0, 1.9, size=40)
    gt = rng.uniform(1.0, 1.9, size=40)
    table = range_bucketed_sc_inv(z, gt, [0.0, 2.0])
    assert len(table) == 1
    low, high, err, count = table[0]
    assert (low, high, count) == (0.0, 2.0, 40)
    assert err == pytest.approx(sc_inv(z, gt))


def test_buckets_zero_on_equal():
    z = np.array([0.5, 1.5, 0.7, 1.2])
    for _, _, err, _ in range_bucketed_sc_inv(z, z, [0.0, 1.0, 2.0]):
        assert err == pytest.approx(0.0)


def test_buckets_match_partition_oracle():
    rng = np.random.default_rng(4)
    z = rng.uniform(0.3, 9.0, size=300)
    gt = rng.uniform(0.3, 9.0, size=300)
    edges = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0]
    table = range_bucketed_sc_inv(z, gt, edges)
    for low, high, err, count in table:
        sel = [(zi, gi) for zi, gi in zip(z, gt) if low <= gi < high]
        assert count == len(sel)
        zs = np.array([s[0] for s in sel])
        gs = np.array([s[1] for s in sel])
        assert err == pytest.approx(sc_inv(zs, gs), abs=1e-12)


def test_empty_buckets_absent():
    z = np.array([0.5, 0.6])
    table = range_bucketed_sc_inv(z, z, [0.0, 1.0, 2.0, 3.0])
    assert len(table) == 1


def test_bad_edges_rejected():
    with pytest.raises(ContractError):
        range_bucketed_sc_inv(np.ones(3), np.ones(3), [1.0, 1.0])


# ---------------------------------------------------------------------------
# report record
# ---------------------------------------------------------------------------

def test_report_record_round_trip():
    rng = np.random.default_rng(5)
    z = rng.uniform(0.5, 8.0, size=(8, 8))
    gt = rng.uniform(0.5, 8.0, size=(8, 8))
    report = compute_report(z, gt)
    text = report.record()
    lines = text.strip().splitlines()
    assert [ln.split("=")[0] for ln in lines] == [
        "sc_inv", "abs_rel", "abs_inv", "rmse", "rmse_log", "n_pixels"]
    back = MetricReport.from_record(text)
    assert back.n_pixels == 64
    assert back.sc_inv == pytest.approx(report.sc_inv, rel=1e-10)
