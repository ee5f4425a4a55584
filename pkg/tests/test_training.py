import numpy as np
import pytest

from rdepth.checkpoint import load_container, save_container
from rdepth.dataio import generate_dataset
from rdepth.errors import CheckpointError, ContractError, ParseError
from rdepth.model import CNN_SINGLE, ModelConfig, build_model
from rdepth.training import (
    TrainConfig,
    constant_baseline_sc_inv,
    evaluate,
    load_checkpoint,
    make_windows,
    save_checkpoint,
    split_samples,
    train,
    window_loss,
    write_train_log,
)

TINY_MODEL = ModelConfig(height=16, width=16, encoder_depth=3, base_channels=4,
                         channel_cap=16, window=3)


def tiny_config(**kw):
    defaults = dict(model=TINY_MODEL, max_steps=4, seed=1, checkpoint_interval=2)
    defaults.update(kw)
    return TrainConfig(**defaults)


@pytest.fixture(scope="module")
def samples():
    return generate_dataset(seed=21, scenes=4, frames=6, height=16, width=16)


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

def test_make_windows_exact_fit(samples):
    wins = make_windows(samples[0], n=6, stride=3)
    assert len(wins) == 1


def test_make_windows_stride_enumeration():
    data = generate_dataset(seed=5, scenes=1, frames=25, height=16, width=16)
    wins = make_windows(data[0], n=10, stride=5)
    assert len(wins) == 4  # starts 0, 5, 10, 15


def test_windows_first_pose_identity(samples):
    for win in make_windows(samples[0], n=3, stride=2):
        assert np.allclose(win.poses[0], 0.0, atol=1e-6)


def test_window_shorter_sequence_rejected(samples):
    with pytest.raises(ContractError):
        make_windows(samples[0], n=10, stride=1)


def test_split_alternates(samples):
    train_half, val_half = split_samples(samples)
    assert len(train_half) == 2 and len(val_half) == 2
    assert train_half[0] is samples[0]
    assert val_half[0] is samples[1]


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def test_zero_steps_returns_initial_model(samples):
    result = train(tiny_config(max_steps=0), samples)
    assert result.rows == []
    assert result.adam.step == 0
    assert not result.aborted


def test_training_deterministic(samples):
    r1 = train(tiny_config(), samples)
    r2 = train(tiny_config(), samples)
    for name in r1.model.params:
        assert np.array_equal(r1.model.params[name].data, r2.model.params[name].data)
    assert [row["total"] for row in r1.rows] == [row["total"] for row in r2.rows]


def test_loss_rows_consistent(samples):
    result = train(tiny_config(max_steps=3), samples)
    assert [row["step"] for row in result.rows] == [0, 1, 2]
    for row in result.rows:
        recomputed = (500.0 * row["L_depth"] + 1000.0 * row["L_grad"]
                      + 500.0 * row["L_rot"] + 100.0 * row["L_trans"])
        assert row["total"] == pytest.approx(recomputed, rel=1e-6)
        assert row["lr"] == pytest.approx(0.0002)


def test_training_descends(samples):
    cfg = tiny_config(max_steps=120, seed=3)
    probe = make_windows(split_samples(samples)[0][0], cfg.model.window, cfg.stride)[0]

    from rdepth.model import build_model
    fresh = build_model(cfg.model, seed=cfg.seed)
    before, _ = window_loss(fresh, probe, cfg.weights)

    result = train(cfg, samples)
    assert not result.aborted
    after, _ = window_loss(result.model, probe, cfg.weights)
    assert float(after.data) < float(before.data)


def test_train_log_csv_schema(tmp_path, samples):
    result = train(tiny_config(max_steps=2), samples)
    path = tmp_path / "log.csv"
    write_train_log(result.rows, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "step,lr,L_depth,L_grad,L_rot,L_trans,total,seconds"
    assert len(lines) == 3


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip_bit_exact(tmp_path, samples):
    result = train(tiny_config(max_steps=2), samples)
    p1 = tmp_path / "a.rdc"
    p2 = tmp_path / "b.rdc"
    save_checkpoint(result.model, result.adam, p1)
    model, adam = load_checkpoint(p1)
    save_checkpoint(model, adam, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert adam.step == result.adam.step
    for name in result.model.params:
        assert np.array_equal(model.params[name].data, result.model.params[name].data)


def test_checkpoint_wrong_magic(tmp_path):
    path = tmp_path / "bad.rdc"
    path.write_bytes(b"NOTDEPTH" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    model = build_model(TINY_MODEL, seed=0)
    path = tmp_path / "t.rdc"
    save_checkpoint(model, None, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 7])
    with pytest.raises(ParseError, match="offset"):
        load_checkpoint(path)


def test_container_preserves_meta(tmp_path):
    path = tmp_path / "c.rdc"
    save_container(path, {"alpha": "1", "beta": "x"}, {"w": np.ones((2, 3), np.float32)})
    meta, arrays = load_container(path)
    assert meta == {"alpha": "1", "beta": "x"}
    assert np.array_equal(arrays["w"], np.ones((2, 3), np.float32))


def test_resume_matches_uninterrupted(tmp_path, samples):
    full = train(tiny_config(max_steps=6), samples)

    part = train(tiny_config(max_steps=3), samples)
    mid = tmp_path / "mid.rdc"
    save_checkpoint(part.model, part.adam, mid)
    resumed = train(tiny_config(max_steps=6), samples, resume_from=mid)

    assert resumed.adam.step == full.adam.step == 6
    for name in full.model.params:
        assert np.array_equal(full.model.params[name].data,
                              resumed.model.params[name].data), name
    for buf in ("m", "v"):
        for name in full.model.params:
            assert np.array_equal(getattr(full.adam, buf)[name],
                                  getattr(resumed.adam, buf)[name])


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def test_perfect_predictor_scores_zero(samples):
    def perfect(sample):
        depths = [d.astype(np.float64) for d in sample.depths]
        poses = [np.zeros(6)] + [
            np.asarray(sample.poses[t].as_array()) for t in range(1, len(sample))]
        # ground-truth poses are already window-relative to frame 0
        poses = [p.astype(np.float64) for p in poses]
        return depths, poses

    ev = evaluate(None, samples, eval_mode="full_sequence", predictor=perfect)
    assert ev.report.sc_inv == pytest.approx(0.0, abs=1e-12)
    assert ev.report.rmse == pytest.approx(0.0, abs=1e-12)
    assert ev.trans_error == pytest.approx(0.0, abs=1e-9)


def test_constant_predictor_matches_bruteforce(samples):
    def constant(sample):
        return ([np.full(sample.depths[0].shape, 2.0)] * len(sample),
                [np.zeros(6)] * len(sample))

    ev = evaluate(None, samples, eval_mode="last_frame", predictor=constant)
    expected = []
    for sample in samples:
        gt = sample.depths[-1].astype(np.float64)
        d = np.log10(2.0) - np.log10(gt)
        expected.append(np.sqrt((d ** 2).mean() - d.mean() ** 2))
    assert ev.report.sc_inv == pytest.approx(np.mean(expected), rel=1e-10)
    assert constant_baseline_sc_inv(samples) == pytest.approx(np.mean(expected), rel=1e-10)


def test_evaluate_with_buckets_and_cap(samples):
    def constant(sample):
        return ([np.full(sample.depths[0].shape, 3.0)] * len(sample),
                [np.zeros(6)] * len(sample))

    ev = evaluate(None, samples, eval_mode="last_frame", depth_cap=8.0,
                  buckets=[0, 2, 4, 8], predictor=constant)
    assert 1 <= len(ev.ranges) <= 3
    for low, high, err, count in ev.ranges:
        assert err >= 0 and count > 0


def test_evaluate_rejects_bad_mode(samples):
    with pytest.raises(ContractError):
        evaluate(None, samples, eval_mode="middle",
                 predictor=lambda s: ([d.astype(np.float64) for d in s.depths],
                                      [np.zeros(6)] * len(s)))


def test_window_loss_runs_on_baseline(samples):
    model_cfg = TINY_MODEL
    from rdepth.model import build_baseline
    model = build_baseline(CNN_SINGLE, model_cfg, seed=0)
    win = make_windows(samples[0], n=3, stride=3)[0]
    total, parts = window_loss(model, win, tiny_config().weights)
    assert np.isfinite(total.data)
    assert all(np.isfinite(p) for p in parts)
