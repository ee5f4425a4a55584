"""Windowed training loop, evaluation harness, ablation runner, checkpoints.

Training consumes fixed-length windows cut from rendered sequences, with
window poses re-expressed relative to their own first frame.  Every run is
exactly reproducible from (config, seed): the window visited at step k is
drawn from a counter-keyed generator, so a resumed run replays the same
stream.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import load_container, save_container
from .errors import CheckpointError, ContractError, NumericError
from .geometry import relative_pose
from .losses import LossWeights, depth_loss, grad_loss, pose_loss, total_loss
from .metrics import (
    MetricReport,
    compute_report,
    evaluate_depth_cap,
    range_bucketed_sc_inv,
    sc_inv,
)
from .model import (
    CNN_SINGLE,
    CNN_STACK,
    DENSE_SLAM,
    KINDS,
    Model,
    ModelConfig,
    build_baseline,
    build_model,
)
from .optim import AdamState, adam_step, clip_gradients
from .tensor import Tensor

log = logging.getLogger("rdepth.training")

LOG_COLUMNS = ("step", "lr", "L_depth", "L_grad", "L_rot", "L_trans", "total", "seconds")


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig.desk_scale)
    kind: str = DENSE_SLAM
    weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 0.0002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.9
    decay_interval: int = 10000
    max_steps: int = 2000
    window_stride: int = 0  # 0 -> window // 2
    seed: int = 0
    checkpoint_interval: int = 500
    clip_norm: float = 10.0

    def validate(self) -> "TrainConfig":
        self.model.validate()
        self.weights.validate()
        if self.kind not in KINDS:
            raise ContractError(f"unknown model kind {self.kind!r}")
        if min(self.lr, self.beta1, self.beta2, self.eps, self.decay) <= 0:
            raise ContractError("optimizer rates must be positive")
        if self.max_steps < 0 or self.decay_interval < 1 or self.checkpoint_interval < 1:
            raise ContractError("step counts must be positive")
        return self

    @property
    def stride(self) -> int:
        return self.window_stride or max(self.model.window // 2, 1)


@dataclass
class Window:
    """Training-ready slice of a sequence: CHW frames, disparity and pose targets."""

    frames: list      # (3, H, W) float32
    disparities: list  # (H, W) float32, 1/depth
    poses: list       # (6,) float32, relative to the window's first frame


def make_windows(sample, n: int, stride: int):
    """Cut windows starting at 0, stride, 2*stride, ...; poses re-referenced."""
    length = len(sample)
    if length < n:
        raise ContractError(f"sequence of {length} frames is shorter than window {n}")
    if stride < 1:
        raise ContractError("stride must be >= 1")
    windows = []
    for start in range(0, length - n + 1, stride):
        base = sample.poses[start]
        frames = [np.ascontiguousarray(f.transpose(2, 0, 1), dtype=np.float32)
                  for f in sample.frames[start:start + n]]
        disparities = [(1.0 / d).astype(np.float32) for d in sample.depths[start:start + n]]
        poses = [relative_pose(base, sample.poses[start + k]).as_array().astype(np.float32)
                 for k in range(n)]
        windows.append(Window(frames=frames, disparities=disparities, poses=poses))
    return windows


def split_samples(samples):
    """Deterministic train/validation split: alternating scene parity."""
    if len(samples) < 2:
        return list(samples), list(samples)
    train = [s for i, s in enumerate(samples) if i % 2 == 0]
    val = [s for i, s in enumerate(samples) if i % 2 == 1]
    return train, val


def window_loss(model: Model, window: Window, weights: LossWeights):
    """Forward a window and assemble the four loss terms plus their total."""
    outputs = model.forward_sequence([Tensor(f) for f in window.frames])
    pred_disp = [o.disparity for o in outputs]
    pred_pose = [o.pose for o in outputs]
    l_depth = depth_loss(pred_disp, window.disparities)
    l_grad = grad_loss(pred_disp, window.disparities)
    l_rot, l_trans = pose_loss(pred_pose, window.poses)
    total = total_loss(l_depth, l_grad, l_rot, l_trans, weights)
    return total, (l_depth.item(), l_grad.item(), l_rot.item(), l_trans.item())


@dataclass
class TrainResult:
    model: Model
    adam: AdamState
    rows: list
    aborted: bool = False
    clip_events: int = 0


def _window_index(seed: int, step: int, n: int) -> int:
    return int(np.random.default_rng([seed & 0xFFFFFFFF, 0x5EED, step]).integers(n))


def train(config: TrainConfig, samples, checkpoint_dir=None, resume_from=None,
          on_step=None) -> TrainResult:
    """Run the training loop over the train half of `samples`.

    Aborts (keeping the last periodic checkpoint) if a loss goes non-finite.
    """
    config.validate()
    train_samples, _ = split_samples(samples)
    n = config.model.window
    windows = []
    for sample in train_samples:
        windows.extend(make_windows(sample, n, config.stride))
    if not windows:
        raise ContractError("no training windows")

    if resume_from is not None:
        model, adam = load_checkpoint(resume_from)
        if model.kind != config.kind or adam is None:
            raise CheckpointError("resume checkpoint does not match the run config")
    else:
        if config.kind == DENSE_SLAM:
            model = build_model(config.model, seed=config.seed)
        else:
            model = build_baseline(config.kind, config.model, seed=config.seed)
        adam = AdamState(model.params, lr=config.lr, beta1=config.beta1,
                         beta2=config.beta2, eps=config.eps, decay=config.decay,
                         decay_interval=config.decay_interval)

    rows = []
    clip_events = 0
    aborted = False
    while adam.step < config.max_steps:
        step = adam.step
        started = time.perf_counter()
        window = windows[_window_index(config.seed, step, len(windows))]
        try:
            total, (l_depth, l_grad, l_rot, l_trans) = window_loss(
                model, window, config.weights)
            total.backward()
        except NumericError as exc:
            log.error("aborting at step %d: %s", step, exc)
            aborted = True
            break
        norm, clipped = clip_gradients(model.params, config.clip_norm)
        if clipped:
            clip_events += 1
            log.info("step %d: clipped gradients (norm %.3f)", step, norm)
        lr = adam.effective_lr()
        adam_step(model.params, adam)
        for p in model.params.values():
            p.zero_grad()
        rows.append({
            "step": step, "lr": lr, "L_depth": l_depth, "L_grad": l_grad,
            "L_rot": l_rot, "L_trans": l_trans, "total": float(total.data),
            "seconds": time.perf_counter() - started,
        })
        if checkpoint_dir is not None and adam.step % config.checkpoint_interval == 0:
            save_checkpoint(model, adam,
                            f"{checkpoint_dir}/ckpt_{adam.step:06d}.rdc")
        if on_step is not None:
            on_step(rows[-1])
    return TrainResult(model=model, adam=adam, rows=rows, aborted=aborted,
                       clip_events=clip_events)


def write_train_log(rows, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(f"{row[c]:.10g}" if c != "step" else str(row[c])
                              for c in LOG_COLUMNS) + "\n")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _scored_indices(length: int, eval_mode: str):
    if eval_mode == "last_frame":
        return [length - 1]
    if eval_mode == "full_sequence":
        return list(range(length))
    raise ContractError(f"eval_mode must be last_frame or full_sequence, got {eval_mode!r}")


def predicted_depths(model: Model, sample):
    frames = [Tensor(np.ascontiguousarray(f.transpose(2, 0, 1), dtype=np.float32))
              for f in sample.frames]
    outputs = model.forward_sequence(frames)
    depths = [(1.0 / o.disparity.data).astype(np.float64) for o in outputs]
    poses = [o.pose.data.astype(np.float64) for o in outputs]
    return depths, poses


@dataclass
class Evaluation:
    report: MetricReport
    rot_error: float      # mean L2 Euler error per scored frame
    trans_error: float    # mean L2 translation error per scored frame
    gt_trans_magnitude: float
    ranges: list = field(default_factory=list)
    per_frame_sc_inv: list = field(default_factory=list)


def evaluate(model: Model, samples, eval_mode: str = "last_frame",
             depth_cap: float | None = None, buckets=None,
             predictor=None) -> Evaluation:
    """Score a model (or a `predictor(sample) -> (depths, poses)` stand-in)."""
    if not samples:
        raise ContractError("evaluation needs at least one sequence")
    metric_names = ("sc_inv", "abs_rel", "abs_inv", "rmse", "rmse_log")
    sums = dict.fromkeys(metric_names, 0.0)
    n_frames = 0
    n_pixels = 0
    rot_err = []
    trans_err = []
    gt_mag = []
    pooled_pred = []
    pooled_gt = []
    per_frame_sc = []

    for sample in samples:
        if predictor is not None:
            depths, poses = predictor(sample)
        else:
            depths, poses = predicted_depths(model, sample)
        base = sample.poses[0]
        for t in _scored_indices(len(sample), eval_mode):
            pred = depths[t]
            gt = sample.depths[t].astype(np.float64)
            mask = None
            if depth_cap is not None:
                pred, gt, mask = evaluate_depth_cap(pred, gt, depth_cap)
            report = compute_report(pred, gt, mask)
            for name in metric_names:
                sums[name] += getattr(report, name)
            per_frame_sc.append(report.sc_inv)
            n_pixels += report.n_pixels
            n_frames += 1
            gt_pose = relative_pose(base, sample.poses[t]).as_array()
            rot_err.append(float(np.linalg.norm(poses[t][:3] - gt_pose[:3])))
            trans_err.append(float(np.linalg.norm(poses[t][3:] - gt_pose[3:])))
            gt_mag.append(float(np.linalg.norm(gt_pose[3:])))
            if buckets is not None:
                sel = mask if mask is not None else np.ones(gt.shape, dtype=bool)
                pooled_pred.append(pred[sel].reshape(-1))
                pooled_gt.append(gt[sel].reshape(-1))

    report = MetricReport(
        **{name: sums[name] / n_frames for name in metric_names},
        n_pixels=n_pixels).validate()
    ranges = []
    if buckets is not None:
        ranges = range_bucketed_sc_inv(np.concatenate(pooled_pred),
                                       np.concatenate(pooled_gt), buckets)
        report.ranges = ranges
    return Evaluation(report=report, rot_error=float(np.mean(rot_err)),
                      trans_error=float(np.mean(trans_err)),
                      gt_trans_magnitude=float(np.mean(gt_mag)),
                      ranges=ranges, per_frame_sc_inv=per_frame_sc)


def constant_baseline_sc_inv(samples, eval_mode: str = "last_frame",
                             depth_cap: float | None = None) -> float:
    """Mean per-frame sc_inv of the best constant-disparity predictor.

    sc_inv is blind to scale, so every constant scores the same: the standard
    deviation of log10 ground-truth depth.
    """
    values = []
    for sample in samples:
        for t in _scored_indices(len(sample), eval_mode):
            gt = sample.depths[t].astype(np.float64)
            const = np.ones_like(gt)
            mask = None
            if depth_cap is not None:
                const, gt, mask = evaluate_depth_cap(const, gt, depth_cap)
            values.append(sc_inv(const, gt, mask))
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

ABLATION_ORDER = (CNN_SINGLE, CNN_STACK, DENSE_SLAM)


def _latest_ablation_checkpoint(kind_dir):
    if not os.path.isdir(kind_dir):
        return None
    ckpts = sorted(f for f in os.listdir(kind_dir)
                   if f.startswith("ckpt_") and f.endswith(".rdc"))
    return os.path.join(kind_dir, ckpts[-1]) if ckpts else None


def ablate(config: TrainConfig, samples, eval_mode: str = "last_frame",
           checkpoint_dir=None, on_step=None):
    """Train all three variants with identical data/seed/steps; score each.

    With a checkpoint_dir, each variant checkpoints under its own
    subdirectory and an interrupted sub-run resumes from its latest one.
    Returns rows of {method, sc_inv, abs_inv, abs_rel} in table order.
    """
    _, val = split_samples(samples)
    rows = []
    results = {}
    for kind in ABLATION_ORDER:
        run_cfg = replace(config, kind=kind)
        kind_dir = None
        resume = None
        if checkpoint_dir is not None:
            kind_dir = os.path.join(checkpoint_dir, kind)
            os.makedirs(kind_dir, exist_ok=True)
            resume = _latest_ablation_checkpoint(kind_dir)
        result = train(run_cfg, samples, checkpoint_dir=kind_dir,
                       resume_from=resume, on_step=on_step)
        if result.aborted:
            raise NumericError(f"ablation run for {kind} aborted")
        evaluation = evaluate(result.model, val, eval_mode=eval_mode)
        rows.append({
            "method": kind,
            "sc_inv": evaluation.report.sc_inv,
            "abs_inv": evaluation.report.abs_inv,
            "abs_rel": evaluation.report.abs_rel,
        })
        results[kind] = result
        if checkpoint_dir is not None:
            save_checkpoint(result.model, result.adam,
                            os.path.join(checkpoint_dir, f"{kind}.rdc"))
    return rows, results


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, adam: AdamState | None, path) -> None:
    meta = {"kind": model.kind}
    for key, value in model.config.to_dict().items():
        meta[f"model.{key}"] = value
    arrays = {f"param.{name}": p.data for name, p in model.params.items()}
    if adam is not None:
        meta.update({
            "adam.step": adam.step, "adam.lr": f"{adam.lr:.17g}",
            "adam.beta1": f"{adam.beta1:.17g}", "adam.beta2": f"{adam.beta2:.17g}",
            "adam.eps": f"{adam.eps:.17g}", "adam.decay": f"{adam.decay:.17g}",
            "adam.decay_interval": adam.decay_interval,
        })
        for name in model.params:
            arrays[f"adam.m.{name}"] = adam.m[name]
            arrays[f"adam.v.{name}"] = adam.v[name]
    save_container(path, meta, arrays)


def load_checkpoint(path):
    """Returns (model, adam state or None); bit-exact with what was saved."""
    meta, arrays = load_container(path)
    if "kind" not in meta:
        raise CheckpointError(f"checkpoint {path} lacks a model kind")
    kind = meta["kind"]
    config = ModelConfig.from_dict(
        {k[len("model."):]: v for k, v in meta.items() if k.startswith("model.")})
    if kind == DENSE_SLAM:
        model = build_model(config, seed=0)
    elif kind in (CNN_SINGLE, CNN_STACK):
        model = build_baseline(kind, config, seed=0)
    else:
        raise CheckpointError(f"unknown model kind {kind!r} in {path}")
    for name, p in model.params.items():
        key = f"param.{name}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint {path} is missing parameter {name}")
        if arrays[key].shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {arrays[key].shape} "
                f"vs model {p.data.shape}")
        p.data = arrays[key].astype(np.float32)

    adam = None
    if "adam.step" in meta:
        adam = AdamState(model.params, lr=float(meta["adam.lr"]),
                         beta1=float(meta["adam.beta1"]), beta2=float(meta["adam.beta2"]),
                         eps=float(meta["adam.eps"]), decay=float(meta["adam.decay"]),
                         decay_interval=int(meta["adam.decay_interval"]))
        adam.step = int(meta["adam.step"])
        for name in model.params:
            adam.m[name] = arrays[f"adam.m.{name}"].astype(np.float32)
            adam.v[name] = arrays[f"adam.v.{name}"].astype(np.float32)
    return model, adam
