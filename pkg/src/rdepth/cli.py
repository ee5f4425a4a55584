"""Command-line entry point.

Subcommands: render-dataset, train, eval, ablate, gradcheck.
Exit codes: 0 success, 1 config error, 2 I/O error, 3 numeric abort,
4 gradcheck failure.  Every run writes its fully resolved configuration
next to its outputs.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as cfgmod
from .dataio import generate_dataset, read_dataset, write_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    ContractError,
    NumericError,
    ParseError,
    ShapeError,
)
from .gradcheck import finite_diff_check, finite_diff_param_check
from .layers import conv2d, conv_lstm_step, deconv2d, global_avg_pool, linear
from .losses import depth_loss, grad_loss, pose_loss, total_loss
from .metrics import MetricReport
from .model import ModelConfig, build_model
from .tensor import Tensor
from .training import (
    ABLATION_ORDER,
    ablate,
    constant_baseline_sc_inv,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    split_samples,
    train,
    window_loss,
    write_train_log,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NUMERIC = 3
EXIT_GRADCHECK = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parse_size(text: str):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise ConfigError(f"--size expects HxW, got {text!r}") from None


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# render-dataset
# ---------------------------------------------------------------------------

def cmd_render_dataset(args) -> int:
    height, width = _parse_size(args.size)
    if height % 16 or width % 16:
        raise ConfigError(f"size {height}x{width} must be divisible by 16 "
                          "so the encoder ladder stays integral")
    os.makedirs(args.out, exist_ok=True)
    samples = generate_dataset(seed=args.seed, scenes=args.scenes, frames=args.frames,
                               height=height, width=width, difficulty=args.difficulty,
                               motion_scale=args.motion_scale)
    write_dataset(samples, args.out)
    resolved = "".join(f"render.{k}={v}\n" for k, v in sorted(vars(args).items())
                       if k != "func")
    _write_text(os.path.join(args.out, "render_config.txt"), resolved)
    print(f"wrote {len(samples)} sequences x {args.frames} frames "
          f"({height}x{width}, {args.difficulty}, motion {args.motion_scale}) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _resolved_from_args(args):
    file_values = cfgmod.read_config_file(args.config) if args.config else {}
    flags = {}
    if getattr(args, "max_steps", None) is not None:
        flags["train.max_steps"] = args.max_steps
    if getattr(args, "seed", None) is not None:
        flags["train.seed"] = args.seed
    if getattr(args, "dataset", None):
        flags["data.path"] = args.dataset
    return cfgmod.resolve(file_values, flags)


def _load_samples(resolved):
    path = resolved["data.path"]
    if path:
        return read_dataset(path)
    return generate_dataset(
        seed=int(resolved["train.seed"]), scenes=int(resolved["data.scenes"]),
        frames=int(resolved["data.frames"]), height=int(resolved["model.height"]),
        width=int(resolved["model.width"]), difficulty=resolved["data.difficulty"],
        motion_scale=float(resolved["data.motion_scale"]))


def cmd_train(args) -> int:
    resolved = _resolved_from_args(args)
    train_cfg = cfgmod.to_train_config(resolved)
    os.makedirs(args.out, exist_ok=True)
    dump = cfgmod.dump(resolved)
    _write_text(os.path.join(args.out, "resolved_config.txt"), dump)
    print(dump, end="")

    samples = _load_samples(resolved)
    result = train(train_cfg, samples, checkpoint_dir=args.out,
                   resume_from=args.resume)
    write_train_log(result.rows, os.path.join(args.out, "trainlog.csv"))
    if result.rows:
        from .plots import save_loss_curves
        save_loss_curves(result.rows, os.path.join(args.out, "loss_curves.png"))
    if result.aborted:
        print("training aborted on non-finite loss; last periodic checkpoint retained",
              file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(result.model, result.adam, os.path.join(args.out, "checkpoint.rdc"))
    print(f"finished {result.adam.step} steps; checkpoint at "
          f"{os.path.join(args.out, 'checkpoint.rdc')}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _stub_predictor(kind):
    if kind == "gt":
        def predictor(sample):
            return ([d.astype(np.float64) for d in sample.depths],
                    [np.zeros(6)] * len(sample))
        return predictor
    if kind.startswith("const:"):
        value = float(kind.split(":", 1)[1])

        def predictor(sample):
            return ([np.full(sample.depths[0].shape, value)] * len(sample),
                    [np.zeros(6)] * len(sample))
        return predictor
    raise ConfigError(f"unknown stub {kind!r}; use gt or const:VALUE")


def cmd_eval(args) -> int:
    if args.checkpoint is None and args.stub is None:
        raise ConfigError("eval needs --checkpoint or --stub")
    samples = read_dataset(args.dataset)
    buckets = None
    if args.buckets:
        try:
            buckets = [float(v) for v in args.buckets.split(",")]
        except ValueError:
            raise ConfigError(f"--buckets expects comma-separated numbers, "
                              f"got {args.buckets!r}") from None
    cap = args.cap if args.cap and args.cap > 0 else None

    model = None
    predictor = None
    if args.stub is not None:
        predictor = _stub_predictor(args.stub)
    else:
        model, _ = load_checkpoint(args.checkpoint)

    evaluation = evaluate(model, samples, eval_mode=args.mode, depth_cap=cap,
                          buckets=buckets, predictor=predictor)
    record = evaluation.report.record()
    print(record, end="")
    print(f"pose_rot_error={evaluation.rot_error:.6g}")
    print(f"pose_trans_error={evaluation.trans_error:.6g}")

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_text(os.path.join(args.out, "report.txt"), record)
        _write_text(os.path.join(args.out, "pose_errors.txt"),
                    f"rot_error={evaluation.rot_error:.12g}\n"
                    f"trans_error={evaluation.trans_error:.12g}\n"
                    f"gt_trans_magnitude={evaluation.gt_trans_magnitude:.12g}\n")
        resolved = "".join(f"eval.{k}={v}\n" for k, v in sorted(vars(args).items())
                           if k != "func")
        _write_text(os.path.join(args.out, "resolved_config.txt"), resolved)
        if buckets is not None and evaluation.ranges:
            lines = ["low,high,sc_inv,n_pixels"]
            lines += [f"{lo:g},{hi:g},{err:.12g},{count}"
                      for lo, hi, err, count in evaluation.ranges]
            _write_text(os.path.join(args.out, "ranges.csv"), "\n".join(lines) + "\n")
            from .plots import save_range_chart
            save_range_chart(evaluation.ranges, os.path.join(args.out, "range_chart.png"))
        _dump_depth_images(args, model, predictor, samples)
    return EXIT_OK


def _dump_depth_images(args, model, predictor, samples):
    from .plots import save_depth_image
    from .training import predicted_depths

    dump_dir = os.path.join(args.out, "depth_dumps")
    os.makedirs(dump_dir, exist_ok=True)
    sample = samples[0]
    if predictor is not None:
        depths, _ = predictor(sample)
    else:
        depths, _ = predicted_depths(model, sample)
    last = len(sample) - 1
    save_depth_image(dump_dir, f"pred_{last:04d}", depths[last])
    save_depth_image(dump_dir, f"gt_{last:04d}", sample.depths[last])


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

def cmd_ablate(args) -> int:
    resolved = _resolved_from_args(args)
    train_cfg = cfgmod.to_train_config(resolved)
    os.makedirs(args.out, exist_ok=True)
    _write_text(os.path.join(args.out, "resolved_config.txt"), cfgmod.dump(resolved))
    samples = _load_samples(resolved)

    rows, results = ablate(train_cfg, samples, checkpoint_dir=args.out)
    lines = ["method,sc_inv,abs_inv,abs_rel"]
    pretty = [f"{'method':<14} {'sc_inv':>8} {'abs_inv':>8} {'abs_rel':>8}"]
    for row in rows:
        lines.append(f"{row['method']},{row['sc_inv']:.12g},"
                     f"{row['abs_inv']:.12g},{row['abs_rel']:.12g}")
        pretty.append(f"{row['method']:<14} {row['sc_inv']:>8.4f} "
                      f"{row['abs_inv']:>8.4f} {row['abs_rel']:>8.4f}")
    _write_text(os.path.join(args.out, "ablation.csv"), "\n".join(lines) + "\n")
    _write_text(os.path.join(args.out, "ablation.txt"), "\n".join(pretty) + "\n")
    from .plots import save_ablation_chart
    save_ablation_chart(rows, os.path.join(args.out, "ablation_chart.png"))
    print("\n".join(pretty))
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def _gradcheck_suite(seed: int):
    """(name, tolerance, point shape, objective) per primitive and loss."""

    def w(shape, s=1):
        return Tensor(np.random.default_rng(seed + s).normal(size=shape),
                      dtype=np.float64)

    k1 = w((2, 1, 3, 3), 1)
    k2 = w((2, 2, 3, 3), 2)
    kd = w((2, 1, 3, 3), 3)
    wl = w((3, 8), 4)
    gt_map = np.abs(np.random.default_rng(seed + 5).normal(size=(6, 6))) + 0.2
    gt_pose = np.random.default_rng(seed + 6).normal(size=6)
    lstm = {
        "wx": w((8, 2, 3, 3), 7), "wh": w((8, 2, 3, 3), 8), "bias": w((8,), 9),
    }
    h0 = np.random.default_rng(seed + 10).normal(size=(2, 6, 6))
    c0 = np.random.default_rng(seed + 11).normal(size=(2, 6, 6))

    checks = [
        ("relu", 1e-6, (8, 8),
         lambda x: (x.relu() * w((8, 8), 12)).sum()),
        ("sigmoid", 1e-6, (8, 8),
         lambda x: (x.sigmoid() * w((8, 8), 13)).sum()),
        ("tanh", 1e-6, (8, 8),
         lambda x: (x.tanh() * w((8, 8), 14)).sum()),
        ("abs", 1e-6, (8, 8),
         lambda x: (x.abs() * w((8, 8), 15)).sum()),
        ("conv2d_s1", 1e-4, (1, 8, 8),
         lambda x: (conv2d(x, k1) * w((2, 8, 8), 16)).sum()),
        ("conv2d_s2", 1e-4, (2, 8, 8),
         lambda x: (conv2d(x, k2, stride=2) * w((2, 4, 4), 17)).sum()),
        ("deconv2d", 1e-4, (2, 4, 4),
         lambda x: (deconv2d(x, kd) * w((1, 8, 8), 18)).sum()),
        ("conv_lstm_step", 1e-4, (2, 6, 6),
         lambda x: _lstm_objective(x, h0, c0, lstm)),
        ("global_avg_pool", 1e-6, (3, 6, 6),
         lambda x: (global_avg_pool(x) * w((3,), 19)).sum()),
        ("linear", 1e-6, (8,),
         lambda x: (linear(x, wl) * w((3,), 20)).sum()),
        ("disparity_head", 1e-4, (6, 6),
         lambda x: ((x.sigmoid() * 9.99 + 0.01) * w((6, 6), 21)).sum()),
        ("depth_loss", 1e-5, (6, 6),
         lambda x: depth_loss([x * x + 0.05], [gt_map])),
        ("grad_loss", 1e-5, (6, 6),
         lambda x: grad_loss([x * x + 0.05], [gt_map], steps=(1, 2, 4))),
        ("pose_rot_loss", 1e-5, (6,),
         lambda x: pose_loss([x], [gt_pose])[0]),
        ("pose_trans_loss", 1e-5, (6,),
         lambda x: pose_loss([x], [gt_pose])[1]),
        ("total_loss", 1e-5, (6, 6),
         lambda x: total_loss(depth_loss([x * x + 0.05], [gt_map]),
                              grad_loss([x * x + 0.05], [gt_map], steps=(1, 2)),
                              Tensor(np.zeros(()), dtype=np.float64),
                              Tensor(np.zeros(()), dtype=np.float64))),
    ]
    return checks


def _lstm_objective(x, h0, c0, lstm):
    h1, c1 = conv_lstm_step(x, Tensor(h0, dtype=np.float64),
                            Tensor(c0, dtype=np.float64), lstm)
    h2, c2 = conv_lstm_step(x, h1, c1, lstm)
    return (h2 * h2).sum() + c2.sum()


def _composed_network_check(seed: int):
    """Whole-model loss gradient vs finite differences on sampled parameters."""
    cfg = ModelConfig(height=16, width=16, encoder_depth=3, base_channels=4,
                      channel_cap=16, window=2)
    model = build_model(cfg, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    frames = [Tensor(rng.uniform(0.1, 0.9, size=(3, 16, 16)), dtype=np.float64)
              for _ in range(2)]
    gt_disp = [rng.uniform(0.1, 0.8, size=(16, 16)) for _ in range(2)]
    gt_pose = [rng.normal(scale=0.1, size=6) for _ in range(2)]

    def loss_fn():
        outs = model.forward_sequence(frames)
        return total_loss(
            depth_loss([o.disparity for o in outs], gt_disp),
            grad_loss([o.disparity for o in outs], gt_disp, steps=(1, 2, 4, 8)),
            *pose_loss([o.pose for o in outs], gt_pose))

    return finite_diff_param_check(loss_fn, model.params, n_samples=20, seed=seed)


def cmd_gradcheck(args) -> int:
    failures = []
    worst_overall = (0.0, None)
    rng = np.random.default_rng(args.seed)
    for name, tol, shape, objective in _gradcheck_suite(args.seed):
        point = rng.normal(size=shape)
        if args.corrupt == name:
            base_objective = objective
            # simulate a missing-gradient bug: value moves, graph does not
            objective = (lambda f: lambda x: f(x)
                         + Tensor(np.square(x.data).sum() * 0.05))(base_objective)
        tolerance = args.tolerance if args.tolerance else tol
        err = finite_diff_check(objective, point, sample=16,
                                rng=np.random.default_rng(args.seed + 99))
        status = "PASS" if err < tolerance else "FAIL"
        print(f"{status} {name:<18} max_rel_err={err:.3e} tol={tolerance:g}")
        if err >= tolerance:
            failures.append((name, err))
        if err > worst_overall[0]:
            worst_overall = (err, name)

    net_err, net_param = _composed_network_check(args.seed)
    net_tol = args.tolerance if args.tolerance else 1e-4
    status = "PASS" if net_err < net_tol else "FAIL"
    print(f"{status} {'network_composed':<18} max_rel_err={net_err:.3e} "
          f"tol={net_tol:g} (worst param: {net_param})")
    if net_err >= net_tol:
        failures.append((f"network_composed/{net_param}", net_err))

    if failures:
        worst = max(failures, key=lambda f: f[1])
        print(f"gradcheck FAILED; worst offender: {worst[0]} "
              f"(max_rel_err={worst[1]:.3e})", file=sys.stderr)
        return EXIT_GRADCHECK
    print("gradcheck passed for all primitives and losses")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="rdepth",
                     description="Recurrent dense depth + ego-motion workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render-dataset", help="render a synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--frames", type=int, default=15)
    p.add_argument("--size", default="32x48")
    p.add_argument("--difficulty", default="easy",
                   choices=("easy", "textured", "cluttered"))
    p.add_argument("--motion-scale", type=float, default=2.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render_dataset)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", default="last_frame",
                   choices=("last_frame", "full_sequence"))
    p.add_argument("--cap", type=float, default=None)
    p.add_argument("--buckets", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--stub", default=None,
                   help="testing aid: gt or const:VALUE instead of a checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and compare the three variants")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=None)
    p.add_argument("--corrupt", default=None, help="testing aid: break one check")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, CheckpointError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericError,) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, ShapeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
