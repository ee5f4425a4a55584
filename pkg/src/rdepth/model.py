"""DenseSLAMNet and its two ablation baselines.

The network is a U-shaped encoder/decoder over single RGB frames.  The
encoder downsamples with stride-2 convolutions (kernels 7, 5, then 3), the
decoder upsamples with stride-2 deconvolutions and concatenative skip
connections, and three convolutional LSTM blocks carry state across time:
one at the bottleneck and one after each of the two coarsest decoder
stages.  Heads: a bounded per-pixel disparity map (sigmoid squashed into
[disp_min, disp_max]) and a 6-DoF pose vector regressed from pooled
bottleneck features.

Baselines share the topology: CNN-SINGLE swaps each LSTM for a plain
convolution of equal output channels; CNN-STACK additionally takes a
rolling stack of the last `window` frames as input to the first layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError, NumericError, ShapeError
from .layers import concat, conv2d, conv_lstm_step, deconv2d, global_avg_pool, linear
from .tensor import Tensor

DENSE_SLAM = "DenseSLAMNet"
CNN_SINGLE = "CNN-SINGLE"
CNN_STACK = "CNN-STACK"
KINDS = (DENSE_SLAM, CNN_SINGLE, CNN_STACK)

ROTATION_SCALE = 0.01  # keeps early pose outputs in a sane angular range


@dataclass
class ModelConfig:
    height: int = 192
    width: int = 256
    encoder_depth: int = 5
    base_channels: int = 32
    channel_cap: int = 512
    lstm_blocks: int = 3
    window: int = 10
    disp_min: float = 0.01
    disp_max: float = 10.0

    def validate(self) -> "ModelConfig":
        step = 2 ** self.encoder_depth
        if self.height % step or self.width % step:
            raise ConfigError(
                f"input {self.height}x{self.width} not divisible by 2^{self.encoder_depth}; "
                "the bottleneck would be fractional")
        if self.encoder_depth < 3:
            raise ConfigError("encoder_depth must be >= 3 to place the 3 recurrent blocks")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if not (0 < self.disp_min < self.disp_max):
            raise ConfigError("need 0 < disp_min < disp_max")
        if self.lstm_blocks != 3:
            raise ConfigError("architecture is defined for exactly 3 recurrent blocks")
        return self

    def channels(self, i: int) -> int:
        return min(self.base_channels * 2 ** i, self.channel_cap)

    @classmethod
    def desk_scale(cls) -> "ModelConfig":
        # disparity bounds sized to the synthetic scenes (depths ~1..13)
        return cls(height=32, width=48, encoder_depth=4, base_channels=8,
                   channel_cap=64, disp_min=0.05, disp_max=1.0)

    def to_dict(self) -> dict:
        return {
            "height": self.height, "width": self.width,
            "encoder_depth": self.encoder_depth, "base_channels": self.base_channels,
            "channel_cap": self.channel_cap, "lstm_blocks": self.lstm_blocks,
            "window": self.window, "disp_min": self.disp_min, "disp_max": self.disp_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        cfg = cls()
        for key, value in d.items():
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown model config key: {key}")
            cast = float if key in ("disp_min", "disp_max") else int
            setattr(cfg, key, cast(value))
        return cfg.validate()


@dataclass
class RecurrentState:
    """Hidden/cell maps of the three conv-LSTM blocks, ordered coarse to fine."""

    blocks: list

    @classmethod
    def zeros(cls, shapes, dtype=np.float32) -> "RecurrentState":
        return cls([(Tensor(np.zeros(s, dtype=dtype)), Tensor(np.zeros(s, dtype=dtype)))
                    for s in shapes])


@dataclass
class FrameOutput:
    disparity: Tensor  # (H, W), values in [disp_min, disp_max]
    pose: Tensor       # (6,), rotation then translation


@dataclass
class Model:
    kind: str
    config: ModelConfig
    params: dict = field(default_factory=dict)
    dtype: object = np.float32
    _grid_cache: dict = field(default_factory=dict, repr=False)

    def _grids(self, shape):
        """Constant normalized coordinate maps in [-1, 1] for moment pooling."""
        key = tuple(shape)
        if key not in self._grid_cache:
            _, h, w = shape
            xs = np.linspace(-1.0, 1.0, w, dtype=self.dtype)
            ys = np.linspace(-1.0, 1.0, h, dtype=self.dtype)
            self._grid_cache[key] = (
                Tensor(np.broadcast_to(xs, shape).copy()),
                Tensor(np.broadcast_to(ys[:, None], shape).copy()))
        return self._grid_cache[key]

    # -- state ---------------------------------------------------------------

    def state_shapes(self):
        d = self.config.encoder_depth
        h, w = self.config.height, self.config.width
        shapes = [(self.config.channels(d - 1), h >> d, w >> d)]
        for j in (d - 1, d - 2):
            shapes.append((self.config.channels(j - 1), h >> j, w >> j))
        return shapes

    def init_state(self):
        if self.kind == DENSE_SLAM:
            return RecurrentState.zeros(self.state_shapes(), dtype=self.dtype)
        if self.kind == CNN_STACK:
            return ()
        return None

    # -- forward -------------------------------------------------------------

    def forward_step(self, frame: Tensor, state):
        """One time step: (frame, carried state) -> (FrameOutput, next state).

        Pure in its arguments; identical inputs give identical outputs.
        """
        cfg = self.config
        if self.kind == CNN_STACK:
            stacked, state = self._stack_input(frame, state)
            out = self._unet(stacked, None)
            output, _ = out
            return output, state
        if frame.shape != (3, cfg.height, cfg.width):
            raise ShapeError(f"frame shape {frame.shape} does not match config "
                             f"(3, {cfg.height}, {cfg.width})")
        output, next_state = self._unet(frame, state)
        return output, next_state

    def forward_sequence(self, frames):
        """Fold forward_step over the frames from the zero state."""
        frames = list(frames)
        if not frames:
            raise ContractError("forward_sequence needs at least one frame")
        state = self.init_state()
        outputs = []
        for frame in frames:
            out, state = self.forward_step(frame, state)
            outputs.append(out)
        return outputs

    def _stack_input(self, frame: Tensor, state):
        cfg = self.config
        if frame.shape != (3, cfg.height, cfg.width):
            raise ShapeError(f"frame shape {frame.shape} does not match config "
                             f"(3, {cfg.height}, {cfg.width})")
        history = tuple(state) + (frame,)
        frames = history[-cfg.window:]
        # left-pad a short history by repeating its oldest frame
        frames = (frames[0],) * (cfg.window - len(frames)) + frames
        return concat(frames, axis=0), history[-(cfg.window - 1):] if cfg.window > 1 else ()

    def _unet(self, inp: Tensor, state):
        cfg = self.config
        d = cfg.encoder_depth
        p = self.params
        recurrent = self.kind == DENSE_SLAM

        skips = []
        feat = inp
        for i in range(d):
            feat = conv2d(feat, p[f"enc{i}.kernel"], p[f"enc{i}.bias"], stride=2).relu()
            skips.append(feat)

        next_blocks = []
        ctx_outputs = []

        def context(feat, idx):
            if recurrent:
                h, c = state.blocks[idx]
                h2, c2 = conv_lstm_step(feat, h, c, {
                    "wx": p[f"lstm{idx}.wx"], "wh": p[f"lstm{idx}.wh"],
                    "bias": p[f"lstm{idx}.bias"]})
                next_blocks.append((h2, c2))
                ctx_outputs.append(h2)
                return h2
            out = conv2d(feat, p[f"ctx{idx}.kernel"], p[f"ctx{idx}.bias"]).relu()
            ctx_outputs.append(out)
            return out

        feat = context(feat, 0)

        block = 1
        for j in range(d - 1, 0, -1):
            feat = deconv2d(feat, p[f"up{j}.kernel"], p[f"up{j}.bias"]).relu()
            feat = concat([feat, skips[j - 1]], axis=0)
            feat = conv2d(feat, p[f"fuse{j}.kernel"], p[f"fuse{j}.bias"]).relu()
            if block <= 2:
                feat = context(feat, block)
                block += 1
        feat = deconv2d(feat, p["up0.kernel"], p["up0.bias"]).relu()
        feat = conv2d(feat, p["refine.kernel"], p["refine.bias"]).relu()

        logit = conv2d(feat, p["disp.kernel"], p["disp.bias"])[0]
        disparity = logit.sigmoid() * (cfg.disp_max - cfg.disp_min) + cfg.disp_min

        # pose reads mean + first-moment pooled features of all three context
        # blocks: the moments expose feature centroid shifts, i.e. image motion
        pools = []
        for ctx in ctx_outputs:
            gx, gy = self._grids(ctx.shape)
            pools.extend([global_avg_pool(ctx),
                          global_avg_pool(ctx * gx),
                          global_avg_pool(ctx * gy)])
        pooled = concat(pools, axis=0)
        hidden = linear(pooled, p["pose.fc1.weight"], p["pose.fc1.bias"]).relu()
        raw = linear(hidden, p["pose.fc2.weight"], p["pose.fc2.bias"])
        pose = concat([raw[0:3] * ROTATION_SCALE, raw[3:6]], axis=0)

        if not np.all(np.isfinite(disparity.data)) or not np.all(np.isfinite(pose.data)):
            raise NumericError("non-finite network output")

        next_state = RecurrentState(next_blocks) if recurrent else None
        return FrameOutput(disparity=disparity, pose=pose), next_state

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())


def _head_channels(cfg: ModelConfig) -> int:
    return max(cfg.base_channels // 2, 4)


def _pose_input(cfg: ModelConfig) -> int:
    d = cfg.encoder_depth
    # mean + x/y first moments per context block
    return 3 * (cfg.channels(d - 1) + cfg.channels(d - 2) + cfg.channels(d - 3))


def _pose_hidden(cfg: ModelConfig) -> int:
    return max(32, _pose_input(cfg) // 4)


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Model:
    """Construct the recurrent model with seeded fan-in-scaled uniform init."""
    return _build(DENSE_SLAM, config, seed, dtype)


def build_baseline(kind: str, config: ModelConfig, seed: int = 0, dtype=np.float32) -> Model:
    if kind not in (CNN_SINGLE, CNN_STACK):
        raise ConfigError(f"unknown baseline kind: {kind!r}")
    return _build(kind, config, seed, dtype)


def _build(kind: str, config: ModelConfig, seed: int, dtype) -> Model:
    cfg = replace(config)
    cfg.validate()
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}

    def add(name, shape, fan_in, zero=False):
        if zero:
            data = np.zeros(shape, dtype=dtype)
        else:
            limit = np.sqrt(6.0 / fan_in)
            data = rng.uniform(-limit, limit, size=shape).astype(dtype)
        params[name] = Tensor(data, requires_grad=True, name=name)

    def add_conv(name, c_in, c_out, k=3):
        add(f"{name}.kernel", (c_out, c_in, k, k), c_in * k * k)
        add(f"{name}.bias", (c_out,), 1, zero=True)

    def add_deconv(name, c_in, c_out, k=3):
        # adjoint of a stride-2 conv: each output sees ~1/4 of the taps
        add(f"{name}.kernel", (c_in, c_out, k, k), max(c_in * k * k // 4, 1))
        add(f"{name}.bias", (c_out,), 1, zero=True)

    d = cfg.encoder_depth
    in_ch = 3 * cfg.window if kind == CNN_STACK else 3
    kernels = [7, 5] + [3] * (d - 2)
    prev = in_ch
    for i in range(d):
        add_conv(f"enc{i}", prev, cfg.channels(i), kernels[i])
        prev = cfg.channels(i)

    ctx_channels = [cfg.channels(d - 1), cfg.channels(d - 2), cfg.channels(d - 3)]
    for idx, ch in enumerate(ctx_channels):
        if kind == DENSE_SLAM:
            add(f"lstm{idx}.wx", (4 * ch, ch, 3, 3), ch * 9)
            add(f"lstm{idx}.wh", (4 * ch, ch, 3, 3), ch * 9)
            bias = np.zeros(4 * ch, dtype=dtype)
            bias[ch:2 * ch] = 1.0  # open forget gates at init
            params[f"lstm{idx}.bias"] = Tensor(bias, requires_grad=True, name=f"lstm{idx}.bias")
        else:
            add_conv(f"ctx{idx}", ch, ch)

    for j in range(d - 1, 0, -1):
        add_deconv(f"up{j}", cfg.channels(j), cfg.channels(j - 1))
        add_conv(f"fuse{j}", 2 * cfg.channels(j - 1), cfg.channels(j - 1), 3)
    head = _head_channels(cfg)
    add_deconv("up0", cfg.channels(0), head)
    add_conv("refine", head, head, 3)
    add_conv("disp", head, 1, 3)
    # start predictions at the geometric-mean disparity instead of mid-range
    mid = np.sqrt(cfg.disp_min * cfg.disp_max)
    frac = (mid - cfg.disp_min) / (cfg.disp_max - cfg.disp_min)
    params["disp.bias"].data[:] = np.log(frac / (1.0 - frac))

    pose_in = _pose_input(cfg)
    hidden = _pose_hidden(cfg)
    add("pose.fc1.weight", (hidden, pose_in), pose_in)
    add("pose.fc1.bias", (hidden,), 1, zero=True)
    add("pose.fc2.weight", (6, hidden), hidden)
    add("pose.fc2.bias", (6,), 1, zero=True)

    return Model(kind=kind, config=cfg, params=params, dtype=dtype)


def forward_step(model: Model, frame: Tensor, state):
    return model.forward_step(frame, state)


def forward_sequence(model: Model, frames):
    return model.forward_sequence(frames)
