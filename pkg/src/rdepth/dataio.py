"""Dataset serialization: PFM depth maps, PNG frames, CSV poses.

Layout: dataset_root/seq_XXXX/{frame_0000.png ..., depth_0000.pfm ...,
poses.csv, intrinsics.txt}.  Depths round-trip bit-exactly (32-bit float
PFM, little-endian, scale header -1.0); poses round-trip exactly via
17-significant-digit decimal; images are 8-bit PNG.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ContractError, ParseError
from .geometry import PoseVector
from .synth import Intrinsics, generate_scene, render_frame, sample_trajectory

POSE_HEADER = "frame,rx,ry,rz,tx,ty,tz"


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------

def write_pfm(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ContractError("PFM writer expects a 2-D map")
    height, width = data.shape
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(f"{width} {height}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        # bottom-up row order, little-endian
        fh.write(data[::-1].astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        def line():
            raw = fh.readline()
            if not raw:
                raise ParseError("unexpected end of PFM header", path, fh.tell())
            return raw.strip()

        magic = line()
        if magic != b"Pf":
            raise ParseError(f"bad PFM magic {magic!r} (grayscale 'Pf' expected)", path, 0)
        dims = line().split()
        if len(dims) != 2:
            raise ParseError("malformed PFM dimensions line", path, fh.tell())
        try:
            width, height = int(dims[0]), int(dims[1])
        except ValueError:
            raise ParseError("non-integer PFM dimensions", path, fh.tell()) from None
        try:
            scale = float(line())
        except ValueError:
            raise ParseError("malformed PFM scale line", path, fh.tell()) from None
        endian = "<" if scale < 0 else ">"
        offset = fh.tell()
        payload = fh.read(width * height * 4)
        if len(payload) != width * height * 4:
            raise ParseError(f"truncated PFM payload ({len(payload)} of "
                             f"{width * height * 4} bytes)", path, offset + len(payload))
        data = np.frombuffer(payload, dtype=f"{endian}f4").reshape(height, width)
        return data[::-1].astype(np.float32)


# ---------------------------------------------------------------------------
# PNG / poses / intrinsics
# ---------------------------------------------------------------------------

def write_png(path, rgb: np.ndarray) -> None:
    quantized = np.clip(np.round(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path)


def read_png(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ParseError(f"unreadable PNG: {exc}", path, 0) from exc


def write_poses(path, poses) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(POSE_HEADER + "\n")
        for k, pose in enumerate(poses):
            vals = ",".join(f"{v:.17g}" for v in pose.as_array())
            fh.write(f"{k},{vals}\n")


def read_poses(path):
    if not os.path.exists(path):
        raise ParseError("missing poses file", path, 0)
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if header.strip() != POSE_HEADER:
            raise ParseError(f"bad pose header {header.strip()!r}", path, 0)
        poses = []
        offset = len(header)
        for k, row in enumerate(fh):
            cells = row.strip().split(",")
            if len(cells) != 7:
                raise ParseError(f"pose row {k} has {len(cells)} fields", path, offset)
            try:
                idx = int(cells[0])
                vals = [float(c) for c in cells[1:]]
            except ValueError:
                raise ParseError(f"non-numeric pose row {k}", path, offset) from None
            if idx != k:
                raise ParseError(f"pose rows out of order at {k}", path, offset)
            poses.append(PoseVector.from_array(np.array(vals)))
            offset += len(row)
        return poses


def write_intrinsics(path, intr: Intrinsics) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(" ".join(f"{v:.17g}" for v in intr.as_array()) + "\n")


def read_intrinsics(path) -> Intrinsics:
    if not os.path.exists(path):
        raise ParseError("missing intrinsics file", path, 0)
    with open(path, "r", encoding="ascii") as fh:
        cells = fh.read().split()
    if len(cells) != 4:
        raise ParseError(f"intrinsics need 4 values, found {len(cells)}", path, 0)
    try:
        fx, fy, cx, cy = (float(c) for c in cells)
    except ValueError:
        raise ParseError("non-numeric intrinsics", path, 0) from None
    return Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy)


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------

@dataclass
class SequenceSample:
    """N rendered frames with ground truth; pose 0 is always the identity."""

    frames: list       # (H, W, 3) float32 in [0, 1]
    depths: list       # (H, W) float32, strictly positive
    poses: list        # PoseVector per frame, relative to frame 0
    intrinsics: Intrinsics
    scene_seed: int = -1

    def __len__(self):
        return len(self.frames)

    def validate(self) -> "SequenceSample":
        n = len(self.frames)
        if not (len(self.depths) == len(self.poses) == n):
            raise ContractError("frames/depths/poses lengths differ")
        if n == 0:
            raise ContractError("empty sequence")
        for d in self.depths:
            if np.any(d <= 0) or not np.all(np.isfinite(d)):
                raise ContractError("depths must be strictly positive and finite")
        first = self.poses[0].as_array()
        if np.max(np.abs(first)) > 1e-12:
            raise ContractError("pose of frame 0 must be the identity")
        return self


def make_sequence(scene, trajectory, intr: Intrinsics, height: int,
                  width: int) -> SequenceSample:
    frames, depths = [], []
    for pose in trajectory:
        rgb, depth = render_frame(scene, pose, intr, height, width)
        frames.append(rgb)
        depths.append(depth)
    return SequenceSample(frames=frames, depths=depths, poses=list(trajectory),
                          intrinsics=intr, scene_seed=scene.seed).validate()


def scene_seed_for(base_seed: int, index: int) -> int:
    return int(base_seed) * 100000 + index


def generate_dataset(seed: int, scenes: int, frames: int, height: int, width: int,
                     difficulty: str = "easy", motion_scale: float = 1.0,
                     intrinsics: Intrinsics | None = None):
    """One rendered sequence per scene, deterministic in `seed`."""
    intr = intrinsics or Intrinsics.default_for(height, width)
    samples = []
    for i in range(scenes):
        sseed = scene_seed_for(seed, i)
        scene = generate_scene(sseed, difficulty)
        trajectory = sample_trajectory(sseed + 1, frames, motion_scale)
        samples.append(make_sequence(scene, trajectory, intr, height, width))
    return samples


# ---------------------------------------------------------------------------
# directory round trip
# ---------------------------------------------------------------------------

def write_dataset(samples, root) -> None:
    os.makedirs(root, exist_ok=True)
    for idx, sample in enumerate(samples):
        seq_dir = os.path.join(root, f"seq_{idx:04d}")
        os.makedirs(seq_dir, exist_ok=True)
        for k, (rgb, depth) in enumerate(zip(sample.frames, sample.depths)):
            write_png(os.path.join(seq_dir, f"frame_{k:04d}.png"), rgb)
            write_pfm(os.path.join(seq_dir, f"depth_{k:04d}.pfm"), depth)
        write_poses(os.path.join(seq_dir, "poses.csv"), sample.poses)
        write_intrinsics(os.path.join(seq_dir, "intrinsics.txt"), sample.intrinsics)


def read_dataset(root):
    if not os.path.isdir(root):
        raise ParseError("dataset directory not found", root, 0)
    seq_dirs = sorted(d for d in os.listdir(root)
                      if re.fullmatch(r"seq_\d{4}", d)
                      and os.path.isdir(os.path.join(root, d)))
    samples = []
    for name in seq_dirs:
        seq_dir = os.path.join(root, name)
        frame_files = sorted(f for f in os.listdir(seq_dir)
                             if re.fullmatch(r"frame_\d{4}\.png", f))
        frames, depths = [], []
        for f in frame_files:
            frames.append(read_png(os.path.join(seq_dir, f)))
            depth_name = f.replace("frame_", "depth_").replace(".png", ".pfm")
            depth_path = os.path.join(seq_dir, depth_name)
            if not os.path.exists(depth_path):
                raise ParseError("missing depth map for frame", depth_path, 0)
            depths.append(read_pfm(depth_path))
        poses = read_poses(os.path.join(seq_dir, "poses.csv"))
        intr = read_intrinsics(os.path.join(seq_dir, "intrinsics.txt"))
        if len(poses) != len(frames):
            raise ParseError(f"{len(poses)} poses for {len(frames)} frames",
                             os.path.join(seq_dir, "poses.csv"), 0)
        samples.append(SequenceSample(frames=frames, depths=depths, poses=poses,
                                      intrinsics=intr).validate())
    return samples
