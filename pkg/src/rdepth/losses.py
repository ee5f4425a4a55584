"""Training losses: point-wise disparity, scale-normalized gradient, pose.

All losses are sums (not means) over pixels and frames, so their magnitude
scales with resolution and window length.  Inputs are Tensors so every term
is differentiable; ground truth may be plain arrays.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError, ShapeError
from .tensor import Tensor, as_tensor

GRADIENT_STEPS = (1, 2, 4, 8, 16)


@dataclass
class LossWeights:
    w_depth: float = 500.0
    w_grad: float = 1000.0
    w_rot: float = 500.0
    w_trans: float = 100.0

    def validate(self) -> "LossWeights":
        if min(self.w_depth, self.w_grad, self.w_rot, self.w_trans) <= 0:
            raise ContractError("loss weights must be strictly positive")
        return self


def _pair(pred, gt):
    p = as_tensor(pred)
    g = as_tensor(gt, dtype=p.dtype)
    if p.shape != g.shape:
        raise ShapeError(f"prediction {p.shape} vs ground truth {g.shape}")
    return p, g


def depth_loss(pred, gt, masks=None):
    """Sum over frames and pixels of |disparity - ground truth| (L1)."""
    if len(pred) != len(gt):
        raise ShapeError(f"{len(pred)} predictions vs {len(gt)} ground-truth maps")
    if not len(pred):
        raise ContractError("depth_loss needs at least one frame")
    total = None
    for t, (p_raw, g_raw) in enumerate(zip(pred, gt)):
        p, g = _pair(p_raw, g_raw)
        diff = (p - g).abs()
        if masks is not None:
            diff = diff * as_tensor(masks[t], dtype=p.dtype)
        term = diff.sum()
        total = term if total is None else total + term
    return total


def normalized_gradient(xi, h: int):
    """Scale-normalized forward differences of a disparity map at step h.

    Returns (vertical, horizontal): shapes (H-h, W) and (H, W-h), covering
    exactly the in-range positions (no wraparound or reflection).
    """
    xi = as_tensor(xi)
    height, width = xi.shape
    if not (0 < h < min(height, width)):
        raise ContractError(f"step {h} out of range for a {height}x{width} map")
    a, b = xi[h:, :], xi[:-h, :]
    vertical = (a - b) / (a.abs() + b.abs())
    a, b = xi[:, h:], xi[:, :-h]
    horizontal = (a - b) / (a.abs() + b.abs())
    return vertical, horizontal


def grad_loss(pred, gt, steps=GRADIENT_STEPS):
    """Sum over frames, steps and positions of the L2 distance between
    predicted and ground-truth normalized gradients.

    At a position where only one difference direction is in range, the norm
    reduces to that component's absolute difference.
    """
    if len(pred) != len(gt):
        raise ShapeError(f"{len(pred)} predictions vs {len(gt)} ground-truth maps")
    if not len(pred):
        raise ContractError("grad_loss needs at least one frame")
    total = None
    for p_raw, g_raw in zip(pred, gt):
        p, g = _pair(p_raw, g_raw)
        height, width = p.shape
        usable = [h for h in steps if h < min(height, width)]
        if not usable:
            raise ContractError(f"no usable gradient step for {height}x{width} maps")
        if len(usable) < len(steps):
            warnings.warn(f"dropping gradient steps {sorted(set(steps) - set(usable))} "
                          f"for {height}x{width} maps", stacklevel=2)
        for h in usable:
            pv, ph = normalized_gradient(p, h)
            gv, gh = normalized_gradient(g, h)
            dv = pv - gv
            dh = ph - gh
            both = (dv[:, :width - h].square() + dh[:height - h, :].square()).sqrt().sum()
            v_only = dv[:, width - h:].abs().sum()
            h_only = dh[height - h:, :].abs().sum()
            term = both + v_only + h_only
            total = term if total is None else total + term
    return total


def _vec_norm(v):
    return v.square().sum().sqrt()


def pose_loss(pred, gt):
    """(L_rot, L_trans): summed L2 errors of Euler angles and translations."""
    if len(pred) != len(gt):
        raise ShapeError(f"{len(pred)} predicted poses vs {len(gt)} ground truth")
    if not len(pred):
        raise ContractError("pose_loss needs at least one frame")
    l_rot = None
    l_trans = None
    for p_raw, g_raw in zip(pred, gt):
        p = as_tensor(p_raw)
        g = as_tensor(g_raw, dtype=p.dtype)
        if p.shape != (6,) or g.shape != (6,):
            raise ShapeError("poses must be 6-vectors")
        rot = _vec_norm(p[0:3] - g[0:3])
        trans = _vec_norm(p[3:6] - g[3:6])
        l_rot = rot if l_rot is None else l_rot + rot
        l_trans = trans if l_trans is None else l_trans + trans
    return l_rot, l_trans


def total_loss(l_depth, l_grad, l_rot, l_trans, weights: LossWeights | None = None):
    """Weighted sum of the four components; rejects non-finite inputs."""
    weights = (weights or LossWeights()).validate()
    parts = {"depth": l_depth, "grad": l_grad, "rot": l_rot, "trans": l_trans}
    for name, part in parts.items():
        value = part.data if isinstance(part, Tensor) else np.asarray(part)
        if not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite loss component: {name}")
    return (as_tensor(l_depth) * weights.w_depth + as_tensor(l_grad) * weights.w_grad
            + as_tensor(l_rot) * weights.w_rot + as_tensor(l_trans) * weights.w_trans)
