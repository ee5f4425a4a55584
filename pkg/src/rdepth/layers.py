"""Differentiable layer primitives: conv2d, deconv2d, conv-LSTM step, linear.

Convolutions use "same" spatial padding: stride-1 layers preserve extents,
stride-2 layers exactly halve them.  deconv2d is the exact adjoint of the
corresponding stride-2 conv2d, which both makes the transposed-convolution
duality hold to rounding error and guarantees the x2 upsampling contract.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ContractError, ShapeError
from .tensor import Tensor, concat


def _same_pads(size, k, stride):
    """(before, after, out_extent) for same-padding at the given stride."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    before = total // 2
    return before, total - before, out


def _patches(xp, kh, kw, stride, ho, wo):
    """Read-only (C, kh, kw, ho, wo) view of sliding windows over padded input."""
    s0, s1, s2 = xp.strides
    return as_strided(xp, shape=(xp.shape[0], kh, kw, ho, wo),
                      strides=(s0, s1, s2, s1 * stride, s2 * stride), writeable=False)


def _conv_fwd(x, k, stride, pads):
    (pt, pb), (pl, pr) = pads
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr)))
    kh, kw = k.shape[2], k.shape[3]
    ho = (xp.shape[1] - kh) // stride + 1
    wo = (xp.shape[2] - kw) // stride + 1
    p = _patches(xp, kh, kw, stride, ho, wo)
    return np.tensordot(k, p, axes=([1, 2, 3], [0, 1, 2]))


def _conv_scatter(g, k, stride, pads, in_shape):
    """Adjoint of _conv_fwd in its input: scatter g back through kernel k."""
    (pt, pb), (pl, pr) = pads
    c_in, h, w = in_shape
    kh, kw = k.shape[2], k.shape[3]
    ho, wo = g.shape[1], g.shape[2]
    buf = np.zeros((c_in, h + pt + pb, w + pl + pr), dtype=g.dtype)
    taps = np.tensordot(k, g, axes=([0], [0]))  # (C_in, kh, kw, ho, wo)
    for di in range(kh):
        for dj in range(kw):
            buf[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride] += taps[:, di, dj]
    return buf[:, pt:pt + h, pl:pl + w]


def _conv_grad_kernel(g, x, stride, pads, kshape):
    """Adjoint of _conv_fwd in its kernel."""
    (pt, pb), (pl, pr) = pads
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr)))
    kh, kw = kshape[2], kshape[3]
    p = _patches(xp, kh, kw, stride, g.shape[1], g.shape[2])
    return np.tensordot(g, p, axes=([1, 2], [3, 4]))


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Same-padded 2D convolution, (C_in,H,W) x (C_out,C_in,kh,kw) -> (C_out,H/s,W/s)."""
    if x.data.ndim != 3 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects rank-3 input and rank-4 kernel, "
                         f"got {x.shape} and {kernel.shape}")
    c_in, h, w = x.shape
    c_out, c_k, kh, kw = kernel.shape
    if c_k != c_in:
        raise ShapeError(f"kernel expects {c_k} input channels, input has {c_in}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ContractError(f"kernel extents must be odd, got {kh}x{kw}")
    if h % stride or w % stride:
        raise ShapeError(f"input {h}x{w} not divisible by stride {stride}")
    pads = (_same_pads(h, kh, stride)[:2], _same_pads(w, kw, stride)[:2])

    out_data = _conv_fwd(x.data, kernel.data, stride, pads)
    if bias is not None:
        out_data = out_data + bias.data[:, None, None]
    grads_needed = x.requires_grad or kernel.requires_grad or (
        bias is not None and bias.requires_grad)
    out = Tensor(out_data, requires_grad=grads_needed)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(_conv_scatter(g, kernel.data, stride, pads, x.shape))
        if kernel.requires_grad:
            kernel._accumulate(_conv_grad_kernel(g, x.data, stride, pads, kernel.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(1, 2)))

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out._record(parents, bwd)
    return out


def deconv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 2) -> Tensor:
    """Transposed convolution, the exact adjoint of stride-2 conv2d.

    kernel is laid out (C_in, C_out, kh, kw) where C_in matches the input of
    this layer; output spatial extents are exactly doubled.
    """
    if stride != 2:
        raise ContractError("deconv2d supports stride 2 only")
    if x.data.ndim != 3 or kernel.data.ndim != 4:
        raise ShapeError(f"deconv2d expects rank-3 input and rank-4 kernel, "
                         f"got {x.shape} and {kernel.shape}")
    c_in, h, w = x.shape
    k_in, c_out, kh, kw = kernel.shape
    if k_in != c_in:
        raise ShapeError(f"kernel expects {k_in} input channels, input has {c_in}")
    out_shape = (c_out, 2 * h, 2 * w)
    pads = (_same_pads(2 * h, kh, 2)[:2], _same_pads(2 * w, kw, 2)[:2])

    out_data = _conv_scatter(x.data, kernel.data, 2, pads, out_shape)
    if bias is not None:
        out_data = out_data + bias.data[:, None, None]
    grads_needed = x.requires_grad or kernel.requires_grad or (
        bias is not None and bias.requires_grad)
    out = Tensor(out_data, requires_grad=grads_needed)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(_conv_fwd(g, kernel.data, 2, pads))
        if kernel.requires_grad:
            kernel._accumulate(_conv_grad_kernel(x.data, g, 2, pads, kernel.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(1, 2)))

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out._record(parents, bwd)
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Fully connected map of a flat vector: (n,) x (m,n) -> (m,)."""
    if x.data.ndim != 1 or weight.data.ndim != 2:
        raise ShapeError(f"linear expects a vector and a matrix, got {x.shape}, {weight.shape}")
    if weight.shape[1] != x.shape[0]:
        raise ShapeError(f"weight expects {weight.shape[1]} inputs, got {x.shape[0]}")
    out_data = weight.data @ x.data
    if bias is not None:
        out_data = out_data + bias.data
    grads_needed = x.requires_grad or weight.requires_grad or (
        bias is not None and bias.requires_grad)
    out = Tensor(out_data, requires_grad=grads_needed)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(weight.data.T @ g)
        if weight.requires_grad:
            weight._accumulate(np.outer(g, x.data))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g)

    parents = (x, weight) if bias is None else (x, weight, bias)
    out._record(parents, bwd)
    return out


def conv_lstm_step(x: Tensor, h: Tensor, c: Tensor, params: dict) -> tuple[Tensor, Tensor]:
    """One convolutional LSTM step; gate maps in i, f, o, g order.

    params holds "wx" (4*C_h, C_x, k, k), "wh" (4*C_h, C_h, k, k) and
    "bias" (4*C_h,).  Returns (h', c').
    """
    if x.shape[1:] != h.shape[1:]:
        raise ShapeError(f"spatial mismatch between input {x.shape} and state {h.shape}")
    if h.shape != c.shape:
        raise ShapeError(f"hidden/cell shape mismatch: {h.shape} vs {c.shape}")
    ch = h.shape[0]
    gates = conv2d(x, params["wx"], params["bias"], stride=1) + \
        conv2d(h, params["wh"], stride=1)
    i = gates[0:ch].sigmoid()
    f = gates[ch:2 * ch].sigmoid()
    o = gates[2 * ch:3 * ch].sigmoid()
    g = gates[3 * ch:4 * ch].tanh()
    c_next = f * c + i * g
    h_next = o * c_next.tanh()
    return h_next, c_next


def global_avg_pool(x: Tensor) -> Tensor:
    """(C, H, W) -> (C,) spatial mean."""
    if x.data.ndim != 3:
        raise ShapeError(f"global_avg_pool expects rank 3, got {x.shape}")
    return x.mean(axis=(1, 2))


__all__ = ["conv2d", "deconv2d", "linear", "conv_lstm_step", "global_avg_pool", "concat"]
