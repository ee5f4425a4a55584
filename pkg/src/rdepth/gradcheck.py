"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .tensor import Tensor


def finite_diff_check(f, point: np.ndarray, h: float = 1e-5, sample: int | None = None,
                      rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` maps a Tensor built from `point` to a scalar Tensor.  The error at a
    coordinate is |analytic - numeric| / max(1, |analytic|).  With `sample`
    set, only that many randomly chosen coordinates are probed.  Runs in
    float64; the point is promoted if needed.
    """
    # private copy: probing must never perturb arrays the objective captured
    base = np.array(point, dtype=np.float64)
    x = Tensor(base.copy(), requires_grad=True, dtype=np.float64)
    loss = f(x)
    if not np.isfinite(loss.data).all():
        raise NumericError("non-finite objective at the check point")
    loss.backward()
    analytic = x.grad.reshape(-1).copy()

    flat = base.reshape(-1)
    n = flat.size
    if sample is not None and sample < n:
        rng = rng or np.random.default_rng(0)
        coords = rng.choice(n, size=sample, replace=False)
    else:
        coords = np.arange(n)

    worst = 0.0
    for idx in coords:
        saved = flat[idx]
        flat[idx] = saved + h
        up = float(f(Tensor(base.copy(), dtype=np.float64)).data)
        flat[idx] = saved - h
        down = float(f(Tensor(base.copy(), dtype=np.float64)).data)
        flat[idx] = saved
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"non-finite objective while probing coordinate {idx}")
        numeric = (up - down) / (2.0 * h)
        err = abs(analytic[idx] - numeric) / max(1.0, abs(analytic[idx]))
        worst = max(worst, err)
    return worst


def finite_diff_param_check(loss_fn, params: dict, n_samples: int = 20,
                            h: float = 1e-5, seed: int = 0):
    """Probe random (parameter, coordinate) pairs of a composed model loss.

    `loss_fn()` evaluates the objective at the params' current values.
    Returns (max relative error, name of the worst parameter).
    """
    loss = loss_fn()
    loss.backward()
    grads = {}
    for name, p in params.items():
        if p.grad is None:
            raise NumericError(f"no gradient reached parameter {name}")
        grads[name] = p.grad.reshape(-1).copy()
        p.zero_grad()

    rng = np.random.default_rng(seed)
    names = sorted(params)
    sizes = np.array([params[n].data.size for n in names])
    flat_total = int(sizes.sum())
    picks = rng.choice(flat_total, size=min(n_samples, flat_total), replace=False)
    bounds = np.cumsum(sizes)

    worst = 0.0
    worst_name = None
    for pick in picks:
        which = int(np.searchsorted(bounds, pick, side="right"))
        name = names[which]
        idx = int(pick - (bounds[which - 1] if which else 0))
        flat = params[name].data.reshape(-1)
        saved = flat[idx]
        flat[idx] = saved + h
        up = float(loss_fn().data)
        flat[idx] = saved - h
        down = float(loss_fn().data)
        flat[idx] = saved
        numeric = (up - down) / (2.0 * h)
        err = abs(grads[name][idx] - numeric) / max(1.0, abs(grads[name][idx]))
        if err > worst:
            worst = err
            worst_name = name
    return worst, worst_name
