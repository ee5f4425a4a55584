"""Depth evaluation metrics and the depth-range-bucketed breakdown.

All metrics run in float64 on plain arrays.  `gt` denotes ground truth and
appears in the denominators of the relative errors.  Log-based metrics use
log10; much of the literature uses natural log, so convert before comparing
numbers across codebases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericError

REPORT_KEYS = ("sc_inv", "abs_rel", "abs_inv", "rmse", "rmse_log")


def _masked_pair(z, gt, mask):
    z = np.asarray(z, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if z.shape != gt.shape:
        raise ContractError(f"depth map shapes differ: {z.shape} vs {gt.shape}")
    if mask is None:
        mask = np.ones(z.shape, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractError("empty evaluation mask")
    zm, gm = z[mask], gt[mask]
    if np.any(zm <= 0) or np.any(gm <= 0) or not (np.all(np.isfinite(zm))
                                                  and np.all(np.isfinite(gm))):
        raise NumericError("depths under the mask must be positive and finite")
    return zm, gm


def sc_inv(z, gt, mask=None) -> float:
    """Scale-invariant log-depth error: std of per-pixel log10 residuals."""
    zm, gm = _masked_pair(z, gt, mask)
    d = np.log10(zm) - np.log10(gm)
    n = d.size
    return float(np.sqrt(max(np.sum(d * d) / n - (np.sum(d) / n) ** 2, 0.0)))


def abs_rel(z, gt, mask=None) -> float:
    """Mean |z - gt| / gt."""
    zm, gm = _masked_pair(z, gt, mask)
    return float(np.mean(np.abs(zm - gm) / gm))


def abs_inv(z, gt, mask=None) -> float:
    """Mean |1/z - 1/gt|."""
    zm, gm = _masked_pair(z, gt, mask)
    return float(np.mean(np.abs(1.0 / zm - 1.0 / gm)))


def rmse(z, gt, mask=None) -> float:
    zm, gm = _masked_pair(z, gt, mask)
    return float(np.sqrt(np.mean((zm - gm) ** 2)))


def rmse_log(z, gt, mask=None) -> float:
    """Root mean square of the log10 residuals."""
    zm, gm = _masked_pair(z, gt, mask)
    d = np.log10(zm) - np.log10(gm)
    return float(np.sqrt(np.mean(d * d)))


def evaluate_depth_cap(z, gt, cap):
    """Drop pixels whose ground truth exceeds `cap`, clamp the rest to it."""
    if not cap > 0:
        raise ContractError("depth cap must be positive")
    z = np.asarray(z, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = gt <= cap
    return np.minimum(z, cap), np.minimum(gt, cap), mask


def range_bucketed_sc_inv(z, gt, bucket_edges, mask=None):
    """Per-depth-range sc_inv, pixels assigned by ground truth to [e_k, e_k+1).

    Returns a list of (low, high, error, n_pixels); empty buckets are absent.
    """
    edges = [float(e) for e in bucket_edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ContractError("bucket edges must be strictly increasing, length >= 2")
    zm, gm = _masked_pair(z, gt, mask)
    table = []
    for low, high in zip(edges, edges[1:]):
        sel = (gm >= low) & (gm < high)
        if not sel.any():
            continue
        table.append((low, high, sc_inv(zm[sel], gm[sel]), int(sel.sum())))
    return table


@dataclass
class MetricReport:
    sc_inv: float
    abs_rel: float
    abs_inv: float
    rmse: float
    rmse_log: float
    n_pixels: int
    ranges: list = field(default_factory=list)

    def validate(self) -> "MetricReport":
        values = [self.sc_inv, self.abs_rel, self.abs_inv, self.rmse, self.rmse_log]
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise NumericError("metric report entries must be finite and nonnegative")
        if self.n_pixels <= 0:
            raise ContractError("metric report needs at least one pixel")
        return self

    def record(self) -> str:
        """Flat key=value text record, one key per line."""
        lines = [f"{k}={getattr(self, k):.12g}" for k in REPORT_KEYS]
        lines.append(f"n_pixels={self.n_pixels}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "MetricReport":
        fields = {}
        for line in text.strip().splitlines():
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        return cls(
            sc_inv=float(fields["sc_inv"]), abs_rel=float(fields["abs_rel"]),
            abs_inv=float(fields["abs_inv"]), rmse=float(fields["rmse"]),
            rmse_log=float(fields["rmse_log"]), n_pixels=int(fields["n_pixels"]))


def compute_report(z, gt, mask=None) -> MetricReport:
    zm, gm = _masked_pair(z, gt, mask)
    return MetricReport(
        sc_inv=sc_inv(zm, gm), abs_rel=abs_rel(zm, gm), abs_inv=abs_inv(zm, gm),
        rmse=rmse(zm, gm), rmse_log=rmse_log(zm, gm), n_pixels=int(zm.size),
    ).validate()
