"""End-point error and 3D accuracy metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import ContractError

STRICT = (0.05, 0.05)
RELAXED = (0.1, 0.1)


def _select(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        pred, gt = pred[mask], gt[mask]
    if len(pred) == 0:
        raise ContractError("no points selected for evaluation")
    return pred, gt


def epe3d(pred, gt, mask=None) -> float:
    pred, gt = _select(pred, gt, mask)
    return float(np.linalg.norm(pred - gt, axis=1).mean())


def acc3d(pred, gt, abs_thresh: float, rel_thresh: float, mask=None) -> float:
    """Percentage of points with error < abs_thresh or error / |gt| < rel_thresh.

    The relative test is skipped for points whose ground-truth flow is zero.
    """
    if abs_thresh <= 0 or rel_thresh <= 0:
        raise ValueError("thresholds must be positive")
    pred, gt = _select(pred, gt, mask)
    err = np.linalg.norm(pred - gt, axis=1)
    norm = np.linalg.norm(gt, axis=1)
    rel_ok = np.zeros(len(err), dtype=bool)
    nz = norm > 0
    rel_ok[nz] = err[nz] / norm[nz] < rel_thresh
    ok = (err < abs_thresh) | rel_ok
    return float(100.0 * ok.mean())


def acc3ds(pred, gt, mask=None) -> float:
    return acc3d(pred, gt, *STRICT, mask=mask)


def acc3dr(pred, gt, mask=None) -> float:
    return acc3d(pred, gt, *RELAXED, mask=mask)


@dataclass
class MetricsReport:
    epe3d: float
    acc3ds: float
    acc3dr: float
    epe3d_noc: float | None = None
    acc3ds_noc: float | None = None
    acc3dr_noc: float | None = None
    runtime_ms: float = 0.0
    peak_bytes: int = 0
    scenes: int = 1

    def as_dict(self) -> dict:
        return asdict(self)


def scene_metrics(pred, gt, occluded=None) -> MetricsReport:
    report = MetricsReport(epe3d(pred, gt), acc3ds(pred, gt), acc3dr(pred, gt))
    if occluded is not None:
        visible = ~np.asarray(occluded, dtype=bool)
        if visible.any():
            report.epe3d_noc = epe3d(pred, gt, visible)
            report.acc3ds_noc = acc3ds(pred, gt, visible)
            report.acc3dr_noc = acc3dr(pred, gt, visible)
    return report


def mean_report(reports: list[MetricsReport]) -> MetricsReport:
    """Average per-scene reports; noc fields average over the scenes that have them."""
    if not reports:
        raise ContractError("no reports to average")

    def avg(name):
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        return float(np.mean(vals)) if vals else None

    return MetricsReport(
        epe3d=avg("epe3d"),
        acc3ds=avg("acc3ds"),
        acc3dr=avg("acc3dr"),
        epe3d_noc=avg("epe3d_noc"),
        acc3ds_noc=avg("acc3ds_noc"),
        acc3dr_noc=avg("acc3dr_noc"),
        runtime_ms=avg("runtime_ms"),
        peak_bytes=max(r.peak_bytes for r in reports),
        scenes=len(reports),
    )
