"""Middlebury-style error metrics, disparity rescaling and report tables."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class EvalResult:
    avg_err: float
    bad1: float
    bad2: float
    evaluated: int
    runtime_s: float = 0.0


def avg_err(pred: np.ndarray, gt: np.ndarray, nocc_mask: np.ndarray | None = None,
            invalid_penalty: float | None = None, runtime_s: float = 0.0) -> EvalResult:
    """Mean absolute error over pixels with finite ground truth inside the mask.

    Invalid (non-finite) predictions inside the evaluated set are charged
    ``invalid_penalty``, defaulting to the largest finite ground-truth
    disparity.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    evaluated = np.isfinite(gt)
    if nocc_mask is not None:
        nocc_mask = np.asarray(nocc_mask, dtype=bool)
        if nocc_mask.shape != gt.shape:
            raise ValueError(f"mask {nocc_mask.shape} does not match ground truth {gt.shape}")
        evaluated &= nocc_mask
    count = int(evaluated.sum())
    if count == 0:
        raise ValueError("no pixels to evaluate")
    if invalid_penalty is None:
        invalid_penalty = float(gt[np.isfinite(gt)].max())
    err = np.abs(pred[evaluated] - gt[evaluated])
    err[~np.isfinite(pred[evaluated])] = invalid_penalty
    return EvalResult(
        avg_err=float(err.mean()),
        bad1=float((err > 1.0).mean()),
        bad2=float((err > 2.0).mean()),
        evaluated=count,
        runtime_s=runtime_s,
    )


def upsample_disparity(pred: np.ndarray, scale: int, shape: tuple | None = None) -> np.ndarray:
    """Nearest-neighbour upsampling; finite values are multiplied by ``scale``.

    ``shape`` crops the result to a full-resolution size that was not an exact
    multiple of ``scale``.
    """
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    pred = np.asarray(pred, dtype=np.float32)
    up = np.repeat(np.repeat(pred, scale, axis=0), scale, axis=1) * np.float32(scale)
    if shape is not None:
        if shape[0] > up.shape[0] or shape[1] > up.shape[1]:
            raise ValueError(f"target shape {shape} larger than upsampled {up.shape}")
        up = up[:shape[0], :shape[1]]
    return up


def downsample_disparity(disp: np.ndarray, scale: int) -> np.ndarray:
    """Sample every ``scale``-th pixel and divide by ``scale``."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    return (np.asarray(disp, dtype=np.float32)[::scale, ::scale] / np.float32(scale))


def report(results, metric: str = "nocc") -> str:
    """Text table with one row per dataset and a trailing ``Avg`` row.

    ``results`` is a sequence of ``(name, EvalResult)`` pairs, or of
    ``(name, {column: EvalResult})`` for several post-processing modes.
    """
    results = list(results)
    if not results:
        raise ValueError("report needs at least one result")
    if isinstance(results[0][1], EvalResult):
        columns = ["avgErr"]
        rows = [(name, {"avgErr": res}) for name, res in results]
    else:
        columns = list(results[0][1])
        rows = results
    name_w = max(4, max(len(name) for name, _ in rows))
    col_w = max(9, max(len(c) for c in columns))
    header = f"{'Data':<{name_w}}  " + "  ".join(f"{c:>{col_w}}" for c in columns)
    lines = [f"avgErr ({metric})", header, "-" * len(header)]
    for name, res in rows:
        lines.append(f"{name:<{name_w}}  " + "  ".join(
            f"{res[c].avg_err:>{col_w}.3f}" for c in columns))
    lines.append("-" * len(header))
    means = {c: float(np.mean([res[c].avg_err for _, res in rows])) for c in columns}
    lines.append(f"{'Avg':<{name_w}}  " + "  ".join(f"{means[c]:>{col_w}.3f}" for c in columns))
    return "\n".join(lines) + "\n"


def write_csv(path, results) -> None:
    """One line per (dataset, column) with every EvalResult field."""
    results = list(results)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        fields = list(EvalResult.__dataclass_fields__)
        writer.writerow(["dataset", "mode"] + fields)
        for name, res in results:
            items = [("avgErr", res)] if isinstance(res, EvalResult) else res.items()
            for mode, r in items:
                row = asdict(r)
                writer.writerow([name, mode] + [row[f] for f in fields])
