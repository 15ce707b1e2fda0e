import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.errors import ValidationFailure


@dataclass
class ComparisonReport:
    """
    Agreement between approximate and full landscapes over a batch of pairs.

    Attributes:
        H (int): Rank used (H_C for volumes).
        rel_frobenius (float): ||approx - full||_F / ||full||_F over the whole batch.
        correlation (float): Pearson correlation over the whole batch.
        backward_fraction_mean (float): Mean of the per-pair backward-error fractions.
        backward_fractions (List[float]): Per-pair f.
        timing (Dict[str, float]): Wall-clock seconds per phase.
        H_D (int, optional): Degree rank for volume runs.
        centered (bool): Whether both arrays were mean-subtracted per pair first.
    """
    H: int
    rel_frobenius: float
    correlation: float
    backward_fraction_mean: float
    backward_fractions: List[float] = field(default_factory=list)
    timing: Dict[str, float] = field(default_factory=dict)
    H_D: Optional[int] = None
    centered: bool = False


def _check_shapes(approx: np.ndarray, full: np.ndarray) -> None:
    if approx.shape != full.shape:
        raise ValidationFailure(f"Landscape shapes differ: {approx.shape} vs {full.shape}")


def rel_frobenius(approx: np.ndarray, full: np.ndarray) -> float:
    approx, full = np.asarray(approx, dtype=float), np.asarray(full, dtype=float)
    _check_shapes(approx, full)
    norm = np.linalg.norm(full.ravel())
    if norm == 0.0:
        raise ValidationFailure("Relative error is undefined for an all-zero reference landscape")
    return float(np.linalg.norm((approx - full).ravel()) / norm)


def correlation(approx: np.ndarray, full: np.ndarray) -> float:
    """
    Pearson correlation over all entries.

    Raises:
        ValidationFailure: If either array is constant.
    """
    approx, full = np.asarray(approx, dtype=float).ravel(), np.asarray(full, dtype=float).ravel()
    _check_shapes(approx, full)
    da, df = approx - approx.mean(), full - full.mean()
    na, nf = np.linalg.norm(da), np.linalg.norm(df)
    if na == 0.0 or nf == 0.0:
        raise ValidationFailure("Correlation is undefined for a constant landscape")
    return float(np.clip(np.dot(da, df) / (na * nf), -1.0, 1.0))


def backward_fraction(approx: np.ndarray, full: np.ndarray) -> float:
    """
    Percentile of the true inner product at the approximate optimum:
    #{tau : X_full(tau) <= X_full(argmax X_approx)} / #grid. Ties in the argmax go
    to the smallest flat index.
    """
    approx, full = np.asarray(approx, dtype=float).ravel(), np.asarray(full, dtype=float).ravel()
    _check_shapes(approx, full)
    best = full[int(np.argmax(approx))]
    return float(np.count_nonzero(full <= best) / full.size)


def center_pairs(landscapes: np.ndarray, pair_axes: int) -> np.ndarray:
    """Subtract each pair's own mean; the first pair_axes axes index pairs."""
    axes = tuple(range(pair_axes, landscapes.ndim))
    return landscapes - landscapes.mean(axis=axes, keepdims=True)


def compare_landscapes(
        approx: np.ndarray,
        full: np.ndarray,
        H: int,
        pair_axes: int = 2,
        timing: Optional[Dict[str, float]] = None,
        center: bool = False,
        H_D: Optional[int] = None,
) -> ComparisonReport:
    """
    Report for a batch of landscapes whose first pair_axes axes index pairs, for example
    (N_A, N_B, Q_out) for images or (N_A, n_beta, M, M) with pair_axes=1 for volumes.
    With center, every landscape is mean-subtracted before the Frobenius and correlation
    metrics; the backward fraction is unaffected by constant offsets.
    """
    approx, full = np.asarray(approx, dtype=float), np.asarray(full, dtype=float)
    _check_shapes(approx, full)
    if center:
        a_metric, f_metric = center_pairs(approx, pair_axes), center_pairs(full, pair_axes)
    else:
        a_metric, f_metric = approx, full
    n_pairs = int(np.prod(approx.shape[:pair_axes]))
    flat_a = approx.reshape(n_pairs, -1)
    flat_f = full.reshape(n_pairs, -1)
    fractions = [backward_fraction(flat_a[i], flat_f[i]) for i in range(n_pairs)]
    return ComparisonReport(
        H=int(H),
        H_D=None if H_D is None else int(H_D),
        rel_frobenius=rel_frobenius(a_metric, f_metric),
        correlation=correlation(a_metric, f_metric),
        backward_fraction_mean=float(np.mean(fractions)),
        backward_fractions=fractions,
        timing=dict(timing or {}),
        centered=center,
    )


def report_to_json(report: ComparisonReport, path: Path) -> None:
    with open(path, "w") as f:
        json.dump(asdict(report), f, indent=4)


CURVE_FIELDS = ["H", "H_D", "rel_frobenius", "correlation", "backward_fraction_mean", "speedup"]


def curve_to_csv(reports: Sequence[ComparisonReport], path: Path, speedups: Optional[Sequence[float]] = None) -> None:
    """One row per rank: (H, H_D, rel_frobenius, correlation, mean f, speedup)."""
    speedups = list(speedups) if speedups is not None else [float("nan")] * len(reports)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_FIELDS)
        for report, speedup in zip(reports, speedups):
            writer.writerow([
                report.H, "" if report.H_D is None else report.H_D,
                repr(report.rel_frobenius), repr(report.correlation),
                repr(report.backward_fraction_mean), repr(float(speedup)),
            ])
