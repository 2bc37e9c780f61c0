"""Accuracy curves, error histograms and trained-operator tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import Architecture, ModelParams
from .states import Dataset
from .training import ErrorRecord, TrainConfig, evaluate, operator_count, adam_config, train

AXES = ("p", "lambda_min", "theta_p")
OPERATOR_COLUMNS = ["X1", "Y1", "Z1", "I1", "X2", "Y2", "Z2", "I2"]


@dataclass
class CurvePoint:
    m: int
    operators: int
    accuracies: list[float]
    seeds: list[int]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))


@dataclass
class AccuracyCurve:
    family: str
    arch: str
    points: list[CurvePoint] = field(default_factory=list)


def accuracy_curve(
    train_set: Dataset,
    test_set: Dataset,
    arch_template: Architecture,
    m_values: Sequence[int],
    cfg: TrainConfig | Callable[[Architecture], TrainConfig] | None = None,
    repeats: int = 5,
    base_seed: int = 0,
) -> AccuracyCurve:
    """Train ``repeats`` fresh models for every path count in ``m_values``.

    ``cfg`` may be a fixed config, a function of the architecture, or None
    for the Adam table row matching the operator count. Seeds are
    ``base_seed + 1000 * m + r``.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    m_values = sorted(set(m_values))
    curve = AccuracyCurve(train_set.family.value, arch_template.describe())
    for m in m_values:
        arch = replace(arch_template, m=m)
        if cfg is None:
            base = adam_config(train_set.family, operator_count(arch))
        elif callable(cfg):
            base = cfg(arch)
        else:
            base = cfg
        point = CurvePoint(m, operator_count(arch), [], [])
        for r in range(repeats):
            seed = base_seed + 1000 * m + r
            params, _ = train(train_set, arch, replace(base, seed=seed))
            acc, _ = evaluate(params, test_set)
            point.accuracies.append(acc)
            point.seeds.append(seed)
        curve.points.append(point)
    return curve


def write_curve(curve: AccuracyCurve, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["m", "operators", "mean_acc", "std", "seeds"])
        for pt in curve.points:
            w.writerow([pt.m, pt.operators, f"{pt.mean:.17g}", f"{pt.std:.17g}", " ".join(map(str, pt.seeds))])


# -- error distributions --


@dataclass
class ErrorDistribution:
    axis: str
    edges: list[np.ndarray]  # one edge array per histogram dimension
    errors: np.ndarray
    total: np.ndarray


def _axis_values(records, axis: str) -> np.ndarray:
    if axis == "theta_p":
        vals = [(r.theta, r.p) for r in records]
    else:
        vals = [(getattr(r, axis),) for r in records]
    arr = np.array(vals, dtype=float).reshape(len(vals), 2 if axis == "theta_p" else 1)
    if np.isnan(arr).any():
        raise ValueError(f"records do not carry the {axis!r} axis")
    return arr


def error_distribution(
    errors: Sequence[ErrorRecord],
    axis: str,
    bins: int = 50,
    population: Dataset | Iterable | None = None,
) -> ErrorDistribution:
    """Histogram misclassified records (and optionally the whole test split)
    over ``p``, ``lambda_min`` or the ``(theta, p)`` plane.

    Bins are uniform over the range observed in ``population`` (or in
    ``errors`` when no population is given).
    """
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; expected one of {AXES}")
    err_vals = _axis_values(list(errors), axis)
    pop_vals = _axis_values(list(population), axis) if population is not None else err_vals
    dims = err_vals.shape[1]
    edges = []
    for d in range(dims):
        ref = pop_vals[:, d] if len(pop_vals) else np.array([0.0, 1.0])
        lo, hi = float(ref.min()), float(ref.max())
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges.append(np.linspace(lo, hi, bins + 1))
    err_counts, _ = np.histogramdd(err_vals, bins=edges)
    tot_counts, _ = np.histogramdd(pop_vals, bins=edges)
    return ErrorDistribution(axis, edges, err_counts.astype(int), tot_counts.astype(int))


def write_distribution(dist: ErrorDistribution, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if len(dist.edges) == 1:
            e = dist.edges[0]
            w.writerow(["bin_lo", "bin_hi", "errors", "total"])
            for k in range(len(e) - 1):
                w.writerow([f"{e[k]:.17g}", f"{e[k + 1]:.17g}", dist.errors[k], dist.total[k]])
        else:
            et, ep = dist.edges
            w.writerow(["theta_lo", "theta_hi", "p_lo", "p_hi", "errors", "total"])
            for a in range(len(et) - 1):
                for b in range(len(ep) - 1):
                    w.writerow([f"{et[a]:.17g}", f"{et[a + 1]:.17g}", f"{ep[b]:.17g}", f"{ep[b + 1]:.17g}",
                                dist.errors[a, b], dist.total[a, b]])


def boundary_split(errors: Sequence[ErrorRecord]) -> tuple[int, int]:
    """Errors with ``lambda_min < 0`` and with ``lambda_min >= 0``."""
    lam = np.array([e.lambda_min for e in errors])
    return int(np.sum(lam < 0)), int(np.sum(lam >= 0))


# -- operator tables --


@dataclass(frozen=True)
class OperatorRow:
    path: int
    j: int  # layer-2 kernel index (subsystem 1)
    i: int  # layer-1 kernel index (subsystem 2)
    coeffs: tuple[float, ...]  # X1 Y1 Z1 I1 X2 Y2 Z2 I2


def extract_operators(params: ModelParams) -> list[OperatorRow]:
    """One row per kernel combination, skipping the fixed identity-identity pair."""
    rows = []
    m1, m2 = params.fixed_mask1, params.fixed_mask2
    for k in range(params.arch.m):
        for j in range(params.arch.n2):
            for i in range(params.arch.n1):
                if m2[k, j] and m1[k, i]:
                    continue
                c = tuple(float(x) for x in np.concatenate([params.kernels2[k, j], params.kernels1[k, i]]))
                rows.append(OperatorRow(k, j, i, c))
    return rows


def apply_operators(params: ModelParams, rows: Sequence[OperatorRow]) -> ModelParams:
    """Copy of ``params`` with kernels rebuilt from an operator table."""
    out = params.copy()
    for r in rows:
        out.kernels2[r.path, r.j] = r.coeffs[:4]
        out.kernels1[r.path, r.i] = r.coeffs[4:]
    return out


def write_operators(rows: Sequence[OperatorRow], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "j", "i", *OPERATOR_COLUMNS])
        for r in rows:
            w.writerow([r.path, r.j, r.i, *(f"{c:.17g}" for c in r.coeffs)])


def read_operators(path: str | Path) -> list[OperatorRow]:
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[3:] != OPERATOR_COLUMNS:
            raise ValueError(f"{path}: not an operator table")
        return [OperatorRow(int(r[0]), int(r[1]), int(r[2]), tuple(float(x) for x in r[3:])) for r in rd]


def round_kernels(params: ModelParams, decimals: int) -> ModelParams:
    out = params.copy()
    out.kernels1 = np.round(out.kernels1, decimals)
    out.kernels2 = np.round(out.kernels2, decimals)
    return out


def round_and_retest(params: ModelParams, dataset: Dataset, decimals: int = 2) -> tuple[float, float]:
    """Accuracy before and after rounding every Pauli coefficient; the
    fully connected head is left as is."""
    original, _ = evaluate(params, dataset)
    rounded, _ = evaluate(round_kernels(params, decimals), dataset)
    return original, rounded
