"""Privacy sweeps: train an ensemble per epsilon and measure its multiplicity.

Model ``j`` of grid cell ``i`` draws its randomness from stream
``(root_seed, i * 2**32 + j)``, and results are assembled by index, so the
report does not depend on how many workers ran or in which order they
finished.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from dpmult.datamodel import Dataset, Ensemble, ParamVector, PrivacyParams
from dpmult.metrics import (
    PerformanceSummary,
    accuracy,
    auc,
    disagreement_summary,
    f1,
    group_disparities,
)
from dpmult.multiplicity import (
    disagreement_from_counts,
    error_bound,
    minimal_samples,
    multi_error_bound,
    required_samples,
)
from dpmult.numerics import SeededRng, sigmoid
from dpmult.trainers import (
    TrainConfig,
    lr_sensitivity,
    noise_scale_for,
    objective_perturb_train,
    output_perturb,
    train_logreg_nonprivate,
)

logger = logging.getLogger(__name__)

MECHANISMS = ("output_perturbation", "objective_perturbation")
DEFAULT_RHO = 0.05
SPEC_VERSION = "1.0"


@dataclass(frozen=True)
class AuditConfig:
    mechanism: str = "objective_perturbation"
    epsilon_grid: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5)
    delta: float = 0.0
    m_models: int = 200
    lambda_reg: float = 0.1
    root_seed: int = 0
    target_alpha: float | None = None
    target_rho: float | None = None
    intercept: bool = True
    max_iters: int = 10_000
    grad_tol: float = 1e-8

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}")
        grid = tuple(float(e) for e in self.epsilon_grid)
        if not grid or any(not e > 0 for e in grid):
            raise ValueError("epsilon_grid must be non-empty and strictly positive")
        object.__setattr__(self, "epsilon_grid", grid)
        if self.m_models < 2:
            raise ValueError("m_models must be >= 2")
        if not self.lambda_reg > 0:
            raise ValueError("lambda_reg must be positive")
        if not 0.0 <= self.delta < 1.0:
            raise ValueError("delta must lie in [0, 1)")
        if self.mechanism == "output_perturbation" and self.delta <= 0:
            raise ValueError("output perturbation needs delta > 0")
        if self.root_seed < 0:
            raise ValueError("root_seed must be non-negative")
        if self.target_alpha is not None and not self.target_alpha > 0:
            raise ValueError("target_alpha must be positive")
        if self.target_rho is not None and not 0.0 < self.target_rho < 1.0:
            raise ValueError("target_rho must lie in (0, 1)")

    @property
    def rho(self) -> float:
        return DEFAULT_RHO if self.target_rho is None else self.target_rho

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.max_iters, self.grad_tol, self.lambda_reg, self.intercept)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["epsilon_grid"] = list(self.epsilon_grid)
        return d


@dataclass
class CellResult:
    epsilon: float
    status: str = "ok"
    error: str | None = None
    sigma: float | None = None
    ensemble: Ensemble | None = None
    performance: dict[str, PerformanceSummary] = field(default_factory=dict)
    disagreement: np.ndarray | None = None
    viable_range: np.ndarray | None = None
    groups: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"epsilon": self.epsilon, "status": self.status}
        if self.sigma is not None:
            d["sigma"] = self.sigma
        if not self.ok:
            d["error"] = self.error
            return d
        d["seeds"] = list(self.ensemble.seeds)
        d["performance"] = {k: v.to_dict() for k, v in self.performance.items()}
        dis = self.disagreement
        d["disagreement"] = {
            "per_example": dis.tolist(),
            "summary": disagreement_summary(dis).to_dict(),
            "display_mean": float(np.minimum(dis, 1.0).mean()),
        }
        d["viable_range"] = {
            "per_example": self.viable_range.tolist(),
            "summary": disagreement_summary(self.viable_range).to_dict(),
        }
        d["groups"] = [g.to_dict() for g in self.groups]
        return d


@dataclass
class MultiplicityReport:
    config: AuditConfig
    data_info: dict[str, Any]
    cells: list[CellResult]
    bounds: dict[str, Any]
    notes: list[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return any(not c.ok for c in self.cells)

    def cell(self, epsilon: float) -> CellResult:
        for c in self.cells:
            if c.epsilon == epsilon:
                return c
        raise KeyError(epsilon)

    def to_dict(self) -> dict[str, Any]:
        from dpmult import __version__

        return {
            "config": {**self.config.to_dict(), "data": self.data_info},
            "cells": [c.to_dict() for c in self.cells],
            "bounds": self.bounds,
            "notes": list(self.notes),
            "partial": self.partial,
            "versions": {"spec_version": SPEC_VERSION, "build_id": f"dpmult-{__version__}"},
        }


def stream_index(eps_index: int, model_index: int) -> int:
    return (eps_index << 32) + model_index


def _train_models(task) -> list[tuple[int, np.ndarray | str]]:
    """Worker body: train the listed model indices of one cell."""
    (mechanism, train, cfg, epsilon, sigma, theta_np, root_seed, eps_index, indices) = task
    out = []
    for j in indices:
        rng = SeededRng(root_seed, stream_index(eps_index, j))
        try:
            if mechanism == "output_perturbation":
                theta = output_perturb(theta_np, sigma, rng)
            else:
                theta = objective_perturb_train(train, epsilon, cfg, rng)
            out.append((j, theta.weights))
        except (ArithmeticError, RuntimeError, ValueError) as exc:
            out.append((j, f"{type(exc).__name__}: {exc}"))
    return out


def _chunks(m: int, n_chunks: int) -> list[list[int]]:
    n_chunks = max(1, min(n_chunks, m))
    return [list(range(i, m, n_chunks)) for i in range(n_chunks)]


def evaluate_cell(cell: CellResult, test: Dataset) -> None:
    """Fill in performance, per-example disagreement/range and group summaries."""
    W = cell.ensemble.weight_matrix()
    scores = test.features @ W.T  # k x m
    preds = scores > 0.0
    conf = sigmoid(scores)
    y = test.labels
    m = W.shape[0]
    perf = {"auc": [], "accuracy": [], "f1": []}
    for j in range(m):
        perf["accuracy"].append(accuracy(preds[:, j], y))
        perf["f1"].append(f1(preds[:, j], y))
        try:
            perf["auc"].append(auc(conf[:, j], y))
        except ValueError:
            perf["auc"].append(float("nan"))
    cell.performance = {k: PerformanceSummary.from_values(k, v) for k, v in perf.items()}
    cell.disagreement = disagreement_from_counts(preds.sum(axis=1), m)
    cell.viable_range = conf.max(axis=1) - conf.min(axis=1)
    if test.group is not None:
        cell.groups = group_disparities(cell.disagreement, test.group)


def run_audit(
    train: Dataset,
    test: Dataset,
    cfg: AuditConfig,
    workers: int | None = 1,
) -> MultiplicityReport:
    """Train ``cfg.m_models`` private models per epsilon and audit them on ``test``.

    A failure while training any model of a cell marks that cell failed; the
    remaining cells still run.
    """
    if test.d != train.d:
        raise ValueError("train and test feature counts differ")
    workers = workers or os.cpu_count() or 1
    tcfg = cfg.train_config()
    notes: list[str] = []

    theta_np = None
    np_error = None
    sensitivity = lr_sensitivity(train.n, cfg.lambda_reg)
    if cfg.mechanism == "output_perturbation":
        try:
            theta_np = train_logreg_nonprivate(train, tcfg)
        except (RuntimeError, ValueError) as exc:
            np_error = f"{type(exc).__name__}: {exc}"

    cells: list[CellResult] = []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for i, eps in enumerate(cfg.epsilon_grid):
            cell = CellResult(epsilon=eps)
            cells.append(cell)
            if cfg.mechanism == "output_perturbation":
                cell.sigma = noise_scale_for(
                    PrivacyParams(eps, cfg.delta, sensitivity, cfg.lambda_reg)
                )
                if np_error is not None:
                    cell.status, cell.error = "failed", np_error
                    continue
            tasks = [
                (cfg.mechanism, train, tcfg, eps, cell.sigma, theta_np, cfg.root_seed, i, chunk)
                for chunk in _chunks(cfg.m_models, workers)
            ]
            results = pool.map(_train_models, tasks) if pool else map(_train_models, tasks)
            slots: list[Any] = [None] * cfg.m_models
            for part in results:
                for j, value in part:
                    slots[j] = value
            errors = [(j, v) for j, v in enumerate(slots) if isinstance(v, str)]
            if errors:
                j, msg = errors[0]
                cell.status = "failed"
                cell.error = f"{len(errors)} of {cfg.m_models} models failed; first (model {j}): {msg}"
                logger.warning("epsilon=%g: %s", eps, cell.error)
                continue
            cell.ensemble = Ensemble(
                tuple(ParamVector(w) for w in slots),
                tuple(stream_index(i, j) for j in range(cfg.m_models)),
                {"mechanism": cfg.mechanism, "epsilon": eps, **tcfg.to_dict()},
            )
            evaluate_cell(cell, test)
    finally:
        if pool is not None:
            pool.shutdown()

    k = test.n
    bounds: dict[str, Any] = {
        "m": cfg.m_models,
        "rho": cfg.rho,
        "k": k,
        "single": error_bound(cfg.m_models, cfg.rho),
        "uniform": multi_error_bound(cfg.m_models, k, cfg.rho),
    }
    if cfg.target_alpha is not None:
        need = required_samples(cfg.target_alpha, cfg.rho)
        bounds["target_alpha"] = cfg.target_alpha
        bounds["required_m"] = need
        bounds["guarantee_met"] = cfg.m_models >= need
        if cfg.m_models < need:
            notes.append(
                f"guarantee not met: m={cfg.m_models} < {need} needed for alpha={cfg.target_alpha}"
                f" at rho={cfg.rho}; achievable single-example bound is {bounds['single']:.4f}"
            )
    data_info = {
        "n_train": train.n,
        "n_test": test.n,
        "d": train.d,
        "feature_names": list(train.feature_names),
        "sensitivity": sensitivity,
    }
    if theta_np is not None:
        data_info["theta_nonprivate"] = theta_np.weights.tolist()
    return MultiplicityReport(cfg, data_info, cells, bounds, notes)


@dataclass(frozen=True)
class SamplePlan:
    alpha: float
    rho: float
    k: int
    m_single: int
    bound_single: float
    m_uniform: int
    bound_uniform: float

    def to_dict(self):
        return asdict(self)


def plan_sample_size(alpha: float, rho: float, k: int = 1) -> SamplePlan:
    """Models needed for error ``alpha`` at one input and uniformly over ``k`` inputs."""
    if k < 1:
        raise ValueError("k must be >= 1")
    m1 = required_samples(alpha, rho)
    mk = minimal_samples(alpha, rho, k)
    return SamplePlan(
        alpha=alpha,
        rho=rho,
        k=k,
        m_single=m1,
        bound_single=error_bound(m1, rho),
        m_uniform=mk,
        bound_uniform=multi_error_bound(mk, k, rho),
    )


def summaries_by_epsilon(report: MultiplicityReport, values: str = "disagreement") -> Sequence[tuple]:
    """(epsilon, mean, ci95 half-width) rows over successful cells."""
    rows = []
    for c in report.cells:
        if not c.ok:
            continue
        v = getattr(c, values)
        rows.append((c.epsilon, float(v.mean()), float(1.96 * v.std() / np.sqrt(v.size))))
    return rows
