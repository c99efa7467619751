"""Cross-validated penalty selection, Monte-Carlo recovery trials and ROC curves."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import baselines, seeding
from .covariance import sample_normalization
from .errors import ModelError
from .model import MarModel, TimeSeries, edge_label, simulate
from .solver import (
    DEFAULT_LO_FRAC,
    DEFAULT_N_POINTS,
    GramProblem,
    GroupStructure,
    RegressionDesign,
    lagged_matrix,
    lambda_grid,
    lambda_max,
    lambda_path,
    solve,
)

ESTIMATORS = ("scsg", "sg", "lasso", "ls", "ridge", "mb")


@dataclass
class CvResult:
    target: int
    grid: np.ndarray
    fold_errors: np.ndarray  # (folds, len(grid)) held-out mean squared error
    fold_bounds: list
    selected_index: int

    @property
    def mean_errors(self) -> np.ndarray:
        return self.fold_errors.mean(axis=0)

    @property
    def selected_lambda(self) -> float:
        return float(self.grid[self.selected_index])

    def to_dict(self) -> dict:
        return {
            "target": self.target + 1,
            "grid": self.grid.tolist(),
            "mean_errors": self.mean_errors.tolist(),
            "fold_errors": self.fold_errors.tolist(),
            "fold_bounds": self.fold_bounds,
            "selected_lambda": self.selected_lambda,
            "selected_index": self.selected_index,
        }


def _select(mean_errors: np.ndarray, grid: np.ndarray) -> int:
    best = np.flatnonzero(mean_errors == mean_errors.min())
    # ties go to the largest penalty (sparsest model)
    return int(best[np.argmax(grid[best])])


def _cv_core(x, y, target, n_nodes, order, variant, folds, grid, groups, config):
    n = x.shape[0]
    if folds < 2 or n < folds:
        raise ModelError(f"need at least {folds} design rows for {folds}-fold CV, have {n}")
    bounds = [(int(b[0]), int(b[-1]) + 1) for b in np.array_split(np.arange(n), folds)]
    xtx, xty, yy = x.T @ x, x.T @ y, float(y @ y)
    gs = GroupStructure.make(n_nodes, order, target, variant, groups)
    errors = np.zeros((folds, len(grid)))
    for f, (lo, hi) in enumerate(bounds):
        xf, yf = x[lo:hi], y[lo:hi]
        m = n - (hi - lo)
        prob = GramProblem((xtx - xf.T @ xf) / m, (xty - xf.T @ yf) / m, (yy - float(yf @ yf)) / m,
                           m, gs, target, n_nodes, order)
        for k, sol in enumerate(lambda_path(prob, variant, grid=grid, groups=groups, **config)):
            r = yf - xf @ sol.coeffs
            errors[f, k] = float(r @ r) / len(yf)
    return bounds, errors


def cross_validate(
    series: TimeSeries,
    target_node: int,
    order: int,
    variant: str = "scsg",
    folds: int = 10,
    grid: Optional[Sequence[float]] = None,
    n_points: int = DEFAULT_N_POINTS,
    lo_frac: float = DEFAULT_LO_FRAC,
    groups: str = "node",
    design: Optional[RegressionDesign] = None,
    **config,
) -> CvResult:
    """Blocked K-fold CV of the penalty for one node.

    Folds are contiguous row blocks of the design. The grid defaults to
    ``n_points`` log-spaced values in ``[lo_frac, 1] * lambda_max`` of the
    full data.
    """
    if design is None:
        from .solver import build_design

        design = build_design(series, target_node, order)
    if grid is None:
        grid = lambda_grid(lambda_max(design, variant, groups), n_points, lo_frac)
    grid = np.asarray(grid, dtype=float)
    bounds, errors = _cv_core(design.X, design.y, design.target, design.n_nodes, order,
                              variant, folds, grid, groups, config)
    return CvResult(design.target, grid, errors, bounds, _select(errors.mean(axis=0), grid))


def fit_network_cv(
    series: TimeSeries,
    order: int,
    variant: str = "scsg",
    folds: int = 10,
    n_points: int = DEFAULT_N_POINTS,
    lo_frac: float = DEFAULT_LO_FRAC,
    **config,
):
    """CV-select a penalty per node and refit on all rows.

    Returns ``(edges, solutions, cv_results)`` where ``edges`` holds the
    discovered ``(i, j)`` pairs (SCSG self-edges omitted).
    """
    x = lagged_matrix(series.values, order)
    edges, sols, cvs = set(), [], []
    for i in range(series.n_nodes):
        design = RegressionDesign(i, series.values[order:, i].copy(), x, series.n_nodes, order)
        cv = cross_validate(series, i, order, variant, folds, n_points=n_points, lo_frac=lo_frac,
                            design=design, **config)
        # refit along the same grid for warm starts
        path = lambda_path(design, variant, grid=cv.grid[: cv.selected_index + 1], **config)
        sol = path[-1]
        edges.update((i, j) for j in sol.discovered_parents)
        sols.append(sol)
        cvs.append(cv)
    return edges, sols, cvs


@dataclass
class RecoveryTally:
    n_nodes: int
    n_trials: int
    variant: str
    truth: set
    counts: np.ndarray  # counts[i, j]: trials in which "j -> i" was discovered
    trial_edges: list
    seeds: list
    exact_support: int

    @property
    def rates(self) -> np.ndarray:
        return self.counts / self.n_trials

    def true_edge_rates(self) -> dict:
        return {e: self.counts[e] / self.n_trials for e in sorted(self.truth)}

    def false_edge_rates(self) -> dict:
        out = {}
        for i in range(self.n_nodes):
            for j in range(self.n_nodes):
                if (i, j) in self.truth or (self.variant == "scsg" and i == j):
                    continue
                out[(i, j)] = self.counts[i, j] / self.n_trials
        return out

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "n_trials": self.n_trials,
            "exact_support": self.exact_support,
            "true_edges": {edge_label(*e): r for e, r in self.true_edge_rates().items()},
            "false_edges": {edge_label(*e): r for e, r in self.false_edge_rates().items() if r > 0},
            "trials": [
                {"trial": k, "seed": s, "edges": sorted(edge_label(*e) for e in edges)}
                for k, (s, edges) in enumerate(zip(self.seeds, self.trial_edges))
            ],
        }


def _tallied_truth(model: MarModel, variant: str) -> set:
    edges = model.pattern().edges
    return {e for e in edges if e[0] != e[1]} if variant == "scsg" else set(edges)


def _one_trial(args):
    model, n_samples, variant, seed, trial, cv_kw = args
    series = simulate(model, n_samples, seed=seeding.derive(seed, trial), init="stationary")
    return fit_network_cv(series, model.order, variant, **cv_kw)[0]


def recovery_trial(
    model: MarModel,
    n_samples: int,
    n_trials: int,
    variant: str = "scsg",
    seed: int = 0,
    threads: int = 1,
    folds: int = 10,
    n_points: int = DEFAULT_N_POINTS,
    lo_frac: float = DEFAULT_LO_FRAC,
) -> RecoveryTally:
    """Simulate ``n_trials`` realizations and tally CV-selected network estimates.

    Trial ``k`` uses the stream ``derive(seed, k)``; the tally is identical for
    any ``threads``.
    """
    cv_kw = {"folds": folds, "n_points": n_points, "lo_frac": lo_frac}
    jobs = [(model, n_samples, variant, seed, k, cv_kw) for k in range(n_trials)]
    if threads > 1 and n_trials > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_one_trial, jobs))
    else:
        results = [_one_trial(j) for j in jobs]
    n = model.n_nodes
    truth = _tallied_truth(model, variant)
    counts = np.zeros((n, n), dtype=int)
    exact = 0
    for edges in results:
        for e in edges:
            counts[e] += 1
        exact += int(edges == truth)
    return RecoveryTally(n, n_trials, variant, truth, counts, [set(e) for e in results],
                         [f"{seed}/{k}" for k in range(n_trials)], exact)


@dataclass
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float = field(init=False)

    def __post_init__(self):
        self.auc = float(np.trapezoid(self.tpr, self.fpr))

    def to_rows(self, estimator: str) -> list[tuple]:
        return [(estimator, float(t), float(f), float(p), self.auc)
                for t, f, p in zip(self.thresholds, self.fpr, self.tpr)]


def roc_curve(stats: np.ndarray, truth: np.ndarray) -> RocCurve:
    """ROC of thresholding ``stats`` against a boolean truth matrix.

    Only off-diagonal entries count. A candidate is detected at threshold
    ``tau`` when its statistic is ``>= tau``; the sweep includes ``+inf`` and
    ``-inf`` so the curve runs from (0, 0) to (1, 1).
    """
    stats = np.asarray(stats, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    off = ~np.eye(stats.shape[0], dtype=bool)
    s, t = stats[off], truth[off]
    n_pos, n_neg = int(t.sum()), int((~t).sum())
    if n_pos == 0 or n_neg == 0:
        raise ModelError("ROC needs both true and absent candidate edges")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    # last index of each distinct statistic value
    cut = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(t)[cut]
    fp = np.cumsum(~t)[cut]
    thresholds = np.r_[np.inf, s[cut], -np.inf]
    tpr = np.r_[0.0, tp / n_pos, 1.0]
    fpr = np.r_[0.0, fp / n_neg, 1.0]
    return RocCurve(thresholds, fpr, tpr)


def estimator_statistics(
    series: TimeSeries,
    order: int,
    estimator: str,
    ridge_penalty: float = baselines.DEFAULT_RIDGE,
    n_points: int = 100,
    lo_frac: float = 1e-3,
) -> baselines.ScoredEdgeSet:
    if estimator in ("scsg", "sg"):
        return baselines.path_network(series, order, estimator, "node", n_points, lo_frac)
    if estimator == "lasso":
        return baselines.lasso_network(series, order, n_points=n_points, lo_frac=lo_frac)
    if estimator == "ls":
        return baselines.least_squares_network(series, order)
    if estimator == "ridge":
        return baselines.ridge_network(series, order, ridge_penalty)
    if estimator == "mb":
        return baselines.mb_network(series, n_points=n_points, lo_frac=lo_frac)
    raise ModelError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


def roc(
    model: MarModel,
    n_samples: int,
    estimators: Iterable[str] = ("scsg", "lasso", "ls", "ridge", "mb"),
    seed: int = 0,
    normalize: bool = False,
    **kw,
) -> dict[str, RocCurve]:
    """Simulate one dataset and compute each estimator's ROC (self-edges excluded)."""
    series = simulate(model, n_samples, seed=seeding.derive(seed, 0), init="stationary")
    if normalize:
        series = sample_normalization(series).apply_series(series)
    truth = model.pattern().mask()
    return {name: roc_curve(estimator_statistics(series, model.order, name, **kw).stats, truth)
            for name in estimators}


def default_threads() -> int:
    env = os.environ.get("SMARTNET_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
