"""Reference estimators: Lasso, least squares, ridge and Meinshausen-Buhlmann.

Every estimator produces a :class:`ScoredEdgeSet`: an ``N x N`` matrix of
detection statistics (larger means more confident that ``j -> i`` exists) with
self-edges excluded (``nan`` on the diagonal).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import ModelError, NumericalError
from .model import TimeSeries
from .solver import (
    GramProblem,
    GroupLassoSolution,
    GroupStructure,
    RegressionDesign,
    build_design,
    lagged_matrix,
    lambda_grid,
    lambda_max,
    lambda_path,
    solve,
)

Aggregation = Literal["l2", "max"]
DEFAULT_RIDGE = 1e-3


@dataclass
class ScoredEdgeSet:
    estimator: str
    stats: np.ndarray  # stats[i, j] scores "j -> i"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.array(self.stats, dtype=float)
        np.fill_diagonal(s, np.nan)
        off = s[~np.eye(s.shape[0], dtype=bool)]
        if not np.all(np.isfinite(off)):
            raise NumericalError(f"{self.estimator}: non-finite edge statistics")
        self.stats = s

    @property
    def n_nodes(self) -> int:
        return self.stats.shape[0]

    def candidates(self) -> np.ndarray:
        """Off-diagonal mask."""
        return ~np.eye(self.n_nodes, dtype=bool)

    def detected(self, threshold: float) -> set:
        i, j = np.nonzero(self.candidates() & (np.nan_to_num(self.stats, nan=-np.inf) >= threshold))
        return set(zip(i.tolist(), j.tolist()))


def _aggregate(per_lag: np.ndarray, order: int, how: Aggregation) -> np.ndarray:
    blocks = np.abs(per_lag).reshape(-1, order)
    if how == "l2":
        return np.linalg.norm(blocks, axis=1)
    if how == "max":
        return blocks.max(axis=1)
    raise ModelError(f"unknown aggregation {how!r}")


def _row_set(name, n_nodes, target, row, metadata):
    stats = np.zeros((n_nodes, n_nodes))
    stats[target] = row
    return ScoredEdgeSet(name, stats, {"target": target + 1, **metadata})


def lasso_fit(design: RegressionDesign, lam: float, **config) -> tuple[GroupLassoSolution, ScoredEdgeSet]:
    """Coefficient-wise Lasso (the group solver with singleton groups).

    The statistic for ``j -> i`` is ``||a_{i,j}||_2``, nonzero iff any lag is.
    """
    sol = solve(design, lam, "sg", groups="singleton", **config)
    row = np.linalg.norm(sol.blocks, axis=1)
    return sol, _row_set("lasso", design.n_nodes, design.target, row, {"lambda": lam})


def _normalized_stats(x: np.ndarray, y: np.ndarray, coef: np.ndarray, cov_unscaled: np.ndarray, df: float):
    n = x.shape[0]
    resid = y - x @ coef
    dof = n - df
    if dof <= 0:
        raise NumericalError("no residual degrees of freedom")
    sigma2 = float(resid @ resid) / dof
    se = np.sqrt(np.clip(np.diag(cov_unscaled), 0.0, None) * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, np.abs(coef) / se, 0.0)
    return t, sigma2


def least_squares_fit(design: RegressionDesign, aggregation: Aggregation = "l2"):
    """Ordinary least squares with per-lag t statistics ``|a| / SE(a)``.

    Returns ``(coeffs, ScoredEdgeSet)``; the edge statistic aggregates the
    ``p`` lag statistics of each source node.
    """
    x, y = design.X, design.y
    n, d = x.shape
    if n <= d:
        raise ModelError(f"least squares needs more rows than columns (n={n}, Np={d})")
    xtx = x.T @ x
    w = np.linalg.eigvalsh(xtx)
    if w[0] <= 1e-12 * w[-1]:
        raise NumericalError("X^T X is singular")
    inv = np.linalg.inv(xtx)
    coef = inv @ (x.T @ y)
    t, sigma2 = _normalized_stats(x, y, coef, inv, float(d))
    row = _aggregate(t, design.order, aggregation)
    es = _row_set("ls", design.n_nodes, design.target, row, {"aggregation": aggregation, "sigma2": sigma2})
    return coef, es


def ridge_fit(design: RegressionDesign, ridge_penalty: float = DEFAULT_RIDGE, aggregation: Aggregation = "l2"):
    """Ridge ``(X^T X + rho n I)^{-1} X^T y`` with sandwich-covariance statistics."""
    if ridge_penalty <= 0:
        raise ModelError("ridge_penalty must be positive")
    x, y = design.X, design.y
    n, d = x.shape
    xtx = x.T @ x
    m = np.linalg.inv(xtx + ridge_penalty * n * np.eye(d))
    coef = m @ (x.T @ y)
    df = float(np.trace(m @ xtx))
    t, sigma2 = _normalized_stats(x, y, coef, m @ xtx @ m, df)
    row = _aggregate(t, design.order, aggregation)
    es = _row_set("ridge", design.n_nodes, design.target, row,
                  {"aggregation": aggregation, "ridge_penalty": ridge_penalty, "df": df, "sigma2": sigma2})
    return coef, es


def _stack_rows(name: str, rows: list[np.ndarray], metadata: dict) -> ScoredEdgeSet:
    return ScoredEdgeSet(name, np.vstack(rows), metadata)


def least_squares_network(series: TimeSeries, order: int, aggregation: Aggregation = "l2") -> ScoredEdgeSet:
    rows = []
    for i in range(series.n_nodes):
        rows.append(least_squares_fit(build_design(series, i, order), aggregation)[1].stats[i])
    return _stack_rows("ls", rows, {"order": order, "aggregation": aggregation})


def ridge_network(series: TimeSeries, order: int, ridge_penalty: float = DEFAULT_RIDGE,
                  aggregation: Aggregation = "l2") -> ScoredEdgeSet:
    rows = []
    for i in range(series.n_nodes):
        rows.append(ridge_fit(build_design(series, i, order), ridge_penalty, aggregation)[1].stats[i])
    return _stack_rows("ridge", rows, {"order": order, "ridge_penalty": ridge_penalty, "aggregation": aggregation})


def entry_statistics(paths: Sequence[Sequence[GroupLassoSolution]], n_nodes: int) -> np.ndarray:
    """Largest penalty at which each block is nonzero along each node's path.

    ``paths[i]`` is node ``i``'s decreasing-penalty path. Blocks never active
    score 0. Thresholding this statistic at ``lam`` reproduces the set of
    edges that have entered by ``lam``.
    """
    stats = np.zeros((n_nodes, n_nodes))
    for i, path in enumerate(paths):
        for sol in path:
            active = np.any(sol.blocks != 0.0, axis=1)
            newly = active & (stats[i] == 0.0)
            stats[i, newly] = sol.lam
    return stats


def path_network(
    series: TimeSeries,
    order: int,
    variant: str = "scsg",
    groups: str = "node",
    n_points: int = 100,
    lo_frac: float = 1e-3,
    name: Optional[str] = None,
    **config,
) -> ScoredEdgeSet:
    """Entry-penalty statistics for a penalized estimator on a grid shared by all nodes."""
    x = lagged_matrix(series.values, order)
    designs = [RegressionDesign(i, series.values[order:, i].copy(), x, series.n_nodes, order)
               for i in range(series.n_nodes)]
    problems = [GramProblem.from_design(d, variant, groups) for d in designs]
    top = max(lambda_max(p, variant, groups) for p in problems)
    grid = lambda_grid(top, n_points, lo_frac)
    paths = [lambda_path(p, variant, grid=grid, groups=groups, **config) for p in problems]
    stats = entry_statistics(paths, series.n_nodes)
    name = name or ("lasso" if groups == "singleton" else variant)
    return ScoredEdgeSet(name, stats, {"order": order, "variant": variant, "groups": groups,
                                       "lambda_max": top, "n_points": n_points, "lo_frac": lo_frac,
                                       "kkt_max": max(s.kkt for p in paths for s in p)})


def lasso_network(series: TimeSeries, order: int, **kw) -> ScoredEdgeSet:
    return path_network(series, order, "sg", "singleton", name="lasso", **kw)


def _mb_problem(cov: np.ndarray, i: int, n: int) -> GramProblem:
    others = [k for k in range(cov.shape[0]) if k != i]
    gs = GroupStructure.make(len(others), 1, -1, "sg", "singleton")
    return GramProblem(cov[np.ix_(others, others)], cov[others, i], float(cov[i, i]), n, gs, i, len(others), 1)


def _mb_setup(series: TimeSeries):
    v = series.values
    if v.shape[0] < 2:
        raise ModelError("M&B needs at least 2 samples")
    if v.shape[1] < 2:
        raise ModelError("M&B needs at least 2 nodes")
    return v.T @ v / v.shape[0]


def _spread(i: int, n_nodes: int, vals: np.ndarray) -> np.ndarray:
    row = np.zeros(n_nodes)
    row[[k for k in range(n_nodes) if k != i]] = vals
    return row


def mb_fit(series: TimeSeries, lam: float, **config) -> ScoredEdgeSet:
    """Neighborhood selection on contemporaneous samples at one penalty.

    Node ``i`` at time ``t`` is lasso-regressed on the other nodes at time
    ``t``; the undirected statistic is ``max(|coef i<-j|, |coef j<-i|)``
    (OR rule) and both directions receive it.
    """
    cov = _mb_setup(series)
    n_nodes, n = series.n_nodes, series.n_samples
    raw = np.vstack([_spread(i, n_nodes, solve(_mb_problem(cov, i, n), lam, "sg", groups="singleton", **config).coeffs)
                     for i in range(n_nodes)])
    raw = np.abs(raw)
    return ScoredEdgeSet("mb", np.maximum(raw, raw.T), {"lambda": lam, "rule": "or"})


def mb_network(series: TimeSeries, n_points: int = 100, lo_frac: float = 1e-3, **config) -> ScoredEdgeSet:
    """M&B entry-penalty statistics along a shared penalty grid (OR rule)."""
    cov = _mb_setup(series)
    n_nodes, n = series.n_nodes, series.n_samples
    problems = [_mb_problem(cov, i, n) for i in range(n_nodes)]
    top = max(lambda_max(p, "sg", "singleton") for p in problems)
    grid = lambda_grid(top, n_points, lo_frac)
    stats = np.zeros((n_nodes, n_nodes))
    for i, p in enumerate(problems):
        entry = np.zeros(n_nodes - 1)
        for sol in lambda_path(p, "sg", grid=grid, groups="singleton", **config):
            newly = (sol.coeffs != 0.0) & (entry == 0.0)
            entry[newly] = sol.lam
        stats[i] = _spread(i, n_nodes, entry)
    return ScoredEdgeSet("mb", np.maximum(stats, stats.T), {"rule": "or", "lambda_max": top,
                                                            "n_points": n_points, "lo_frac": lo_frac})
