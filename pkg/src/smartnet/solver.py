"""Per-node regression designs and the SG / SCSG group-lasso solvers.

For target node ``i`` the estimator minimizes::

    (1/n) ||y_i - X a_i||^2 + lam * sum_j ||a_{i,j}||_2

over ``a_i`` (SG). SCSG drops ``j = i`` from the penalty. ``X = [X_1 ... X_N]``
and row ``t`` of ``X_j`` holds ``x_j(t-1), ..., x_j(t-p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Optional, Sequence, Union

import numpy as np

from . import _bcd
from .errors import ModelError, NumericalError
from .model import TimeSeries

Variant = Literal["sg", "scsg"]
GroupMode = Literal["node", "singleton"]

DEFAULT_TOL = 1e-8
DEFAULT_KKT_TOL = 1e-7
DEFAULT_MAX_ITER = 100_000
DEFAULT_N_POINTS = 50
DEFAULT_LO_FRAC = 0.05


def lagged_matrix(values: np.ndarray, order: int) -> np.ndarray:
    """Design rows for every ``t >= order``: ``[x_1(t-1..t-p), ..., x_N(t-1..t-p)]``."""
    values = np.asarray(values, dtype=float)
    n_samples, n_nodes = values.shape
    if n_samples <= order:
        raise ModelError(f"series of length {n_samples} too short for order {order}")
    rows = n_samples - order
    x = np.empty((rows, n_nodes * order))
    for r in range(1, order + 1):
        # column j*p + (r-1) <- x_j(t - r)
        x[:, r - 1::order] = values[order - r:n_samples - r]
    return x


@dataclass(frozen=True, eq=False)
class RegressionDesign:
    """Target vector and lagged design for one node."""

    target: int
    y: np.ndarray
    X: np.ndarray
    n_nodes: int
    order: int
    mode: str = "toeplitz"

    @property
    def n_effective(self) -> int:
        return self.X.shape[0]

    @property
    def node_of_column(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_nodes), self.order)

    @property
    def lag_of_column(self) -> np.ndarray:
        return np.tile(np.arange(1, self.order + 1), self.n_nodes)

    @cached_property
    def gram(self) -> np.ndarray:
        return self.X.T @ self.X / self.n_effective

    @cached_property
    def xty(self) -> np.ndarray:
        return self.X.T @ self.y / self.n_effective

    @cached_property
    def yy(self) -> float:
        return float(self.y @ self.y / self.n_effective)

    def with_target(self, y: np.ndarray, target: int) -> "RegressionDesign":
        return RegressionDesign(target, np.asarray(y, float), self.X, self.n_nodes, self.order, self.mode)


def build_design(
    series: Union[TimeSeries, Sequence[TimeSeries]],
    target_node: int,
    order: int,
    mode: str = "toeplitz",
) -> RegressionDesign:
    """Regression design for ``target_node``.

    ``toeplitz`` uses every row of one realization (``n = n_samples - p``);
    ``independent_rows`` takes a list of realizations and uses only the final
    row of each, so rows are independent.
    """
    if order < 1:
        raise ModelError("order must be positive")
    if mode == "toeplitz":
        if not isinstance(series, TimeSeries):
            raise ModelError("toeplitz mode takes a single TimeSeries")
        if not 0 <= target_node < series.n_nodes:
            raise ModelError(f"target node {target_node} out of range")
        x = lagged_matrix(series.values, order)
        y = series.values[order:, target_node].copy()
        return RegressionDesign(target_node, y, x, series.n_nodes, order, mode)
    if mode == "independent_rows":
        reals = [series] if isinstance(series, TimeSeries) else list(series)
        if not reals:
            raise ModelError("independent_rows mode needs at least one realization")
        n_nodes = reals[0].n_nodes
        rows, ys = [], []
        for s in reals:
            if s.n_nodes != n_nodes:
                raise ModelError("realizations disagree on node count")
            if s.n_samples <= order:
                raise ModelError(f"realization of length {s.n_samples} too short for order {order}")
            rows.append(lagged_matrix(s.values[-order - 1:], order)[0])
            ys.append(s.values[-1, target_node])
        return RegressionDesign(target_node, np.array(ys), np.array(rows), n_nodes, order, mode)
    raise ModelError(f"unknown design mode {mode!r}")


@dataclass(frozen=True, eq=False)
class GroupStructure:
    starts: np.ndarray
    sizes: np.ndarray
    penalized: np.ndarray
    owner: np.ndarray  # node owning each group

    @classmethod
    def make(cls, n_nodes: int, order: int, target: int, variant: str, groups: str = "node"):
        if variant not in ("sg", "scsg"):
            raise ModelError(f"unknown variant {variant!r}")
        if groups == "node":
            starts = np.arange(n_nodes) * order
            sizes = np.full(n_nodes, order)
            owner = np.arange(n_nodes)
        elif groups == "singleton":
            starts = np.arange(n_nodes * order)
            sizes = np.ones(n_nodes * order, dtype=np.int64)
            owner = np.repeat(np.arange(n_nodes), order)
        else:
            raise ModelError(f"unknown group mode {groups!r}")
        penalized = np.ones(len(starts), dtype=np.bool_)
        if variant == "scsg":
            penalized[owner == target] = False
        return cls(starts.astype(np.int64), sizes.astype(np.int64), penalized, owner)


def _block_eigs(gram: np.ndarray, gs: GroupStructure):
    m = int(gs.sizes.max())
    w = np.zeros((len(gs.starts), m))
    v = np.zeros((len(gs.starts), m, m))
    for g, (s, k) in enumerate(zip(gs.starts, gs.sizes)):
        ww, vv = np.linalg.eigh(gram[s:s + k, s:s + k])
        w[g, :k] = ww
        v[g, :k, :k] = vv
    return w, v


@dataclass
class GramProblem:
    """Sufficient statistics of one penalized regression."""

    gram: np.ndarray
    xty: np.ndarray
    yy: float
    n: int
    groups: GroupStructure
    target: int
    n_nodes: int
    order: int
    eig_w: np.ndarray = field(init=False, repr=False)
    eig_v: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.gram = np.ascontiguousarray(self.gram, dtype=float)
        self.xty = np.ascontiguousarray(self.xty, dtype=float)
        self.eig_w, self.eig_v = _block_eigs(self.gram, self.groups)

    @classmethod
    def from_design(cls, design: RegressionDesign, variant: str = "sg", groups: str = "node"):
        gs = GroupStructure.make(design.n_nodes, design.order, design.target, variant, groups)
        return cls(design.gram, design.xty, design.yy, design.n_effective, gs,
                   design.target, design.n_nodes, design.order)


@dataclass
class GroupLassoSolution:
    coeffs: np.ndarray
    lam: float
    variant: str
    target: int
    n_nodes: int
    order: int
    subgradient: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt: float
    groups: str = "node"
    history: Optional[np.ndarray] = None

    def block(self, j: int) -> np.ndarray:
        return self.coeffs[j * self.order:(j + 1) * self.order]

    @property
    def blocks(self) -> np.ndarray:
        return self.coeffs.reshape(self.n_nodes, self.order)

    @property
    def active_groups(self) -> list[int]:
        """Nodes whose coefficient block is nonzero."""
        return [int(j) for j in np.flatnonzero(np.any(self.blocks != 0.0, axis=1))]

    @property
    def discovered_parents(self) -> list[int]:
        """Active nodes excluding the always-active SCSG self block."""
        act = self.active_groups
        if self.variant == "scsg":
            act = [j for j in act if j != self.target]
        return act

    def to_dict(self) -> dict:
        return {
            "target": self.target + 1,
            "lambda": self.lam,
            "variant": self.variant,
            "groups": self.groups,
            "coeffs": self.blocks.tolist(),
            "active": [j + 1 for j in self.active_groups],
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "kkt_residual": self.kkt,
        }


def _problem(design_or_problem, variant, groups) -> GramProblem:
    if isinstance(design_or_problem, GramProblem):
        return design_or_problem
    return GramProblem.from_design(design_or_problem, variant, groups)


def _unpenalized_fit(prob: GramProblem) -> np.ndarray:
    """Coefficients with only the unpenalized groups fitted by least squares."""
    gs = prob.groups
    a = np.zeros(prob.gram.shape[0])
    free = ~gs.penalized
    if not free.any():
        return a
    idx = np.concatenate([np.arange(s, s + k) for s, k in zip(gs.starts[free], gs.sizes[free])])
    sub = prob.gram[np.ix_(idx, idx)]
    w = np.linalg.eigvalsh(sub)
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        raise NumericalError("self-regression Gram matrix is singular; need more samples than lags")
    a[idx] = np.linalg.solve(sub, prob.xty[idx])
    return a


def lambda_max(design, variant: Variant = "sg", groups: GroupMode = "node") -> float:
    """Smallest penalty at which every penalized group is zero.

    SCSG first fits the unpenalized self block by least squares.
    """
    prob = _problem(design, variant, groups)
    gs = prob.groups
    g = prob.xty - prob.gram @ _unpenalized_fit(prob)
    vals = [2.0 * np.linalg.norm(g[s:s + k]) for s, k, pen in zip(gs.starts, gs.sizes, gs.penalized) if pen]
    return float(max(vals, default=0.0))


def kkt_residual(design, solution: GroupLassoSolution, lam: Optional[float] = None) -> float:
    """Largest violation of the group-lasso optimality conditions.

    Active penalized groups: ``||(2/(lam n)) X_j^T r - a_j/||a_j|| ||``.
    Zero penalized groups: ``max(0, (2/(lam n)) ||X_j^T r|| - 1)``.
    Unpenalized groups (and every group at ``lam = 0``): ``(2/n) ||X_j^T r||``.
    """
    lam = solution.lam if lam is None else lam
    prob = _problem(design, solution.variant, solution.groups)
    gs = prob.groups
    return float(_bcd.kkt_gram(prob.gram, prob.xty, np.asarray(solution.coeffs, float),
                               gs.starts, gs.sizes, gs.penalized, float(lam)))


def solve(
    design,
    lam: float,
    variant: Variant = "sg",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    warm_start: Optional[np.ndarray] = None,
    kkt_tol: float = DEFAULT_KKT_TOL,
    groups: GroupMode = "node",
    debug: bool = False,
) -> GroupLassoSolution:
    """Solve the penalized regression by cyclic block coordinate descent.

    Every block update is an exact minimization. Iteration stops once the
    KKT residual is below ``kkt_tol``; otherwise the best iterate after
    ``max_iter`` sweeps comes back with ``converged=False``.

    ``design`` may be a :class:`RegressionDesign` or a prepared
    :class:`GramProblem`.
    """
    if lam < 0 or not np.isfinite(lam):
        raise ModelError("lambda must be a finite nonnegative number")
    prob = _problem(design, variant, groups)
    dim = prob.gram.shape[0]
    # a cold start begins from the unpenalized fit, where every penalized
    # block is exactly zero for lam >= lambda_max
    a0 = _unpenalized_fit(prob) if warm_start is None else np.array(warm_start, dtype=float)
    if a0.shape != (dim,):
        raise ModelError(f"warm start has shape {a0.shape}, expected {(dim,)}")
    gs = prob.groups
    hist = np.zeros(max_iter if debug else 0)
    a, it, conv, kkt = _bcd.bcd(
        prob.gram, prob.xty, prob.yy, a0, gs.starts, gs.sizes, gs.penalized,
        prob.eig_w, prob.eig_v, float(lam), float(tol), float(kkt_tol), int(max_iter), hist,
    )
    obj = float(_bcd.objective_gram(prob.gram, prob.xty, prob.yy, a, gs.starts, gs.sizes, gs.penalized, float(lam)))
    resid_grad = prob.xty - prob.gram @ a
    sub = 2.0 / lam * resid_grad if lam > 0 else np.zeros_like(a)
    return GroupLassoSolution(
        coeffs=a, lam=float(lam), variant=variant, target=prob.target, n_nodes=prob.n_nodes, order=prob.order,
        subgradient=sub, objective=obj, iterations=int(it), converged=bool(conv), kkt=float(kkt),
        groups=groups, history=hist[:it] if debug else None,
    )


def lambda_grid(lam_max: float, n_points: int = DEFAULT_N_POINTS, lo_frac: float = DEFAULT_LO_FRAC) -> np.ndarray:
    """Log-spaced grid from ``lam_max`` down to ``lo_frac * lam_max``."""
    if n_points < 1 or not 0 < lo_frac <= 1:
        raise ModelError("need n_points >= 1 and 0 < lo_frac <= 1")
    if lam_max <= 0:
        return np.zeros(n_points)
    if n_points == 1:
        return np.array([lam_max])
    return lam_max * np.logspace(0.0, np.log10(lo_frac), n_points)


def lambda_path(
    design,
    variant: Variant = "sg",
    lo_frac: float = DEFAULT_LO_FRAC,
    n_points: int = DEFAULT_N_POINTS,
    grid: Optional[Sequence[float]] = None,
    groups: GroupMode = "node",
    **config,
) -> list[GroupLassoSolution]:
    """Warm-started solutions along a decreasing penalty grid."""
    prob = _problem(design, variant, groups)
    if grid is None:
        grid = lambda_grid(lambda_max(prob, variant, groups), n_points, lo_frac)
    out, warm = [], None
    for lam in grid:
        sol = solve(prob, float(lam), variant, warm_start=warm, groups=groups, **config)
        out.append(sol)
        warm = sol.coeffs
    return out
