"""Stationary covariance of a MAR model and the regression matrices built from it.

The lagged state ``s(t) = [x(t-1); x(t-2); ...; x(t-p)]`` has covariance
``Gamma`` with ``(u, v)`` block ``Gamma(v - u)`` where
``Gamma(tau) = E[x(t) x(t - tau)^T]``.  Design column ``(k, r)`` (node ``k``,
lag ``r``) corresponds to state index ``(r - 1) N + k``; every population
quantity below is read off ``Gamma`` through that single mapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ModelError, NumericalError, UnstableModelError
from .model import MarModel, TimeSeries, companion, spectral_radius

KRONECKER_MAX_DIM = 48
FIXED_POINT_TOL = 1e-13
FIXED_POINT_MAX_ITER = 100_000

Method = Literal["auto", "kronecker", "fixed_point"]


@dataclass(frozen=True, eq=False)
class StationaryCovariance:
    block_toeplitz: np.ndarray
    n_nodes: int
    order: int

    @property
    def lag_covs(self) -> list[np.ndarray]:
        """``[Gamma(0), ..., Gamma(p-1)]``."""
        n = self.n_nodes
        return [self.block_toeplitz[:n, t * n:(t + 1) * n] for t in range(self.order)]

    def lag(self, tau: int) -> np.ndarray:
        if abs(tau) >= self.order:
            raise ModelError(f"lag {tau} outside stored range |tau| < {self.order}")
        g = self.lag_covs[abs(tau)]
        return g if tau >= 0 else g.T

    @property
    def node_powers(self) -> np.ndarray:
        return np.diag(self.block_toeplitz)[: self.n_nodes].copy()

    def lyapunov_residual(self, model: MarModel) -> float:
        """``||Gamma - A Gamma A^T - Sigma~||_F / max(1, ||Gamma||_F)``."""
        a = companion(model)
        g = self.block_toeplitz
        res = g - a @ g @ a.T - _embed_noise(model)
        return float(np.linalg.norm(res) / max(1.0, np.linalg.norm(g)))

    def diagnostics(self, model: MarModel) -> dict:
        w = np.linalg.eigvalsh(self.block_toeplitz)
        g = self.block_toeplitz
        return {
            "lyapunov_residual": self.lyapunov_residual(model),
            "symmetry_error": float(np.max(np.abs(g - g.T))),
            "min_eigenvalue": float(w[0]),
            "max_eigenvalue": float(w[-1]),
            "node_powers": self.node_powers.tolist(),
        }


def _embed_noise(model: MarModel) -> np.ndarray:
    n, p = model.n_nodes, model.order
    s = np.zeros((n * p, n * p))
    s[:n, :n] = model.noise_cov
    return s


def _solve_kronecker(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = a.shape[0]
    lhs = np.eye(d * d) - np.kron(a, a)
    try:
        vec = np.linalg.solve(lhs, q.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"I - A (x) A is singular: {exc}") from exc
    return vec.reshape(d, d, order="F")


def _solve_fixed_point(a: np.ndarray, q: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    g = q.copy()
    for _ in range(max_iter):
        nxt = a @ g @ a.T + q
        if np.linalg.norm(nxt - g) <= tol * max(1.0, np.linalg.norm(nxt)):
            return nxt
        g = nxt
    raise NumericalError(f"fixed-point covariance iteration did not converge in {max_iter} iterations")


def stationary_covariance(
    model: MarModel,
    method: Method = "auto",
    tol: float = FIXED_POINT_TOL,
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> StationaryCovariance:
    """Solve ``Gamma = A Gamma A^T + Sigma~`` for the stacked lag covariance.

    ``kronecker`` solves ``vec(Gamma) = (I - A (x) A)^{-1} vec(Sigma~)`` directly;
    ``fixed_point`` iterates the recursion; ``auto`` picks the Kronecker solve
    when ``Np <= 48``.
    """
    radius = spectral_radius(model)
    if radius >= 1.0:
        raise UnstableModelError(radius)
    a = companion(model)
    q = _embed_noise(model)
    if method == "auto":
        method = "kronecker" if a.shape[0] <= KRONECKER_MAX_DIM else "fixed_point"
    if method == "kronecker":
        lhs_cond_guard = 1.0 - radius**2
        if lhs_cond_guard < 1e-12:
            raise NumericalError(f"I - A (x) A is near-singular (spectral radius {radius:.12g})")
        g = _solve_kronecker(a, q)
    elif method == "fixed_point":
        g = _solve_fixed_point(a, q, tol, max_iter)
    else:
        raise ModelError(f"unknown covariance method {method!r}")
    g = (g + g.T) / 2
    return StationaryCovariance(g, model.n_nodes, model.order)


def _state_index(nodes: Sequence[int], n_nodes: int, order: int) -> list[int]:
    return [r * n_nodes + k for k in nodes for r in range(order)]


def sub_cov(gamma: StationaryCovariance, rows: Sequence[int], cols: Sequence[int]) -> np.ndarray:
    """Population ``E[X_rows^T X_cols]`` per design row.

    Columns of each node block run over lags ``1..p`` in the same order as
    :func:`smartnet.solver.build_design`.
    """
    rows, cols = list(rows), list(cols)
    if not rows or not cols:
        raise ModelError("sub_cov needs non-empty row and column node sets")
    n = gamma.n_nodes
    for k in rows + cols:
        if not 0 <= k < n:
            raise ModelError(f"node index {k} out of range")
    ri = _state_index(rows, n, gamma.order)
    ci = _state_index(cols, n, gamma.order)
    return gamma.block_toeplitz[np.ix_(ri, ci)]


@dataclass(frozen=True, eq=False)
class PredictorMatrix:
    target: int
    conditioning_set: tuple
    stacked: np.ndarray
    cond: float

    @property
    def psi_blocks(self) -> dict[int, np.ndarray]:
        p = self.stacked.shape[1]
        return {k: self.stacked[b * p:(b + 1) * p] for b, k in enumerate(self.conditioning_set)}


def predictor_matrix(gamma: StationaryCovariance, parents: Sequence[int], j: int) -> PredictorMatrix:
    """Population least-squares predictor of ``X_j`` from ``X_parents``:
    ``Psi = R_{S,S}^{-1} E[X_S^T X_j]``."""
    parents = tuple(int(k) for k in parents)
    if j in parents:
        raise ModelError(f"target node {j} is in the conditioning set")
    r = sub_cov(gamma, parents, parents)
    c = sub_cov(gamma, parents, [j])
    w = np.linalg.eigvalsh(r)
    if w[0] <= 1e-14 * max(1.0, w[-1]):
        raise NumericalError(f"R_(S,S) is singular for S={list(parents)}: smallest eigenvalue {w[0]:.3g}")
    psi = np.linalg.solve(r, c)
    return PredictorMatrix(int(j), parents, psi, float(w[-1] / w[0]))


@dataclass(frozen=True, eq=False)
class NormalizationTransform:
    node_powers: np.ndarray

    def __post_init__(self):
        pw = np.asarray(self.node_powers, dtype=float)
        if np.any(pw <= 0):
            raise ModelError("node powers must all be positive")
        object.__setattr__(self, "node_powers", pw)

    def matrix(self, order: int) -> np.ndarray:
        """Diagonal ``D`` (state ordering) with ``sigma_i^2`` repeated per lag."""
        return np.diag(np.tile(self.node_powers, order))

    def apply_series(self, series: TimeSeries) -> TimeSeries:
        return TimeSeries(series.values / np.sqrt(self.node_powers))


def normalize_model(model: MarModel, gamma: StationaryCovariance | None = None):
    """Rescale every node to unit stationary power.

    Returns the model with companion ``D^{-1/2} A D^{1/2}`` and noise
    ``D^{-1/2} Sigma D^{-1/2}``, along with the transform.
    """
    if gamma is None:
        gamma = stationary_covariance(model)
    transform = NormalizationTransform(gamma.node_powers)
    s = np.sqrt(transform.node_powers)
    coeffs = model.coeffs * s[None, :, None] / s[:, None, None]
    noise = model.noise_cov / np.outer(s, s)
    noise = (noise + noise.T) / 2
    return MarModel(coeffs, noise), transform


def sample_normalization(series: TimeSeries) -> NormalizationTransform:
    """Transform from estimated per-node power (mean square of the samples)."""
    return NormalizationTransform(np.mean(series.values**2, axis=0))
