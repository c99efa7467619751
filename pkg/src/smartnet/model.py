"""MAR / SMART model types, construction and simulation.

Conventions used throughout the package:

* ``coeffs[i, j, r - 1]`` is ``a_{i,j}(r)``, the influence of node ``j`` on
  node ``i`` at delay ``r``.  An edge ``(i, j)`` therefore reads "j -> i".
* Node indices are 0-based in the API and 1-based in files and reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Union

import numpy as np

from .errors import ModelError, NumericalError, UnstableModelError

_SYM_TOL = 1e-12
DEFAULT_MAX_ATTEMPTS = 1000
BURN_IN_PER_LAG = 500


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarModel:
    """Parameters of ``x(t) = sum_r A_r x(t-r) + u(t)``, ``u ~ N(0, noise_cov)``.

    Parameters
    ----------
    coeffs : array_like, shape (N, N, p)
        ``coeffs[i, j, r-1] = a_{i,j}(r)``.
    noise_cov : array_like, shape (N, N), optional
        Innovation covariance. Defaults to the identity.
    """

    coeffs: np.ndarray
    noise_cov: np.ndarray = None

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 3 or coeffs.shape[0] != coeffs.shape[1] or coeffs.shape[2] < 1:
            raise ModelError(f"coeffs must have shape (N, N, p), got {coeffs.shape}")
        if coeffs.shape[0] < 1:
            raise ModelError("model needs at least one node")
        if not np.all(np.isfinite(coeffs)):
            raise ModelError("coeffs contain non-finite values")
        n = coeffs.shape[0]
        cov = np.eye(n) if self.noise_cov is None else np.asarray(self.noise_cov, dtype=float)
        if cov.shape != (n, n):
            raise ModelError(f"noise_cov must be {n}x{n}, got {cov.shape}")
        if not np.all(np.isfinite(cov)) or np.max(np.abs(cov - cov.T), initial=0.0) > _SYM_TOL:
            raise ModelError("noise_cov must be finite and symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ModelError("noise_cov must be positive definite") from None
        object.__setattr__(self, "coeffs", _frozen(coeffs))
        object.__setattr__(self, "noise_cov", _frozen(cov))

    @property
    def n_nodes(self) -> int:
        return self.coeffs.shape[0]

    @property
    def order(self) -> int:
        return self.coeffs.shape[2]

    def block(self, i: int, j: int) -> np.ndarray:
        """Coefficient vector ``a_{i,j} = [a_{i,j}(1), ..., a_{i,j}(p)]``."""
        return self.coeffs[i, j]

    def pattern(self) -> "SparsityPattern":
        rows, cols = np.nonzero(np.any(self.coeffs != 0.0, axis=2))
        return SparsityPattern(self.n_nodes, frozenset(zip(rows.tolist(), cols.tolist())))

    def parents(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(np.any(self.coeffs[i] != 0.0, axis=1))]

    def with_noise_cov(self, noise_cov) -> "MarModel":
        return MarModel(self.coeffs, noise_cov)

    def __eq__(self, other):
        if not isinstance(other, MarModel):
            return NotImplemented
        return (
            self.coeffs.shape == other.coeffs.shape
            and np.array_equal(self.coeffs, other.coeffs)
            and np.array_equal(self.noise_cov, other.noise_cov)
        )

    __hash__ = None


@dataclass(frozen=True)
class SparsityPattern:
    """Active set of directed edges; ``(i, j)`` means j influences i."""

    n_nodes: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ModelError("n_nodes must be positive")
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise ModelError(f"edge ({i}, {j}) out of range for {self.n_nodes} nodes")
        object.__setattr__(self, "edges", edges)

    def parents(self, i: int) -> list[int]:
        return sorted(j for (k, j) in self.edges if k == i)

    def mask(self) -> np.ndarray:
        m = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for i, j in self.edges:
            m[i, j] = True
        return m

    def cross_edges(self) -> frozenset:
        return frozenset(e for e in self.edges if e[0] != e[1])

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Realized samples; row ``t`` is ``x(t)^T``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ModelError(f"values must be a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ModelError("time series contains non-finite values")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_nodes(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)

    __hash__ = None


def companion(model: MarModel) -> np.ndarray:
    """Np x Np companion matrix ``[[A_1 ... A_p], [I, 0]]``."""
    n, p = model.n_nodes, model.order
    a = np.zeros((n * p, n * p))
    a[:n, :] = np.concatenate([model.coeffs[:, :, r] for r in range(p)], axis=1)
    if p > 1:
        a[n:, : n * (p - 1)] = np.eye(n * (p - 1))
    return a


def extract_coeffs(comp: np.ndarray, n_nodes: int) -> np.ndarray:
    """Inverse of :func:`companion`: recover the ``(N, N, p)`` coefficient tensor."""
    comp = np.asarray(comp)
    p = comp.shape[0] // n_nodes
    if comp.shape != (n_nodes * p, n_nodes * p):
        raise ModelError(f"companion shape {comp.shape} incompatible with {n_nodes} nodes")
    top = comp[:n_nodes]
    return np.stack([top[:, r * n_nodes:(r + 1) * n_nodes] for r in range(p)], axis=2)


def spectral_radius(model: MarModel) -> float:
    try:
        eig = np.linalg.eigvals(companion(model))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(np.abs(eig)))


def is_stable(model: MarModel, margin: float = 0.0) -> tuple[bool, float]:
    """Return ``(stable, radius)`` where stable means radius < 1 - margin."""
    if margin < 0:
        raise ModelError("margin must be nonnegative")
    radius = spectral_radius(model)
    return radius < 1.0 - margin, radius


def draw_random_model(
    pattern: SparsityPattern,
    order: int,
    coeff_std: float = 0.2,
    noise_cov=None,
    seed: int = 0,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
    margin: float = 0.0,
) -> MarModel:
    """Draw Gaussian coefficients on ``pattern`` until the model is stable.

    Every lag of every edge is drawn i.i.d. ``N(0, coeff_std**2)``; entries off
    the pattern are exactly zero. The first stable draw is returned.
    """
    if coeff_std <= 0:
        raise ModelError("coeff_std must be positive")
    if order < 1:
        raise ModelError("order must be positive")
    rng = np.random.default_rng(seed)
    n = pattern.n_nodes
    edges = sorted(pattern.edges)
    rows = np.array([e[0] for e in edges], dtype=int)
    cols = np.array([e[1] for e in edges], dtype=int)
    for _ in range(max_attempts):
        coeffs = np.zeros((n, n, order))
        if edges:
            draw = rng.normal(0.0, coeff_std, size=(len(edges), order))
            # a draw of exactly 0.0 would silently drop an edge
            draw[draw == 0.0] = np.finfo(float).tiny
            coeffs[rows, cols, :] = draw
        model = MarModel(coeffs, noise_cov)
        if is_stable(model, margin)[0]:
            return model
    raise NumericalError(f"no stable model found in {max_attempts} attempts")


def random_pattern(n_nodes: int, max_parents: int, seed: int = 0, self_edges: bool = True) -> SparsityPattern:
    """Random sparse pattern with at most ``max_parents`` parents per node.

    With ``self_edges`` every node drives itself and receives between one and
    ``max_parents - 1`` other parents chosen uniformly.
    """
    if max_parents < 1 or n_nodes < 1:
        raise ModelError("n_nodes and max_parents must be positive")
    rng = np.random.default_rng(seed)
    edges = set()
    for i in range(n_nodes):
        others = [j for j in range(n_nodes) if j != i]
        budget = max_parents - 1 if self_edges else max_parents
        budget = min(budget, len(others))
        if self_edges:
            edges.add((i, i))
        if budget > 0:
            k = int(rng.integers(1, budget + 1))
            for j in rng.choice(others, size=k, replace=False):
                edges.add((i, int(j)))
    return SparsityPattern(n_nodes, frozenset(edges))


def _winterhalder() -> MarModel:
    c = np.zeros((4, 4, 5))
    # (i, j, lag): value, 1-based as printed
    for (i, j, r), v in {
        (1, 1, 1): 0.8,
        (1, 2, 4): 0.65,
        (2, 2, 1): 0.6,
        (2, 4, 5): 0.6,
        (3, 3, 3): 0.5,
        (3, 1, 1): -0.6,
        (3, 2, 4): 0.4,
        (4, 4, 1): 1.2,
        (4, 4, 2): -0.7,
    }.items():
        c[i - 1, j - 1, r - 1] = v
    return MarModel(c)


def _parallel() -> MarModel:
    c = np.zeros((7, 7, 4))
    for i in range(7):
        c[i, i, :] = 0.05
    c[1, 1, :] = 0.2
    for j in (2, 3, 4, 5):
        c[j, 1, :] = 0.15  # 2 -> {3,4,5,6}
        c[0, j, :] = 0.15  # {3,4,5,6} -> 1
    return MarModel(c)


def _circle() -> SparsityPattern:
    n = 4
    ring = {(1, 0), (2, 1), (3, 2), (0, 3)}
    return SparsityPattern(n, frozenset({(i, i) for i in range(n)} | ring))


BUILTINS = {"circle": _circle, "parallel": _parallel, "winterhalder": _winterhalder}


def builtin_network(name: str) -> Union[MarModel, SparsityPattern]:
    """Example networks. ``circle`` is a pattern only; draw its coefficients
    with :func:`draw_random_model` (order 4, std 0.2)."""
    try:
        return BUILTINS[name]()
    except KeyError:
        raise ModelError(f"unknown builtin network {name!r}; choose from {sorted(BUILTINS)}") from None


InitMode = Union[Literal["stationary", "zero"], tuple]


def _parse_init(init) -> tuple[str, int]:
    if isinstance(init, tuple):
        kind, k = init
        if kind != "burn_in" or int(k) < 0:
            raise ModelError(f"bad init {init!r}")
        return "burn_in", int(k)
    if init == "burn_in":
        return "burn_in", -1
    if init in ("stationary", "zero"):
        return init, 0
    raise ModelError(f"unknown init mode {init!r}")


def _sym_factor(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (tolerates singular Gamma)."""
    w, v = np.linalg.eigh((cov + cov.T) / 2)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def simulate(model: MarModel, n_samples: int, seed: int = 0, init: InitMode = "stationary") -> TimeSeries:
    """Simulate ``n_samples`` steps of the model.

    Parameters
    ----------
    init : {"stationary", "zero", ("burn_in", k), "burn_in"}
        ``stationary`` draws the first ``p`` samples from the stationary
        distribution, ``zero`` starts from ``x = 0``, burn-in runs ``k``
        discarded steps from zero first (``k = 500 p`` when omitted).
    """
    if n_samples < 1:
        raise ModelError("n_samples must be >= 1")
    mode, burn = _parse_init(init)
    n, p = model.n_nodes, model.order
    if mode == "burn_in" and burn < 0:
        burn = BURN_IN_PER_LAG * p
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(model.noise_cov)

    total = n_samples + (burn if mode == "burn_in" else 0)
    x = np.zeros((total + p, n))  # p leading rows hold the pre-sample history
    if mode == "stationary":
        from .covariance import stationary_covariance  # circular at import time

        gamma = stationary_covariance(model)
        state = _sym_factor(gamma.block_toeplitz) @ rng.standard_normal(n * p)
        # state = [x(p-1); x(p-2); ...; x(0)]
        x[p:2 * p] = state.reshape(p, n)[::-1]
        start = 2 * p
    else:
        start = p
    noise = rng.standard_normal((total + p, n)) @ chol.T
    # wide[:, (r-1)N:rN] = A_r ; lagged history is read in reverse order
    wide = np.concatenate([model.coeffs[:, :, r] for r in range(p)], axis=1)
    # divergence is reported below, so overflow warnings are redundant
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(start, total + p):
            hist = x[t - p:t][::-1].ravel()
            x[t] = wide @ hist + noise[t]
    out = x[p + (burn if mode == "burn_in" else 0):]
    bad = np.flatnonzero(~np.all(np.isfinite(out), axis=1))
    if bad.size:
        raise NumericalError(f"simulation diverged: first non-finite sample at index {int(bad[0])}")
    return TimeSeries(out)


def edge_label(i: int, j: int) -> str:
    """1-based "j -> i" label for the edge ``(i, j)``."""
    return f"{j + 1} -> {i + 1}"


def parse_edge_label(label: str) -> tuple[int, int]:
    src, dst = (int(s) for s in label.split("->"))
    return dst - 1, src - 1


def pattern_from_edges(n_nodes: int, edges: Iterable[tuple[int, int]]) -> SparsityPattern:
    return SparsityPattern(n_nodes, frozenset(edges))
