"""False connection scores and the finite-sample assumption audit.

For a candidate false edge ``j -> i`` (``j`` not a parent of ``i``)::

    psi    = || sum_{k in S_i}         Psi_{j,k}^T a_{i,k} / ||a_{i,k}|| ||
    psi_sc = || sum_{k in S_i, k != i} Psi_{j,k}^T a_{i,k} / ||a_{i,k}|| ||

``psi < 1`` for every candidate means SG recovers the structure
asymptotically; ``psi_sc`` plays the same role for SCSG.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional

import numpy as np

from .covariance import (
    StationaryCovariance,
    normalize_model,
    predictor_matrix,
    stationary_covariance,
    sub_cov,
)
from .errors import ModelError, NumericalError
from .model import MarModel, SparsityPattern, edge_label

Variant = Literal["sg", "scsg"]
VARIANTS = ("sg", "scsg")


def _unit_directions(model: MarModel, i: int, parents: Iterable[int]) -> dict[int, np.ndarray]:
    dirs = {}
    for k in parents:
        a = model.block(i, k)
        nrm = np.linalg.norm(a)
        if nrm == 0.0:
            raise ModelError(f"active edge {edge_label(i, k)} has a zero coefficient block")
        dirs[k] = a / nrm
    return dirs


def _scores(model: MarModel, gamma: StationaryCovariance, i: int, j: int, parents: list[int]) -> dict[str, float]:
    if not parents:
        return {"sg": 0.0, "scsg": 0.0}
    dirs = _unit_directions(model, i, parents)
    blocks = predictor_matrix(gamma, parents, j).psi_blocks
    terms = {k: blocks[k].T @ dirs[k] for k in parents}
    p = model.order
    total = sum(terms.values(), np.zeros(p))
    cross = sum((v for k, v in terms.items() if k != i), np.zeros(p))
    return {"sg": float(np.linalg.norm(total)), "scsg": float(np.linalg.norm(cross))}


def fcs_edge(
    model: MarModel,
    gamma: StationaryCovariance,
    i: int,
    j: int,
    variant: Variant = "sg",
) -> float:
    """False connection score of the candidate edge ``j -> i``."""
    if variant not in VARIANTS:
        raise ModelError(f"unknown variant {variant!r}")
    parents = model.parents(i)
    if j in parents:
        raise ModelError(f"{edge_label(i, j)} is an active edge, not a false-edge candidate")
    return _scores(model, gamma, i, j, parents)[variant]


@dataclass
class FcsReport:
    per_edge: dict  # (i, j) -> {"psi": float, "psi_sc": float}
    normalized: bool
    psi_max: float = 0.0
    psi_sc_max: float = 0.0

    def __post_init__(self):
        self.psi_max = max((s["psi"] for s in self.per_edge.values()), default=0.0)
        self.psi_sc_max = max((s["psi_sc"] for s in self.per_edge.values()), default=0.0)

    @property
    def recoverable(self) -> dict[str, bool]:
        return {"sg": self.psi_max < 1.0, "scsg": self.psi_sc_max < 1.0}

    def score(self, i: int, j: int, variant: Variant = "sg") -> float:
        return self.per_edge[(i, j)]["psi" if variant == "sg" else "psi_sc"]

    def to_dict(self) -> dict:
        return {
            "normalized": self.normalized,
            "psi_max": self.psi_max,
            "psi_sc_max": self.psi_sc_max,
            "recoverable": self.recoverable,
            "edges": [
                {"edge": edge_label(i, j), "target": i + 1, "source": j + 1, **s}
                for (i, j), s in sorted(self.per_edge.items(), key=lambda kv: (kv[0][1], kv[0][0]))
            ],
        }


def fcs_report(
    model: MarModel,
    normalize: bool = False,
    variants: Iterable[str] = VARIANTS,
    method: str = "auto",
) -> FcsReport:
    """Scores for every cross-node edge absent from the model's support."""
    variants = tuple(variants)
    for v in variants:
        if v not in VARIANTS:
            raise ModelError(f"unknown variant {v!r}")
    gamma = stationary_covariance(model, method=method)
    if normalize:
        model, _ = normalize_model(model, gamma)
        gamma = stationary_covariance(model, method=method)
    per_edge = {}
    for i in range(model.n_nodes):
        parents = model.parents(i)
        for j in range(model.n_nodes):
            if j == i or j in parents:
                continue
            s = _scores(model, gamma, i, j, parents)
            per_edge[(i, j)] = {
                "psi": s["sg"] if "sg" in variants else float("nan"),
                "psi_sc": s["scsg"] if "scsg" in variants else float("nan"),
            }
    return FcsReport(per_edge, normalize)


@dataclass
class AssumptionAudit:
    max_signal_power: float
    min_connection_strength: float
    max_inv_active_cov_norm: float
    max_cross_cov_norm: float
    psi_max: float
    psi_sc_max: float
    per_node: list = field(default_factory=list)

    @property
    def flags(self) -> dict[str, bool]:
        """True marks a violated (or degenerate) assumption."""
        return {
            "connection_strength": not self.min_connection_strength > 0.0,
            "false_connection_score": self.psi_max >= 1.0,
            "false_connection_score_sc": self.psi_sc_max >= 1.0,
        }

    def to_dict(self) -> dict:
        return {
            "max_signal_power": self.max_signal_power,
            "min_connection_strength": self.min_connection_strength,
            "max_inv_active_cov_norm": self.max_inv_active_cov_norm,
            "max_cross_cov_norm": self.max_cross_cov_norm,
            "psi_max": self.psi_max,
            "psi_sc_max": self.psi_sc_max,
            "flags": self.flags,
            "per_node": self.per_node,
        }


def audit_assumptions(
    model: MarModel,
    gamma: Optional[StationaryCovariance] = None,
    pattern: Optional[SparsityPattern] = None,
) -> AssumptionAudit:
    """Single-model counterparts of the recovery theorem's constants.

    ``pattern`` overrides the support read from the coefficients; active
    blocks that are exactly zero then contribute nothing to the score sums
    and show up as a zero connection strength.
    """
    if gamma is None:
        gamma = stationary_covariance(model)
    if pattern is None:
        pattern = model.pattern()
    if pattern.n_nodes != model.n_nodes:
        raise ModelError("pattern and model disagree on node count")
    if not pattern.edges:
        raise ModelError("audit needs a nonempty active set")
    n = model.n_nodes
    strengths = [float(np.linalg.norm(model.block(i, j))) for i, j in pattern.edges]
    inv_norms, cross_norms, psi, psi_sc, per_node = [], [], [0.0], [0.0], []
    for i in range(n):
        parents = pattern.parents(i)
        rest = [j for j in range(n) if j not in parents]
        entry = {"node": i + 1, "parents": [k + 1 for k in parents]}
        if parents:
            r = sub_cov(gamma, parents, parents)
            w = np.linalg.eigvalsh(r)
            if w[0] <= 0:
                raise NumericalError(f"R_(S,S) singular at node {i + 1}: smallest eigenvalue {w[0]:.3g}")
            inv = float(1.0 / w[0])
            cross = float(np.linalg.norm(sub_cov(gamma, parents, rest), 2)) if rest else 0.0
            inv_norms.append(inv)
            cross_norms.append(cross)
            entry.update(inv_active_cov_norm=inv, cross_cov_norm=cross)
            dirs = {}
            for k in parents:
                a = model.block(i, k)
                nrm = np.linalg.norm(a)
                dirs[k] = a / nrm if nrm > 0 else np.zeros_like(a)
            for j in rest:
                if j == i:
                    continue
                blocks = predictor_matrix(gamma, parents, j).psi_blocks
                terms = {k: blocks[k].T @ dirs[k] for k in parents}
                psi.append(float(np.linalg.norm(sum(terms.values()))))
                psi_sc.append(float(np.linalg.norm(sum((v for k, v in terms.items() if k != i), np.zeros(model.order)))))
        per_node.append(entry)
    return AssumptionAudit(
        max_signal_power=float(np.max(gamma.node_powers)),
        min_connection_strength=min(strengths),
        max_inv_active_cov_norm=max(inv_norms, default=0.0),
        max_cross_cov_norm=max(cross_norms, default=0.0),
        psi_max=max(psi),
        psi_sc_max=max(psi_sc),
        per_node=per_node,
    )
