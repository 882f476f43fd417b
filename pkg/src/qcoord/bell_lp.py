"""Certify membership of a joint conditional policy in the shared-randomness
polytope (the convex hull of deterministic factorized policies).

A policy over finite spaces is a point in R^(H*A). Membership is decided by
linear programming over the polytope's vertices: an inside verdict carries a
convex-combination witness, an outside verdict carries a separating
hyperplane (a Bell inequality), and both are re-verifiable by direct
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .policies import FiniteHistorySpace

VERTEX_BUDGET = 1_000_000
INSIDE_RESIDUAL_TOL = 1e-9
VIOLATION_FLOOR = 1e-7


@dataclass(frozen=True)
class PolicyTable:
    """Flattened conditional policy: probs[h, a] over joint histories h and
    joint actions a (row-major multi-index order)."""

    space: FiniteHistorySpace
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        want = (self.space.joint_history_count, self.space.joint_action_count)
        if p.shape != want:
            raise ValueError(f"probs must have shape {want}, got {p.shape}")
        if p.min() < -1e-12 or p.max() > 1 + 1e-12:
            raise ValueError("probabilities outside [0, 1]")
        rows = p.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > 1e-9:
            raise ValueError("each history row must sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def vector(self) -> np.ndarray:
        return self.probs.reshape(-1)


def tabulate_policy(policy) -> PolicyTable:
    """Evaluate any joint policy over its whole space into a PolicyTable."""
    space = policy.space
    rows = []
    for h in space.joint_histories():
        rows.append(policy.joint_distribution(h).reshape(-1))
    return PolicyTable(space, np.stack(rows))


@dataclass(frozen=True)
class BellCertificate:
    """Re-verifiable membership certificate.

    inside: ``weights`` is a convex combination of vertices matching the
    policy within ``residual``. outside: ``hyperplane = (c, b)`` satisfies
    c.v <= b on every vertex while c.p - b = ``violation`` > 0.
    """

    verdict: str
    violation: float
    weights: np.ndarray | None = None
    residual: float | None = None
    hyperplane: tuple[np.ndarray, float] | None = None


def vertex_count(space: FiniteHistorySpace) -> int:
    count = 1
    for h, a in zip(space.history_sizes, space.action_sizes):
        count *= a**h
    return count


def _agent_maps(space: FiniteHistorySpace, agent: int) -> np.ndarray:
    """All deterministic answer maps of one agent, shape (A_i^H_i, H_i)."""
    h, a = space.history_sizes[agent], space.action_sizes[agent]
    maps = np.array(list(product(range(a), repeat=h)), dtype=np.int64)
    return maps.reshape(-1, h)


def vertex_answer_matrix(space: FiniteHistorySpace) -> np.ndarray:
    """Compact vertex encoding: entry [v, h] is the flat joint answer a
    deterministic factorized policy v gives on joint history h."""
    if vertex_count(space) > VERTEX_BUDGET:
        raise ValueError(
            f"{vertex_count(space)} vertices exceed the budget {VERTEX_BUDGET}"
        )
    per_agent = [_agent_maps(space, i) for i in range(space.n)]
    histories = np.array(list(space.joint_histories()), dtype=np.int64)  # (H, n)
    answers = None
    for i, maps in enumerate(per_agent):
        a_i = maps[:, histories[:, i]]  # (K_i, H)
        if answers is None:
            answers = a_i
        else:
            v, h = answers.shape
            k = a_i.shape[0]
            answers = (
                answers[:, None, :] * space.action_sizes[i] + a_i[None, :, :]
            ).reshape(v * k, h)
    return answers


def enumerate_vertices(space: FiniteHistorySpace) -> np.ndarray:
    """All deterministic factorized policies as 0/1 tables (V, H, A)."""
    answers = vertex_answer_matrix(space)
    v, h = answers.shape
    a = space.joint_action_count
    tables = np.zeros((v, h, a), dtype=np.uint8)
    rows = np.repeat(np.arange(v), h)
    cols = np.tile(np.arange(h), v)
    tables[rows, cols, answers.reshape(-1)] = 1
    return tables


def _vertex_matrix_sparse(answers: np.ndarray, action_count: int) -> sparse.csc_matrix:
    """Vertices as columns of a sparse (H*A, V) matrix."""
    v, h = answers.shape
    rows = (np.arange(h)[None, :] * action_count + answers).reshape(-1)
    cols = np.repeat(np.arange(v), h)
    data = np.ones(v * h)
    return sparse.csc_matrix((data, (rows, cols)), shape=(h * action_count, v))


def _separating_hyperplane(vmat: sparse.csc_matrix, target: np.ndarray):
    """max_(c,b) c.target - b subject to c.v - b <= 0 on all vertices and
    |c| <= 1; the optimum is 0 iff the target is in the hull."""
    dim = target.size
    n_vert = vmat.shape[1]
    a_ub = sparse.hstack([vmat.T.tocsc(), -np.ones((n_vert, 1))], format="csc")
    c_obj = np.concatenate([-target, [1.0]])
    bounds = [(-1.0, 1.0)] * dim + [(-dim, dim)]
    res = linprog(
        c_obj, A_ub=a_ub, b_ub=np.zeros(n_vert), bounds=bounds, method="highs"
    )
    if not res.success:
        raise RuntimeError(f"separating LP failed: {res.message}")
    c = res.x[:dim]
    b = float(res.x[dim])
    return c, b, float(np.dot(c, target) - b)


def _decomposition_weights(vmat: sparse.csc_matrix, target: np.ndarray) -> np.ndarray:
    n_vert = vmat.shape[1]
    a_eq = sparse.vstack([vmat, np.ones((1, n_vert))], format="csc")
    b_eq = np.concatenate([target, [1.0]])
    res = linprog(
        np.zeros(n_vert), A_eq=a_eq, b_eq=b_eq, bounds=(0.0, None), method="highs"
    )
    if not res.success:
        raise RuntimeError(f"decomposition LP failed: {res.message}")
    return np.clip(res.x, 0.0, None)


def membership(table: PolicyTable, space: FiniteHistorySpace | None = None) -> BellCertificate:
    """Decide whether the policy lies in the shared-randomness polytope.

    Runs the separating LP first; a maximal violation at or below the
    floor (1e-7) is treated as numerically inside and backed by an explicit
    convex decomposition.
    """
    space = space or table.space
    answers = vertex_answer_matrix(space)
    vmat = _vertex_matrix_sparse(answers, space.joint_action_count)
    target = table.vector
    c, b, violation = _separating_hyperplane(vmat, target)
    if violation > VIOLATION_FLOOR:
        return BellCertificate(
            verdict="outside", violation=violation, hyperplane=(c, float(b))
        )
    weights = _decomposition_weights(vmat, target)
    weights = weights / weights.sum()
    residual = float(np.max(np.abs(vmat @ weights - target)))
    return BellCertificate(
        verdict="inside", violation=max(violation, 0.0), weights=weights, residual=residual
    )


def verify_certificate(
    cert: BellCertificate, table: PolicyTable, space: FiniteHistorySpace | None = None
) -> bool:
    """Re-check a certificate by direct arithmetic against all vertices."""
    space = space or table.space
    answers = vertex_answer_matrix(space)
    vmat = _vertex_matrix_sparse(answers, space.joint_action_count)
    target = table.vector
    if cert.verdict == "inside":
        w = np.asarray(cert.weights, dtype=float)
        if w is None or w.min() < -1e-12 or abs(w.sum() - 1.0) > 1e-8:
            return False
        return float(np.max(np.abs(vmat @ w - target))) <= 1e-8
    if cert.verdict == "outside":
        c, b = cert.hyperplane
        c = np.asarray(c, dtype=float)
        on_vertices = float((vmat.T @ c).max())
        if on_vertices > b + 1e-9:
            return False
        return float(np.dot(c, target) - b) >= cert.violation - 1e-9
    return False
