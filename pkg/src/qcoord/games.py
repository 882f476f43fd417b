"""Nonlocal games: definitions, a black-box referee, exact evaluation, and a
brute-force classical (shared-randomness) optimum.

Games are immutable. Trainers interact with a game only through
:func:`play_round` / :func:`play_batch`, which return (questions, answers,
verdict) triples; the question distribution and predicate stay private to the
referee.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import quantum as qt
from .policies import EntangledPolicy, FiniteHistorySpace

ENUMERATION_BUDGET = 20_000_000


@dataclass(frozen=True)
class GraphSpec:
    """Undirected simple graph; vertices are 0..num_vertices-1."""

    num_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        norm = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < self.num_vertices and 0 <= v < self.num_vertices):
                raise ValueError(f"edge ({u},{v}) outside vertex range")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        degree = [0] * self.num_vertices
        for u, v in self.edges:
            degree[u] += 1
            degree[v] += 1
        if any(d == 0 for d in degree):
            raise ValueError("graph has an isolated vertex")

    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.num_vertices)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return [sorted(a) for a in adj]


def tetra_graph() -> GraphSpec:
    """Complete graph on four vertices."""
    return GraphSpec(4, tuple((u, v) for u in range(4) for v in range(u + 1, 4)))


def cube_graph() -> GraphSpec:
    """Three-dimensional hypercube: vertices are bit strings differing in one bit."""
    edges = []
    for u in range(8):
        for bit in range(3):
            v = u ^ (1 << bit)
            if u < v:
                edges.append((u, v))
    return GraphSpec(8, tuple(edges))


def load_graph(path) -> GraphSpec:
    """Read an edge list: one '<u> <v>' pair per line, 0-indexed; blank lines
    and '#' comments ignored."""
    edges = []
    top = -1
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"malformed edge line: {line!r}")
            u, v = int(parts[0]), int(parts[1])
            top = max(top, u, v)
            edges.append((u, v))
    if not edges:
        raise ValueError("edge list is empty")
    return GraphSpec(top + 1, tuple(edges))


@dataclass(frozen=True)
class NonlocalGame:
    """Referee data: question distribution ``mu`` (shape = question alphabets)
    and 0/1 ``predicate`` (shape = question alphabets + answer alphabets).

    ``legal_answers[i][o]`` lists the answer choices worth enumerating for
    player i on question o when searching deterministic strategies; answers
    outside the list must be weakly dominated (the predicate rejects them
    outright), so restricting to it keeps the optimum exact.
    """

    name: str
    question_sizes: tuple[int, ...]
    answer_sizes: tuple[int, ...]
    mu: np.ndarray
    predicate: np.ndarray
    legal_answers: tuple[tuple[tuple[int, ...], ...], ...] = field(default=None)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != self.question_sizes:
            raise ValueError("mu shape must match question alphabets")
        if abs(mu.sum() - 1.0) > 1e-12 or mu.min() < 0:
            raise ValueError("mu must be a distribution")
        object.__setattr__(self, "mu", mu)
        pred = np.asarray(self.predicate)
        if pred.shape != self.question_sizes + self.answer_sizes:
            raise ValueError("predicate shape must be questions + answers")
        if not np.isin(pred, (0, 1)).all():
            raise ValueError("predicate must be 0/1 valued")
        object.__setattr__(self, "predicate", pred.astype(np.int8))
        if self.legal_answers is None:
            legal = tuple(
                tuple(tuple(range(a)) for _ in range(o))
                for o, a in zip(self.question_sizes, self.answer_sizes)
            )
            object.__setattr__(self, "legal_answers", legal)

    @property
    def players(self) -> int:
        return len(self.question_sizes)

    def space(self) -> FiniteHistorySpace:
        """Histories for a single-round game are just the questions."""
        return FiniteHistorySpace(self.question_sizes, self.answer_sizes)

    def slot_map(self, player: int) -> np.ndarray:
        """Answer encoding for policies: entry [o, k] is the answer meant by
        outcome slot k on question o. Slots cycle through the legal answers,
        so every slot is a legal move; for games without move restrictions
        this is the identity."""
        per_question = self.legal_answers[player]
        width = max(len(c) for c in per_question)
        out = np.empty((self.question_sizes[player], width), dtype=np.int64)
        for o, choices in enumerate(per_question):
            for k in range(width):
                out[o, k] = choices[k % len(choices)]
        return out


def make_chsh() -> NonlocalGame:
    """Two players, uniform binary questions; win iff a XOR b = x AND y."""
    pred = np.zeros((2, 2, 2, 2), dtype=np.int8)
    for x, y, a, b in product(range(2), repeat=4):
        pred[x, y, a, b] = int((a ^ b) == (x & y))
    return NonlocalGame("chsh", (2, 2), (2, 2), np.full((2, 2), 0.25), pred)


def make_ghz() -> NonlocalGame:
    """Three players; questions drawn from {000, 110, 101, 011}; win iff
    x OR y OR z equals the parity of the answers."""
    mu = np.zeros((2, 2, 2))
    for o in [(0, 0, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)]:
        mu[o] = 0.25
    pred = np.zeros((2, 2, 2, 2, 2, 2), dtype=np.int8)
    for x, y, z, a, b, c in product(range(2), repeat=6):
        pred[x, y, z, a, b, c] = int((x | y | z) == (a + b + c) % 2)
    return NonlocalGame("ghz", (2, 2, 2), (2, 2, 2), mu, pred)


def make_rendezvous(g: GraphSpec, name: str = "rendezvous") -> NonlocalGame:
    """Two players start on independent uniform vertices and each make one
    move; they win iff both moves follow an edge and land on the same vertex."""
    adj = g.adjacency()
    nv = g.num_vertices
    pred = np.zeros((nv, nv, nv, nv), dtype=np.int8)
    for o1 in range(nv):
        for o2 in range(nv):
            for w in adj[o1]:
                if w in adj[o2]:
                    pred[o1, o2, w, w] = 1
    mu = np.full((nv, nv), 1.0 / nv**2)
    legal = tuple(tuple(tuple(adj[o]) for o in range(nv)) for _ in range(2))
    return NonlocalGame(name, (nv, nv), (nv, nv), mu, pred, legal)


def game_registry() -> dict:
    return {
        "chsh": make_chsh,
        "ghz": make_ghz,
        "rendezvous-tetra": lambda: make_rendezvous(tetra_graph(), "rendezvous-tetra"),
        "rendezvous-cube": lambda: make_rendezvous(cube_graph(), "rendezvous-cube"),
    }


def make_game(name: str) -> NonlocalGame:
    registry = game_registry()
    if name not in registry:
        raise ValueError(f"unknown game {name!r}; available: {sorted(registry)}")
    return registry[name]()


# ---------------------------------------------------------------------------
# Referee
# ---------------------------------------------------------------------------


def _sample_questions(game: NonlocalGame, rng: np.random.Generator, n: int) -> np.ndarray:
    flat = rng.choice(game.mu.size, size=n, p=game.mu.ravel())
    return np.stack(np.unravel_index(flat, game.mu.shape), axis=1)


def play_round(game: NonlocalGame, policy, rng: np.random.Generator):
    """One black-box round: sample questions, let the policy answer, return
    (questions, answers, verdict)."""
    o = tuple(int(v) for v in _sample_questions(game, rng, 1)[0])
    a = policy.sample_action(o, rng).actions
    verdict = int(game.predicate[o + a])
    return o, a, verdict


def play_batch(game: NonlocalGame, policy, rng: np.random.Generator, n: int):
    """Vectorized referee: n independent rounds under the same black-box
    contract as :func:`play_round`.

    Uses ``policy.sample_batch(questions, rng)`` when available (returning an
    (n, players) answer array), falling back to per-round sampling.
    Returns (questions (n, players), answers (n, players), verdicts (n,)).
    """
    questions = _sample_questions(game, rng, n)
    if hasattr(policy, "sample_batch"):
        answers = np.asarray(policy.sample_batch(questions, rng))
    else:
        # group identical questions: one exact table per distinct question,
        # then vectorized categorical sampling
        flat_q = np.ravel_multi_index(tuple(questions.T), game.question_sizes)
        answers_flat = np.zeros(n, dtype=np.int64)
        for q in np.unique(flat_q):
            sel = np.where(flat_q == q)[0]
            o = np.unravel_index(q, game.question_sizes)
            table = policy.joint_distribution(tuple(int(v) for v in o)).reshape(-1)
            table = np.clip(table, 0.0, None)
            answers_flat[sel] = rng.choice(table.size, size=sel.size, p=table / table.sum())
        answers = np.stack(np.unravel_index(answers_flat, game.answer_sizes), axis=1)
    idx = tuple(questions[:, i] for i in range(game.players)) + tuple(
        answers[:, i] for i in range(game.players)
    )
    verdicts = game.predicate[idx].astype(np.int64)
    return questions, answers, verdicts


# ---------------------------------------------------------------------------
# Exact evaluation and classical optimum
# ---------------------------------------------------------------------------


def exact_win_probability(game: NonlocalGame, policy) -> float:
    """sum_o mu(o) sum_a pi(a|o) V(a|o), computed by full enumeration."""
    total = 0.0
    for o in product(*(range(s) for s in game.question_sizes)):
        w = float(game.mu[o])
        if w == 0.0:
            continue
        table = policy.joint_distribution(o)
        total += w * float(np.sum(table * game.predicate[o]))
    return total


def _best_response_last(game: NonlocalGame, fixed: list) -> tuple[float, np.ndarray]:
    """Exact best response of the last player against deterministic strategies
    of the others; returns (win probability, strategy)."""
    n = game.players
    o_last = game.question_sizes[-1]
    weighted = game.mu[..., None] * _select_predicate(game, fixed)
    resp = weighted.sum(axis=tuple(range(n - 1)))  # (O_last, A_last)
    strategy = resp.argmax(axis=1)
    return float(resp.max(axis=1).sum()), strategy


def _select_predicate(game: NonlocalGame, fixed: list) -> np.ndarray:
    """Predicate restricted to fixed deterministic strategies of players
    0..n-2; result has shape (O_1..O_n, A_n)."""
    pred = game.predicate
    n = game.players
    out = pred
    # take pred[o_1..o_n, f_1(o_1), .., f_{n-1}(o_{n-1}), a_n] one player at a time
    for i, f in enumerate(fixed):
        o_axis_len = game.question_sizes[i]
        idx = np.asarray(f)
        shape = [1] * out.ndim
        shape[i] = o_axis_len
        take = idx.reshape(shape)
        out = np.take_along_axis(out, np.broadcast_to(take, out.shape[:n] + (1,) + out.shape[n + 1 :]), axis=n)
        out = out.squeeze(axis=n)
    return out


def classical_optimum(game: NonlocalGame):
    """Maximum win probability over deterministic factorized strategies, which
    by convexity equals the shared-randomness optimum.

    Enumerates all but the last player over their legal answer maps and
    best-responds the last player exactly. Returns (value, strategy profile)
    with one answer map per player.
    """
    n = game.players
    if n < 2:
        raise ValueError("need at least two players")
    spaces = []
    for i in range(n - 1):
        per_question = game.legal_answers[i]
        count = int(np.prod([len(c) for c in per_question]))
        spaces.append((per_question, count))
    inner = int(np.prod(game.question_sizes)) * game.answer_sizes[-1]
    total = int(np.prod([c for _, c in spaces])) * inner
    if total > ENUMERATION_BUDGET:
        raise ValueError(f"enumeration cost {total} exceeds budget {ENUMERATION_BUDGET}")

    best_value = -1.0
    best_profile = None
    choice_lists = [per_question for per_question, _ in spaces]
    for combo in product(*(product(*choices) for choices in choice_lists)):
        fixed = [np.asarray(f, dtype=np.int64) for f in combo]
        value, last = _best_response_last(game, fixed)
        if value > best_value + 1e-15:
            best_value = value
            best_profile = tuple(fixed) + (last,)
    return best_value, best_profile


# ---------------------------------------------------------------------------
# The known optimal CHSH quantum strategy
# ---------------------------------------------------------------------------


def _angle_projector(theta: float) -> np.ndarray:
    v = np.array([np.cos(theta), np.sin(theta)], dtype=complex)
    return np.outer(v, v.conj())


def _basis_povm(theta: float) -> qt.Povm:
    p = _angle_projector(theta)
    return qt.Povm(np.stack([p, np.eye(2) - p]))


def chsh_quantum_policy() -> EntangledPolicy:
    """The Bell-state strategy winning CHSH with probability cos^2(pi/8):
    player A measures in the computational or diagonal basis, player B in
    bases rotated by +-pi/8."""
    space = FiniteHistorySpace((2, 2), (2, 2))
    alice = [_basis_povm(0.0), _basis_povm(np.pi / 4)]
    bob = [_basis_povm(np.pi / 8), _basis_povm(-np.pi / 8)]
    return EntangledPolicy(space, qt.bell_state(), [alice, bob])
