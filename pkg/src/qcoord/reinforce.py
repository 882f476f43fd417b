"""Score-function trainer for nonlocal games with entropy regularization.

The policy is shared-entanglement over the game's questions: tabular complex
logit matrices per (agent, question) plus an unconstrained density factor.
Policies answer through the game's outcome slots (legal moves; the identity
encoding for unrestricted games), so measurement outcomes always name legal
answers. The referee is a black box: training consumes only sampled
(question, answer, verdict) rounds, with the policy's own log-probabilities
supplying the entropy weights; exact win probabilities are computed from the
policy tables solely for logging and best-policy selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quantum as qt
from .games import NonlocalGame, exact_win_probability, play_batch
from .optim import AdamState, adam_step, clone_params
from .policies import ActionSample, EntangledPolicy, FiniteHistorySpace

LOG_PROB_FLOOR = 1e-12

#: per-game default local dimension; two-outcome games need only qubits,
#: the rendezvous games need d = 3 to express their best entangled strategies
DEFAULT_AGENT_DIM = {
    "chsh": 2,
    "ghz": 2,
    "rendezvous-tetra": 3,
    "rendezvous-cube": 3,
}


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class GameTrainConfig:
    """Hyperparameters; the defaults reproduce the reference setup
    (batch 512, learning rate 3e-2, entropy coefficient 0.2, 5000 steps).

    ``agent_dim=None`` resolves to the per-game default."""

    batch_size: int = 512
    learning_rate: float = 3e-2
    entropy_coef: float = 0.2
    steps: int = 5000
    seed: int = 0
    conditioning_coef: float = 1e-3
    agent_dim: int | None = None
    init_scale: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 1:
            raise ValueError("batch_size and steps must be at least 1")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be non-negative")

    def resolve_dim(self, game: NonlocalGame) -> int:
        if self.agent_dim is not None:
            return self.agent_dim
        return DEFAULT_AGENT_DIM.get(game.name, 2)


@dataclass
class TrainRecord:
    """Per-step training series."""

    win_prob: np.ndarray
    empirical_win: np.ndarray
    entropy: np.ndarray
    loss: np.ndarray
    cond_penalty: np.ndarray

    @classmethod
    def empty(cls, steps: int) -> "TrainRecord":
        return cls(*(np.zeros(steps) for _ in range(5)))


def init_game_params(game: NonlocalGame, cfg: GameTrainConfig, rng: np.random.Generator) -> dict:
    """Fresh trainable parameters: one logit stack per (agent, question, slot)
    and a shared density factor of joint dimension d^players."""
    d = cfg.resolve_dim(game)
    params = {}
    for i in range(game.players):
        slots = game.slot_map(i).shape[1]
        shape = (game.question_sizes[i], slots, d, d)
        params[f"logits_{i}"] = cfg.init_scale * (
            rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        )
    joint = d**game.players
    params["factor"] = cfg.init_scale * (
        rng.standard_normal((joint, joint)) + 1j * rng.standard_normal((joint, joint))
    )
    return params


def params_to_policy(params: dict, game: NonlocalGame) -> EntangledPolicy:
    """Materialize the trainable parameters as an entangled policy over the
    game's answer alphabets (slot effects scattered onto their answers)."""
    space = game.space()
    measurements = []
    for i in range(space.n):
        p, _, _ = qt.quantum_softmax_batch(params[f"logits_{i}"])
        smap = game.slot_map(i)
        per_history = []
        for o in range(space.history_sizes[i]):
            d = p.shape[-1]
            elements = np.zeros((space.action_sizes[i], d, d), dtype=complex)
            for k in range(smap.shape[1]):
                elements[smap[o, k]] += p[o, k]
            per_history.append(qt.Povm(elements))
        measurements.append(per_history)
    return EntangledPolicy(space, qt.DensityFactor(params["factor"]), measurements)


@dataclass
class TrainResult:
    params: dict
    best_params: dict
    best_step: int
    best_win: float
    record: TrainRecord
    game: NonlocalGame

    def best_policy(self) -> EntangledPolicy:
        return params_to_policy(self.best_params, self.game)


@dataclass
class TableForward:
    """Slot-space policy tables over (questions..., slots...) plus the
    intermediates needed for the backward pass."""

    table: np.ndarray
    rho: np.ndarray
    stacks: list
    normalizers: list
    caches: list
    factor: np.ndarray


def table_forward(params: dict, n_agents: int) -> TableForward:
    stacks, normalizers, caches = [], [], []
    for i in range(n_agents):
        p, s, cache = qt.quantum_softmax_batch(params[f"logits_{i}"])
        stacks.append(p)
        normalizers.append(s)
        caches.append(cache)
    rho = qt.density_from_factor(qt.DensityFactor(params["factor"])).matrix
    table = qt.joint_table(rho, stacks, lead="grid")
    return TableForward(table, rho, stacks, normalizers, caches, params["factor"])


def table_backward(fwd: TableForward, table_cotangent: np.ndarray, conditioning_coef: float) -> dict:
    """Backpropagate a loss cotangent on the policy tables (plus the
    conditioning penalty scaled by ``conditioning_coef``) to all parameters."""
    rho_bar, stack_bars = qt.joint_table_vjp(fwd.rho, fwd.stacks, table_cotangent, lead="grid")
    grads = {}
    for i, cache in enumerate(fwd.caches):
        s_bar = None
        if conditioning_coef:
            s_bar = conditioning_coef * qt.conditioning_penalty_grad(fwd.normalizers[i])
        grads[f"logits_{i}"] = qt.quantum_softmax_vjp_batch(cache, stack_bars[i], s_bar)
    grads["factor"] = qt.density_from_factor_vjp(fwd.factor, rho_bar)
    return grads


def total_conditioning_penalty(fwd: TableForward) -> float:
    return float(
        sum(np.sum(np.abs(s - np.eye(s.shape[-1])) ** 2) for s in fwd.normalizers)
    )


class TablePolicy:
    """Policy view over precomputed slot tables.

    ``joint_distribution`` reports answer-space probabilities (slot mass
    scattered onto the answers it encodes); ``sample_batch`` returns answers
    for the referee while remembering the sampled slots in ``last_slots`` for
    the gradient step.
    """

    def __init__(self, space: FiniteHistorySpace, slot_table: np.ndarray, slot_maps):
        self.space = space
        self.slot_table = slot_table
        self.slot_maps = [np.asarray(m) for m in slot_maps]
        self.slot_sizes = tuple(t for t in slot_table.shape[space.n :])
        flat = slot_table.reshape(space.joint_history_count, -1)
        flat = np.clip(flat, 0.0, None)
        self._rows = flat / flat.sum(axis=1, keepdims=True)
        self.last_slots: np.ndarray | None = None

    def _answers_from_slots(self, questions: np.ndarray, slots: np.ndarray) -> np.ndarray:
        cols = []
        for i, smap in enumerate(self.slot_maps):
            cols.append(smap[questions[:, i], slots[:, i]])
        return np.stack(cols, axis=1)

    def joint_distribution(self, h) -> np.ndarray:
        idx = np.ravel_multi_index(tuple(h), self.space.history_sizes)
        slot_probs = self._rows[idx].reshape(self.slot_sizes)
        out = np.zeros(self.space.action_sizes)
        for slot in np.ndindex(*self.slot_sizes):
            answer = tuple(self.slot_maps[i][h[i], slot[i]] for i in range(self.space.n))
            out[answer] += slot_probs[slot]
        return out

    def sample_action(self, h, rng: np.random.Generator) -> ActionSample:
        table = self.joint_distribution(h)
        idx = rng.choice(table.size, p=table.ravel())
        actions = np.unravel_index(idx, table.shape)
        logp = float(np.log(max(table[actions], LOG_PROB_FLOOR)))
        return ActionSample(tuple(int(a) for a in actions), None, logp, None)

    def sample_batch(self, questions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        q_flat = np.ravel_multi_index(tuple(questions.T), self.space.history_sizes)
        rows = self._rows[q_flat]
        u = rng.random((questions.shape[0], 1))
        idx = np.minimum((rows.cumsum(axis=1) < u).sum(axis=1), rows.shape[1] - 1)
        slots = np.stack(np.unravel_index(idx, self.slot_sizes), axis=1)
        self.last_slots = slots
        return self._answers_from_slots(questions, slots)


def surrogate_loss(batch, fwd: TableForward, cfg: GameTrainConfig):
    """Surrogate whose gradient is the REINFORCE estimate of the entropy-
    regularized win probability, minus the conditioning penalty.

    ``batch`` is (questions (N, n), slots (N, n), verdicts (N,)) with slots in
    the policy's outcome encoding. Each round contributes
    sg(V - alpha (log pi + 1)) log pi; the per-cell aggregation below is the
    same sum grouped by (question, slot) cell.

    Returns (loss, grads, metrics) with loss the negated surrogate plus the
    scaled conditioning penalty.
    """
    questions, slots, verdicts = batch
    n_rounds = questions.shape[0]
    n_agents = questions.shape[1]
    cell_idx = tuple(questions[:, i] for i in range(n_agents)) + tuple(
        slots[:, i] for i in range(n_agents)
    )
    probs = np.clip(fwd.table[cell_idx], LOG_PROB_FLOOR, None)
    logp = np.log(probs)
    weights = verdicts - cfg.entropy_coef * (logp + 1.0)
    surrogate = float(np.mean(weights * logp))

    # d(-surrogate)/d table cell, aggregated over the batch; the weights are
    # held constant (stop-gradient)
    cot = np.zeros_like(fwd.table)
    np.add.at(cot, cell_idx, -weights / (n_rounds * probs))
    grads = table_backward(fwd, cot, cfg.conditioning_coef)

    penalty = total_conditioning_penalty(fwd)
    loss = -surrogate + cfg.conditioning_coef * penalty
    metrics = {
        "empirical_win": float(np.mean(verdicts)),
        "cond_penalty": penalty,
        "loss": loss,
    }
    return loss, grads, metrics


def slot_win_weights(game: NonlocalGame) -> np.ndarray:
    """mu(o) V(answers(slots)|o) over the slot-space grid, so that the exact
    win probability of slot tables is a single contraction."""
    q_grid = np.meshgrid(*(np.arange(s) for s in game.question_sizes), indexing="ij")
    slot_sizes = [game.slot_map(i).shape[1] for i in range(game.players)]
    s_grid = np.meshgrid(*(np.arange(s) for s in slot_sizes), indexing="ij")
    n = game.players
    idx_q = []
    idx_a = []
    for i in range(n):
        q = q_grid[i].reshape(q_grid[i].shape + (1,) * n)
        s = s_grid[i].reshape((1,) * n + s_grid[i].shape)
        idx_q.append(np.broadcast_arrays(q, s)[0])
        idx_a.append(game.slot_map(i)[q, s])
    pred = game.predicate[tuple(idx_q) + tuple(idx_a)]
    return game.mu.reshape(game.question_sizes + (1,) * n) * pred


def _exact_entropy(table: np.ndarray, game: NonlocalGame) -> float:
    t = np.clip(table, 0.0, None)
    logt = np.log(np.clip(t, LOG_PROB_FLOOR, None))
    per_question = -(t * logt).sum(axis=tuple(range(game.players, 2 * game.players)))
    return float(np.sum(game.mu * per_question))


def train(
    game: NonlocalGame,
    cfg: GameTrainConfig,
    rng: np.random.Generator,
    params: dict | None = None,
) -> TrainResult:
    """REINFORCE with entropy regularization; returns the best policy over
    the run by exact win probability."""
    space = game.space()
    slot_maps = [game.slot_map(i) for i in range(game.players)]
    if params is None:
        params = init_game_params(game, cfg, rng)
    state = AdamState.for_params(params)
    record = TrainRecord.empty(cfg.steps)
    win_weights = slot_win_weights(game)  # logging/selection only
    best_win = -1.0
    best_step = -1
    best_params = clone_params(params)

    for step in range(cfg.steps):
        fwd = table_forward(params, game.players)
        view = TablePolicy(space, fwd.table, slot_maps)
        questions, _, verdicts = play_batch(game, view, rng, cfg.batch_size)
        batch = (questions, view.last_slots, verdicts)
        loss, grads, metrics = surrogate_loss(batch, fwd, cfg)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at step {step}")

        win = float(np.sum(win_weights * np.clip(fwd.table, 0.0, None)))
        record.win_prob[step] = win
        record.empirical_win[step] = metrics["empirical_win"]
        record.entropy[step] = _exact_entropy(fwd.table, game)
        record.loss[step] = loss
        record.cond_penalty[step] = metrics["cond_penalty"]
        if win > best_win:
            best_win = win
            best_step = step
            best_params = clone_params(params)

        adam_step(params, grads, state, cfg.learning_rate)

    return TrainResult(params, best_params, best_step, best_win, record, game)


#: published upper bounds on the quantum win probability per game
QUANTUM_BOUNDS = {
    "chsh": float(np.cos(np.pi / 8) ** 2),
    "ghz": 1.0,
    "rendezvous-tetra": 0.64506,
    "rendezvous-cube": 0.32253,
}

CLASSICAL_OPTIMA = {
    "chsh": 0.75,
    "ghz": 0.75,
    "rendezvous-tetra": 0.6250,
    "rendezvous-cube": 0.3125,
}


def quantum_advantage_pct(win: float, classical_opt: float, quantum_bound: float) -> float:
    """Learned advantage as a percentage of the maximum attainable advantage."""
    gap = quantum_bound - classical_opt
    if gap <= 0:
        raise ValueError("quantum bound must exceed the classical optimum")
    return 100.0 * max(0.0, win - classical_opt) / gap


def evaluate_policy(game: NonlocalGame, policy) -> float:
    """Exact win probability of any policy object (delegates to the game)."""
    return exact_win_probability(game, policy)
