"""Modified multi-agent PPO for the queueing task.

The joint policy is split into a coordinator that samples an advice pair and
per-agent actors that turn advice into routing actions. Two coordinator
kinds are supported: ``quantum`` (a fixed shared Bell state measured through
per-agent networks emitting measurement logits) and ``classical`` (a learned
history-independent distribution over a shared symbol). Value and cost
critics are centralized; a PID-controlled Lagrange multiplier enforces the
average wait-time constraint. All networks are small tanh MLPs with
hand-written backward passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import quantum as qt
from .optim import AdamState, adam_step, clone_params
from .queueing import QueueParams, QueueTrajectory, evaluate, reset, transition_batch

LOG_FLOOR = 1e-12
RATIO_CLAMP = 20.0


# ---------------------------------------------------------------------------
# Tiny MLP with manual reverse mode
# ---------------------------------------------------------------------------


def mlp_params(prefix: str, sizes, rng: np.random.Generator, scale: float = 1.0) -> dict:
    """Xavier-initialized weights/biases under names '<prefix>_w<k>' / '_b<k>'."""
    params = {}
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        limit = scale * np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{prefix}_w{k}"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"{prefix}_b{k}"] = np.zeros(fan_out)
    return params


def mlp_layer_count(params: dict, prefix: str) -> int:
    k = 0
    while f"{prefix}_w{k}" in params:
        k += 1
    return k


def mlp_forward(params: dict, prefix: str, x: np.ndarray):
    """Forward pass (tanh hidden, linear output); returns (y, cache)."""
    layers = mlp_layer_count(params, prefix)
    acts = [np.asarray(x, dtype=float)]
    h = acts[0]
    for k in range(layers):
        z = h @ params[f"{prefix}_w{k}"] + params[f"{prefix}_b{k}"]
        h = np.tanh(z) if k < layers - 1 else z
        acts.append(h)
    return h, acts


def mlp_backward(params: dict, prefix: str, acts, dy: np.ndarray, grads: dict) -> np.ndarray:
    """Accumulate parameter gradients for a batch cotangent dy; returns dx."""
    layers = mlp_layer_count(params, prefix)
    d = np.asarray(dy, dtype=float)
    for k in reversed(range(layers)):
        if k < layers - 1:
            d = d * (1.0 - acts[k + 1] ** 2)  # tanh'
        gw = acts[k].T @ d
        gb = d.sum(axis=0)
        grads[f"{prefix}_w{k}"] = grads.get(f"{prefix}_w{k}", 0.0) + gw
        grads[f"{prefix}_b{k}"] = grads.get(f"{prefix}_b{k}", 0.0) + gb
        d = d @ params[f"{prefix}_w{k}"].T
    return d


def mlp_forward_backward(params: dict, prefix: str, x: np.ndarray):
    """Forward values plus a closure mapping an output cotangent to gradients."""
    y, acts = mlp_forward(params, prefix, x)

    def backward(dy: np.ndarray):
        grads: dict = {}
        dx = mlp_backward(params, prefix, acts, dy, grads)
        return grads, dx

    return y, backward


# ---------------------------------------------------------------------------
# Coordinators
# ---------------------------------------------------------------------------


def obs_features(x: np.ndarray) -> np.ndarray:
    """Per-agent observation featurization (request size and its log)."""
    x = np.asarray(x, dtype=float)
    return np.stack([x, np.log1p(x)], axis=-1)


@dataclass(frozen=True)
class QuantumCoordinator:
    """Fixed shared two-qubit state; per-agent networks map the local
    observation to 2-outcome qubit measurement logits (16 reals)."""

    rho: np.ndarray = field(default_factory=lambda: qt.bell_state().matrix)
    hidden: tuple[int, ...] = (32, 32)

    @property
    def advice_sizes(self) -> tuple[int, int]:
        return (2, 2)

    def init_params(self, rng: np.random.Generator) -> dict:
        params = {}
        for i in range(2):
            params.update(mlp_params(f"coord{i}", (2, *self.hidden, 16), rng))
        return params

    def forward(self, params: dict, obs: np.ndarray):
        """q tables (B, 2, 2) for an observation batch (B, 2), plus cache."""
        caches = []
        stacks = []
        normalizers = []
        for i in range(2):
            feats = obs_features(obs[:, i])
            out, acts = mlp_forward(params, f"coord{i}", feats)
            z = (out[:, :8] + 1j * out[:, 8:]).reshape(-1, 2, 2, 2)
            p, s, qs_cache = qt.quantum_softmax_batch(z)
            stacks.append(p)
            normalizers.append(s)
            caches.append((acts, qs_cache))
        table = qt.joint_table(self.rho, stacks, lead="batch")
        return table, {"stacks": stacks, "normalizers": normalizers, "caches": caches}

    def backward(self, params: dict, obs: np.ndarray, cache, table_cot: np.ndarray,
                 conditioning_coef: float, grads: dict) -> None:
        _, stack_bars = qt.joint_table_vjp(self.rho, cache["stacks"], table_cot, lead="batch")
        for i in range(2):
            acts, qs_cache = cache["caches"][i]
            s_bar = None
            if conditioning_coef:
                batch = cache["normalizers"][i].shape[0]
                s_bar = (conditioning_coef / batch) * qt.conditioning_penalty_grad(
                    cache["normalizers"][i]
                )
            z_bar = qt.quantum_softmax_vjp_batch(qs_cache, stack_bars[i], s_bar)
            flat = z_bar.reshape(-1, 8)
            dy = np.concatenate([flat.real, flat.imag], axis=1)
            mlp_backward(params, f"coord{i}", acts, dy, grads)

    def conditioning_penalty(self, cache) -> float:
        total = 0.0
        for s in cache["normalizers"]:
            total += float(np.mean(np.sum(np.abs(s - np.eye(2)) ** 2, axis=(1, 2))))
        return total


@dataclass(frozen=True)
class ClassicalCoordinator:
    """Shared-randomness coordinator: both agents receive the same symbol,
    drawn from a learned history-independent distribution."""

    symbols: int = 4

    @property
    def advice_sizes(self) -> tuple[int, int]:
        return (self.symbols, self.symbols)

    def init_params(self, rng: np.random.Generator) -> dict:
        return {"coord_logits": 1e-2 * rng.standard_normal(self.symbols)}

    def forward(self, params: dict, obs: np.ndarray):
        logits = params["coord_logits"]
        z = logits - logits.max()
        e = np.exp(z)
        q = e / e.sum()
        n = obs.shape[0]
        table = np.zeros((n, self.symbols, self.symbols))
        idx = np.arange(self.symbols)
        table[:, idx, idx] = q
        return table, {"q": q}

    def backward(self, params: dict, obs: np.ndarray, cache, table_cot: np.ndarray,
                 conditioning_coef: float, grads: dict) -> None:
        q = cache["q"]
        idx = np.arange(self.symbols)
        dq = table_cot[:, idx, idx].sum(axis=0)
        # softmax jacobian
        g = q * (dq - float(np.dot(dq, q)))
        grads["coord_logits"] = grads.get("coord_logits", 0.0) + g

    def conditioning_penalty(self, cache) -> float:
        return 0.0


def coordinator_prob(coordinator, params: dict, obs, advice):
    """Probability of one advice pair at one observation, with gradients for
    every coordinator parameter. The probabilities over all advice pairs sum
    to one by construction."""
    obs = np.asarray(obs, dtype=float)[None, :]
    table, cache = coordinator.forward(params, obs)
    j1, j2 = int(advice[0]), int(advice[1])
    prob = float(table[0, j1, j2])
    cot = np.zeros_like(table)
    cot[0, j1, j2] = 1.0
    grads: dict = {}
    coordinator.backward(params, obs, cache, cot, 0.0, grads)
    return prob, grads


# ---------------------------------------------------------------------------
# Actors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActorHeads:
    """Per-agent action policies pi_i(a | x_i, obs_i).

    Trivial actors pass the advice through as the action (valid only when the
    advice alphabet is the action alphabet); learned actors are small MLPs on
    (observation features, one-hot advice).
    """

    trivial: bool
    advice_sizes: tuple[int, int]
    hidden: tuple[int, ...] = (32,)

    def init_params(self, rng: np.random.Generator) -> dict:
        if self.trivial:
            return {}
        params = {}
        for i in range(2):
            in_dim = 2 + self.advice_sizes[i]
            params.update(mlp_params(f"actor{i}", (in_dim, *self.hidden, 2), rng))
        return params

    def _inputs(self, obs_i: np.ndarray, advice_i: np.ndarray, size: int) -> np.ndarray:
        onehot = np.eye(size)[advice_i]
        return np.concatenate([obs_features(obs_i), onehot], axis=1)

    def probs(self, params: dict, obs: np.ndarray, advice: np.ndarray):
        """Action probabilities per agent: list of (B, 2); plus caches."""
        if self.trivial:
            return None, None
        out = []
        caches = []
        for i in range(2):
            x = self._inputs(obs[:, i], advice[:, i], self.advice_sizes[i])
            logits, acts = mlp_forward(params, f"actor{i}", x)
            z = logits - logits.max(axis=1, keepdims=True)
            e = np.exp(z)
            p = e / e.sum(axis=1, keepdims=True)
            out.append(p)
            caches.append((acts, p))
        return out, caches

    def backward(self, params: dict, caches, dprobs: list, grads: dict) -> None:
        for i in range(2):
            acts, p = caches[i]
            dp = dprobs[i]
            dz = p * (dp - (dp * p).sum(axis=1, keepdims=True))
            mlp_backward(params, f"actor{i}", acts, dz, grads)


# ---------------------------------------------------------------------------
# Config, Lagrange state, GAE, PID
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MappoConfig:
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 4
    minibatch: int = 256
    lr_networks: float = 3e-4
    lr_logits: float = 1e-3
    lr_critic: float = 1e-3
    entropy_coef: float = 0.01
    conditioning_coef: float = 1e-3
    value_coef: float = 0.5
    reward_scale: float = 0.02
    pid_kp: float = 0.2
    pid_ki: float = 0.005
    pid_kd: float = 0.05
    pid_integrator_max: float = 400.0
    wait_limit: float = 5.5
    wait_normalization: str = "per-request"  # or "per-step"
    rollout_len: int = 512
    n_envs: int = 8
    iterations: int = 300
    eval_every: int = 25
    eval_episodes: int = 8
    eval_steps: int = 2000
    seed: int = 0
    learned_actors: bool = False  # forced on for the classical coordinator
    classical_symbols: int = 4
    max_grad_norm: float = 10.0

    def __post_init__(self):
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.wait_normalization not in ("per-step", "per-request"):
            raise ValueError("wait_normalization must be per-step or per-request")


@dataclass
class LagrangeState:
    multiplier: float = 0.0
    integrator: float = 0.0
    previous_error: float = 0.0


def pid_update(lag: LagrangeState, measured_wait: float, limit: float,
               gains: tuple[float, float, float], integrator_max: float = 200.0) -> LagrangeState:
    """PID step on the constraint error; the multiplier is clamped at zero and
    the integrator anti-winds at the configured bound."""
    kp, ki, kd = gains
    error = measured_wait - limit
    integrator = float(np.clip(lag.integrator + error, 0.0, integrator_max))
    derivative = error - lag.previous_error
    multiplier = max(0.0, kp * error + ki * integrator + kd * derivative)
    return LagrangeState(multiplier=multiplier, integrator=integrator, previous_error=error)


def gae_advantages(rewards: np.ndarray, values: np.ndarray, bootstrap: np.ndarray,
                   gamma: float, lam: float, normalize: bool = True):
    """Generalized advantage estimates over (T, E) series; returns
    (advantages, returns), advantages normalized per batch when requested."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    t_len = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap, dtype=float)
    carry = np.zeros_like(next_value)
    for t in reversed(range(t_len)):
        delta = rewards[t] + gamma * next_value - values[t]
        carry = delta + gamma * lam * carry
        adv[t] = carry
        next_value = values[t]
    returns = adv + values
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


# ---------------------------------------------------------------------------
# Policy bundle
# ---------------------------------------------------------------------------


@dataclass
class QueuePolicy:
    """Coordinator + actors with their parameters; acts on observations."""

    coordinator: object
    actors: ActorHeads
    params: dict

    def advice_tables(self, obs: np.ndarray):
        return self.coordinator.forward(self.params, obs)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Vectorized action sampling; returns (actions, advice, log_q,
        log_actors (B, 2))."""
        table, _ = self.coordinator.forward(self.params, obs)
        n = obs.shape[0]
        flat = table.reshape(n, -1)
        flat = np.clip(flat, 0.0, None)
        flat /= flat.sum(axis=1, keepdims=True)
        u = rng.random((n, 1))
        idx = np.minimum((flat.cumsum(axis=1) < u).sum(axis=1), flat.shape[1] - 1)
        advice = np.stack(np.unravel_index(idx, table.shape[1:]), axis=1)
        log_q = np.log(np.clip(flat[np.arange(n), idx], LOG_FLOOR, None))
        if self.actors.trivial:
            actions = advice.copy()
            log_actors = np.zeros((n, 2))
        else:
            probs, _ = self.actors.probs(self.params, obs, advice)
            actions = np.zeros((n, 2), dtype=np.int64)
            log_actors = np.zeros((n, 2))
            for i in range(2):
                p1 = probs[i][:, 1]
                draw = (rng.random(n) < p1).astype(np.int64)
                actions[:, i] = draw
                chosen = np.where(draw == 1, p1, 1.0 - p1)
                log_actors[:, i] = np.log(np.clip(chosen, LOG_FLOOR, None))
        return actions, advice, log_q, log_actors

    def act(self, obs, rng: np.random.Generator):
        """Single-observation adapter for the queueing rollout protocol."""
        actions, advice, log_q, log_actors = self.sample(np.asarray(obs)[None, :], rng)
        return (
            (int(actions[0, 0]), int(actions[0, 1])),
            (int(advice[0, 0]), int(advice[0, 1])),
            float(log_q[0]),
            (float(log_actors[0, 0]), float(log_actors[0, 1])),
        )


def make_policy(kind: str, cfg: MappoConfig, rng: np.random.Generator) -> QueuePolicy:
    """Build a quantum or classical (shared-randomness) queueing policy."""
    if kind == "quantum":
        coordinator = QuantumCoordinator()
        actors = ActorHeads(trivial=not cfg.learned_actors, advice_sizes=(2, 2))
    elif kind in ("classical", "shared-randomness"):
        coordinator = ClassicalCoordinator(symbols=cfg.classical_symbols)
        # identity actors cannot map a shared 4-symbol to binary routing
        actors = ActorHeads(trivial=False, advice_sizes=coordinator.advice_sizes)
    else:
        raise ValueError(f"unknown coordinator kind {kind!r}")
    params = coordinator.init_params(rng)
    params.update(actors.init_params(rng))
    return QueuePolicy(coordinator, actors, params)


# ---------------------------------------------------------------------------
# Critics
# ---------------------------------------------------------------------------


def critic_features(q: np.ndarray, obs: np.ndarray) -> np.ndarray:
    """Centralized critic input from the full state (q1, q2, x1, x2), with
    magnitudes log-compressed to keep the tanh layers in range."""
    q = np.asarray(q, dtype=float)
    obs = np.asarray(obs, dtype=float)
    sgnlog = np.sign(q) * np.log1p(np.abs(q))
    return np.concatenate([sgnlog, obs, np.log1p(obs)], axis=-1)


def critic_params(rng: np.random.Generator, hidden=(64, 64)) -> dict:
    params = {}
    params.update(mlp_params("value", (6, *hidden, 1), rng))
    params.update(mlp_params("cost", (6, *hidden, 1), rng))
    return params


# ---------------------------------------------------------------------------
# Rollout collection (vectorized across environments)
# ---------------------------------------------------------------------------


@dataclass
class RolloutBatch:
    obs: np.ndarray  # (T, E, 2)
    q: np.ndarray  # (T, E, 2) pre-step states
    q_final: np.ndarray  # (E, 2)
    obs_final: np.ndarray  # (E, 2)
    advice: np.ndarray  # (T, E, 2)
    actions: np.ndarray  # (T, E, 2)
    log_q: np.ndarray  # (T, E)
    log_actors: np.ndarray  # (T, E, 2)
    rewards: np.ndarray  # (T, E) raw
    waits: np.ndarray  # (T, E)
    dt: np.ndarray  # (T, E)


def collect_rollouts(policy: QueuePolicy, params_env: QueueParams, cfg: MappoConfig,
                     rng: np.random.Generator, start=None) -> RolloutBatch:
    e = cfg.n_envs
    t_len = cfg.rollout_len
    if start is None:
        q = np.zeros((e, 2))
        obs = rng.exponential(1.0 / params_env.mu_rate, size=(e, 2))
    else:
        q, obs = start
    rec = {k: np.zeros((t_len, e)) for k in ("log_q", "rewards", "waits", "dt")}
    rec["obs"] = np.zeros((t_len, e, 2))
    rec["q"] = np.zeros((t_len, e, 2))
    rec["advice"] = np.zeros((t_len, e, 2), dtype=np.int64)
    rec["actions"] = np.zeros((t_len, e, 2), dtype=np.int64)
    rec["log_actors"] = np.zeros((t_len, e, 2))
    for t in range(t_len):
        actions, advice, log_q, log_actors = policy.sample(obs, rng)
        flips = rng.random(e) < 0.5
        applied = np.where(flips[:, None], 1 - actions, actions)
        dt = rng.exponential(1.0 / params_env.lambda_rate, size=e)
        first = rng.integers(2, size=e)
        q_next, reward, wait = transition_batch(q, applied, obs, dt, first, params_env)
        rec["obs"][t] = obs
        rec["q"][t] = q
        rec["advice"][t] = advice
        rec["actions"][t] = actions
        rec["log_q"][t] = log_q
        rec["log_actors"][t] = log_actors
        rec["rewards"][t] = reward
        rec["waits"][t] = wait
        rec["dt"][t] = dt
        q = q_next
        obs = rng.exponential(1.0 / params_env.mu_rate, size=(e, 2))
    return RolloutBatch(q_final=q, obs_final=obs, **rec)


# ---------------------------------------------------------------------------
# PPO update
# ---------------------------------------------------------------------------


def _clip_gradient_mask(ratio: np.ndarray, adv: np.ndarray, eps: float) -> np.ndarray:
    """d/d ratio of min(r A, clip(r) A): A where the unclipped branch is
    active, else 0."""
    lo, hi = 1.0 - eps, 1.0 + eps
    unclipped = np.where(adv >= 0, ratio <= hi, ratio >= lo)
    return np.where(unclipped, adv, 0.0)


def _clip_objective(ratio: np.ndarray, adv: np.ndarray, eps: float) -> np.ndarray:
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def surrogate(policy: QueuePolicy, critics: dict, cfg: MappoConfig, lag: LagrangeState,
              minibatch: dict):
    """Clipped PPO loss for one minibatch with separate coordinator and actor
    ratio terms, a mirrored cost surrogate weighted by the Lagrange
    multiplier, value/cost critic regression, entropy bonus, and the
    conditioning penalty. Returns (loss, policy grads, critic grads, stats)."""
    obs = minibatch["obs"]
    advice = minibatch["advice"]
    actions = minibatch["actions"]
    adv = minibatch["adv"]
    cost_adv = minibatch["cost_adv"]
    n = obs.shape[0]
    lam = lag.multiplier
    scale = 1.0 / (1.0 + lam)

    policy_grads: dict = {}
    table, coord_cache = policy.coordinator.forward(policy.params, obs)
    idx = (np.arange(n), advice[:, 0], advice[:, 1])
    q_new = np.clip(table[idx], LOG_FLOOR, None)
    log_ratio = np.clip(np.log(q_new) - minibatch["log_q"], -RATIO_CLAMP, RATIO_CLAMP)
    ratio = np.exp(log_ratio)

    # coordinator: maximize clipped reward surrogate, minimize cost surrogate
    reward_obj = float(np.mean(_clip_objective(ratio, adv, cfg.clip_eps)))
    cost_obj = float(np.mean(np.maximum(ratio * cost_adv,
                                        np.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps) * cost_adv)))
    g_reward = _clip_gradient_mask(ratio, adv, cfg.clip_eps)
    g_cost = -_clip_gradient_mask(ratio, -cost_adv, cfg.clip_eps)
    dq = scale * (-(g_reward - lam * g_cost)) * ratio / (n * q_new)

    # entropy bonus on the advice distribution (exact over the 4 cells)
    t_clip = np.clip(table, LOG_FLOOR, None)
    entropy = float(-np.mean(np.sum(t_clip * np.log(t_clip), axis=(1, 2))))
    d_table = -cfg.entropy_coef * (-(np.log(t_clip) + 1.0)) / n

    table_cot = np.zeros_like(table)
    table_cot += d_table
    table_cot[idx] += dq
    policy.coordinator.backward(policy.params, obs, coord_cache, table_cot,
                                cfg.conditioning_coef, policy_grads)
    cond_pen = policy.coordinator.conditioning_penalty(coord_cache)

    actor_obj = 0.0
    if not policy.actors.trivial:
        probs, caches = policy.actors.probs(policy.params, obs, advice)
        dprobs = []
        for i in range(2):
            p_a = np.clip(probs[i][np.arange(n), actions[:, i]], LOG_FLOOR, None)
            r_i = np.exp(np.clip(np.log(p_a) - minibatch["log_actors"][:, i],
                                 -RATIO_CLAMP, RATIO_CLAMP))
            actor_obj += float(np.mean(_clip_objective(r_i, adv, cfg.clip_eps)))
            gr = _clip_gradient_mask(r_i, adv, cfg.clip_eps)
            gc = -_clip_gradient_mask(r_i, -cost_adv, cfg.clip_eps)
            dpa = scale * (-(gr - lam * gc)) * r_i / (n * p_a)
            # actor entropy bonus
            ent_grad = -(np.log(np.clip(probs[i], LOG_FLOOR, None)) + 1.0)
            dp = np.zeros_like(probs[i])
            dp[np.arange(n), actions[:, i]] = dpa
            dp += -cfg.entropy_coef * ent_grad / n
            dprobs.append(dp)
        policy.actors.backward(policy.params, caches, dprobs, policy_grads)

    # critics
    critic_grads: dict = {}
    feats = minibatch["features"]
    v, v_acts = mlp_forward(critics, "value", feats)
    c, c_acts = mlp_forward(critics, "cost", feats)
    v_err = v[:, 0] - minibatch["returns"]
    c_err = c[:, 0] - minibatch["cost_returns"]
    value_loss = float(np.mean(v_err**2) + np.mean(c_err**2))
    mlp_backward(critics, "value", v_acts, cfg.value_coef * 2 * v_err[:, None] / n, critic_grads)
    mlp_backward(critics, "cost", c_acts, cfg.value_coef * 2 * c_err[:, None] / n, critic_grads)

    loss = (
        scale * (-(reward_obj + actor_obj) + lam * cost_obj)
        + cfg.value_coef * value_loss
        - cfg.entropy_coef * entropy
        + cfg.conditioning_coef * cond_pen
    )
    stats = {
        "reward_obj": reward_obj,
        "cost_obj": cost_obj,
        "entropy": entropy,
        "value_loss": value_loss,
        "cond_penalty": cond_pen,
    }
    return loss, policy_grads, critic_grads, stats


def _global_clip(grads: dict, max_norm: float) -> None:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(np.asarray(g, dtype=float))))
    norm = np.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * factor


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


@dataclass
class EvalPoint:
    iteration: int
    wait_limit: float
    throughput: float
    throughput_stderr: float
    mean_wait: float
    mean_wait_stderr: float
    multiplier: float


@dataclass
class QueueTrainResult:
    policy: QueuePolicy
    critics: dict
    best_params: dict
    best_eval: EvalPoint | None
    evals: list
    lag: LagrangeState


def measured_wait(batch: RolloutBatch, cfg: MappoConfig) -> float:
    per_step = float(batch.waits.mean())
    return per_step if cfg.wait_normalization == "per-step" else per_step / 2.0


def train_queueing(cfg: MappoConfig, kind: str, rng: np.random.Generator,
                   params_env: QueueParams | None = None,
                   policy: QueuePolicy | None = None,
                   critics: dict | None = None,
                   lag: LagrangeState | None = None) -> QueueTrainResult:
    """PPO-Lagrangian training of a quantum or classical coordinator policy.

    Pass ``policy``/``critics``/``lag`` to warm-start (e.g. sweeping the wait
    limit). The best checkpoint is the evaluation point with the highest
    throughput among those satisfying the wait constraint.
    """
    params_env = params_env or QueueParams(wait_limit=cfg.wait_limit)
    if policy is None:
        policy = make_policy(kind, cfg, rng)
    if critics is None:
        critics = critic_params(rng)
    lag = lag or LagrangeState()

    policy_lrs = {k: (cfg.lr_logits if k == "coord_logits" else cfg.lr_networks)
                  for k in policy.params}
    policy_state = AdamState.for_params(policy.params)
    critic_state = AdamState.for_params(critics)

    evals: list[EvalPoint] = []
    best_eval: EvalPoint | None = None
    best_params = clone_params(policy.params)
    start = None

    for iteration in range(cfg.iterations):
        batch = collect_rollouts(policy, params_env, cfg, rng, start)
        start = (batch.q_final, batch.obs_final)

        wait_level = measured_wait(batch, cfg)
        limit = cfg.wait_limit if cfg.wait_normalization == "per-step" else cfg.wait_limit / 2.0
        lag = pid_update(lag, wait_level, limit,
                         (cfg.pid_kp, cfg.pid_ki, cfg.pid_kd), cfg.pid_integrator_max)

        t_len, e = batch.rewards.shape
        feats = critic_features(batch.q.reshape(-1, 2), batch.obs.reshape(-1, 2))
        v_all, _ = mlp_forward(critics, "value", feats)
        c_all, _ = mlp_forward(critics, "cost", feats)
        values = v_all[:, 0].reshape(t_len, e)
        costs_v = c_all[:, 0].reshape(t_len, e)
        feats_final = critic_features(batch.q_final, batch.obs_final)
        v_boot = mlp_forward(critics, "value", feats_final)[0][:, 0]
        c_boot = mlp_forward(critics, "cost", feats_final)[0][:, 0]

        adv, returns = gae_advantages(cfg.reward_scale * batch.rewards, values, v_boot,
                                      cfg.gamma, cfg.gae_lambda)
        cost_adv, cost_returns = gae_advantages(batch.waits, costs_v, c_boot,
                                                cfg.gamma, cfg.gae_lambda)

        flat = {
            "obs": batch.obs.reshape(-1, 2),
            "advice": batch.advice.reshape(-1, 2),
            "actions": batch.actions.reshape(-1, 2),
            "log_q": batch.log_q.reshape(-1),
            "log_actors": batch.log_actors.reshape(-1, 2),
            "adv": adv.reshape(-1),
            "cost_adv": cost_adv.reshape(-1),
            "returns": returns.reshape(-1),
            "cost_returns": cost_returns.reshape(-1),
            "features": feats,
        }
        n_total = t_len * e
        for _ in range(cfg.epochs):
            order = rng.permutation(n_total)
            for lo in range(0, n_total, cfg.minibatch):
                sel = order[lo : lo + cfg.minibatch]
                mb = {k: v[sel] for k, v in flat.items()}
                loss, pgrads, cgrads, _ = surrogate(policy, critics, cfg, lag, mb)
                if not np.isfinite(loss):
                    raise RuntimeError(f"training diverged at iteration {iteration}")
                _global_clip(pgrads, cfg.max_grad_norm)
                _global_clip(cgrads, cfg.max_grad_norm)
                adam_step(policy.params, _fill_missing(pgrads, policy.params),
                          policy_state, policy_lrs)
                adam_step(critics, _fill_missing(cgrads, critics), critic_state, cfg.lr_critic)

        if (iteration + 1) % cfg.eval_every == 0 or iteration == cfg.iterations - 1:
            eval_rng = np.random.default_rng((cfg.seed, iteration, 977))
            res = evaluate(policy, params_env, cfg.eval_episodes, cfg.eval_steps, eval_rng)
            wait_metric = res.mean_wait_per_step if cfg.wait_normalization == "per-step" else res.mean_wait
            point = EvalPoint(
                iteration=iteration,
                wait_limit=cfg.wait_limit,
                throughput=res.throughput,
                throughput_stderr=res.throughput_stderr,
                mean_wait=wait_metric,
                mean_wait_stderr=res.mean_wait_stderr * (2.0 if cfg.wait_normalization == "per-step" else 1.0),
                multiplier=lag.multiplier,
            )
            evals.append(point)
            feasible = point.mean_wait <= limit + 2 * point.mean_wait_stderr
            if feasible and (best_eval is None or point.throughput > best_eval.throughput):
                best_eval = point
                best_params = clone_params(policy.params)

    return QueueTrainResult(policy, critics, best_params, best_eval, evals, lag)


def _fill_missing(grads: dict, params: dict) -> dict:
    out = dict(grads)
    for k, v in params.items():
        if k not in out:
            out[k] = np.zeros_like(v)
    return out


def sweep_wait_limits(cfg: MappoConfig, kind: str, limits, rng: np.random.Generator,
                      initial_runs: int = 1):
    """Warm-started sweep over wait limits: train at the first limit
    (optionally multiple fresh runs, keeping the best), then continue
    training the same policy at each subsequent limit. Returns a list of
    (wait_limit, QueueTrainResult)."""
    limits = list(limits)
    results = []
    first_cfg = replace(cfg, wait_limit=limits[0])
    best = None
    for run in range(max(1, initial_runs)):
        res = train_queueing(first_cfg, kind, rng)
        if best is None or (
            res.best_eval is not None
            and (best.best_eval is None or res.best_eval.throughput > best.best_eval.throughput)
        ):
            best = res
    results.append((limits[0], best))
    current = best
    for limit in limits[1:]:
        next_cfg = replace(cfg, wait_limit=limit)
        current = train_queueing(next_cfg, kind, rng, policy=current.policy,
                                 critics=current.critics, lag=current.lag)
        results.append((limit, current))
    return results
