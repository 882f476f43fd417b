"""Two-router two-server queueing environment.

Each step a pair of requests (sizes drawn Exp(mu_rate)) arrives, one per
router; routers see only their own request size and pick a server. Servers
work through their queues; an idle server accrues reward on a baseline task,
superlinearly in the uninterrupted idle time (T(t) = t^p credited
incrementally so every unbroken interval of length t totals T(t)). The queue
state is one signed number per server: positive = remaining queued work,
negative = elapsed uninterrupted baseline time. Joint actions are flipped
with probability 1/2 each step, making the dynamics symmetric under server
relabeling; recorded actions and log-probabilities always refer to the
pre-flip choices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QueueParams:
    lambda_rate: float = 0.8  # arrival-pair rate (1/time)
    mu_rate: float = 1.0  # request-size rate (1/size)
    throughput_power: float = 2.0  # T(t) = t**p, p > 1
    wait_limit: float = 5.5
    horizon: int = 2048

    def __post_init__(self):
        if self.lambda_rate <= 0 or self.mu_rate <= 0:
            raise ValueError("rates must be positive")
        if self.throughput_power <= 1:
            raise ValueError("throughput must be superlinear (p > 1)")
        if self.wait_limit <= 0:
            raise ValueError("wait limit must be positive")


@dataclass(frozen=True)
class QueueState:
    q1: float
    q2: float


@dataclass(frozen=True)
class StepOutcome:
    state: QueueState
    reward: float
    wait: float
    observations: tuple[float, float]
    dt: float
    flipped: bool
    first_request: int


def _throughput(t: np.ndarray, power: float) -> np.ndarray:
    return np.maximum(t, 0.0) ** power


def transition_batch(
    q: np.ndarray,
    actions: np.ndarray,
    x: np.ndarray,
    dt: np.ndarray,
    first: np.ndarray,
    params: QueueParams,
):
    """Deterministic joint transition for post-flip actions.

    q, actions, x: (..., 2); dt, first: (...). Returns (q_next, reward, wait).
    ``first`` picks which request is served first when both land on one
    server (the second one additionally waits the first one's size).
    """
    q = np.asarray(q, dtype=float)
    a = np.asarray(actions)
    x = np.asarray(x, dtype=float)
    dt = np.asarray(dt, dtype=float)
    first = np.asarray(first)

    load0 = (1 - a[..., 0]) * x[..., 0] + (1 - a[..., 1]) * x[..., 1]
    load1 = a[..., 0] * x[..., 0] + a[..., 1] * x[..., 1]
    dq = np.stack([load0, load1], axis=-1)

    interrupted = (q < 0) & (dq > 0)
    q_next = dq - dt[..., None] + np.where(interrupted, 0.0, q)

    p = params.throughput_power
    continued = (q < 0) & (dq == 0)
    reward_each = np.where(
        continued,
        _throughput(-q_next, p) - _throughput(-q, p),
        _throughput(-q_next, p),
    )
    reward = reward_each.sum(axis=-1)

    base = np.take_along_axis(np.maximum(q, 0.0), a, axis=-1)
    same = a[..., 0] == a[..., 1]
    second_size = np.where(first == 0, x[..., 0], x[..., 1])
    wait = base.sum(axis=-1) + np.where(same, second_size, 0.0)
    return q_next, reward, wait


def transition(
    state: QueueState,
    actions: tuple[int, int],
    observations: tuple[float, float],
    dt: float,
    first_request: int,
    params: QueueParams,
):
    """Scalar wrapper around :func:`transition_batch` (post-flip actions)."""
    q_next, reward, wait = transition_batch(
        np.array([state.q1, state.q2]),
        np.array(actions),
        np.array(observations),
        np.array(dt),
        np.array(first_request),
        params,
    )
    return QueueState(float(q_next[0]), float(q_next[1])), float(reward), float(wait)


def reset(params: QueueParams, rng: np.random.Generator):
    """Both servers idle with zero elapsed baseline time; draws the first
    request sizes."""
    obs = rng.exponential(1.0 / params.mu_rate, size=2)
    return QueueState(0.0, 0.0), (float(obs[0]), float(obs[1]))


def step(
    state: QueueState,
    actions: tuple[int, int],
    observations: tuple[float, float],
    params: QueueParams,
    rng: np.random.Generator,
) -> StepOutcome:
    """One environment step: symmetrizing flip, transition, and fresh draws.

    ``actions`` are the routers' (pre-flip) choices in {0, 1}.
    """
    a1, a2 = int(actions[0]), int(actions[1])
    if a1 not in (0, 1) or a2 not in (0, 1):
        raise ValueError("actions must be 0 or 1")
    flip = bool(rng.random() < 0.5)
    if flip:
        a1, a2 = 1 - a1, 1 - a2
    dt = float(rng.exponential(1.0 / params.lambda_rate))
    first = int(rng.integers(2))
    next_state, reward, wait = transition(state, (a1, a2), observations, dt, first, params)
    nxt = rng.exponential(1.0 / params.mu_rate, size=2)
    return StepOutcome(
        next_state, reward, wait, (float(nxt[0]), float(nxt[1])), dt, flip, first
    )


@dataclass
class QueueTrajectory:
    """Recorded rollout; actions and log-probabilities are pre-flip."""

    q: np.ndarray  # (T+1, 2) states, q[t] before step t
    obs: np.ndarray  # (T, 2)
    advice: np.ndarray  # (T, 2), -1 when the policy provides none
    actions: np.ndarray  # (T, 2)
    flips: np.ndarray  # (T,)
    firsts: np.ndarray  # (T,)
    dt: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    waits: np.ndarray  # (T,)
    log_q: np.ndarray  # (T,)
    actor_log_probs: np.ndarray  # (T, 2)

    @property
    def steps(self) -> int:
        return self.obs.shape[0]


def rollout(policy, params: QueueParams, steps: int, rng: np.random.Generator) -> QueueTrajectory:
    """Simulate ``steps`` arrivals under a policy with method
    ``act((x1, x2), rng) -> (actions, advice, log_q, actor_log_probs)``."""
    state, obs = reset(params, rng)
    q = np.zeros((steps + 1, 2))
    q[0] = (state.q1, state.q2)
    rec = {
        "obs": np.zeros((steps, 2)),
        "advice": np.full((steps, 2), -1, dtype=np.int64),
        "actions": np.zeros((steps, 2), dtype=np.int64),
        "flips": np.zeros(steps, dtype=bool),
        "firsts": np.zeros(steps, dtype=np.int64),
        "dt": np.zeros(steps),
        "rewards": np.zeros(steps),
        "waits": np.zeros(steps),
        "log_q": np.zeros(steps),
        "actor_log_probs": np.zeros((steps, 2)),
    }
    for t in range(steps):
        actions, advice, log_q, actor_logs = policy.act(obs, rng)
        out = step(state, actions, obs, params, rng)
        rec["obs"][t] = obs
        if advice is not None:
            rec["advice"][t] = advice
        rec["actions"][t] = actions
        rec["flips"][t] = out.flipped
        rec["firsts"][t] = out.first_request
        rec["dt"][t] = out.dt
        rec["rewards"][t] = out.reward
        rec["waits"][t] = out.wait
        rec["log_q"][t] = log_q
        if actor_logs is not None:
            rec["actor_log_probs"][t] = actor_logs
        state = out.state
        obs = out.observations
        q[t + 1] = (state.q1, state.q2)
    return QueueTrajectory(q=q, **rec)


def replay(traj: QueueTrajectory, params: QueueParams) -> np.ndarray:
    """Recompute the state sequence from the recorded draws through the pure
    transition; bit-for-bit identical to the simulated one."""
    q = np.zeros_like(traj.q)
    q[0] = traj.q[0]
    state = QueueState(*traj.q[0])
    for t in range(traj.steps):
        a1, a2 = (int(v) for v in traj.actions[t])
        if traj.flips[t]:
            a1, a2 = 1 - a1, 1 - a2
        state, _, _ = transition(
            state,
            (a1, a2),
            tuple(traj.obs[t]),
            float(traj.dt[t]),
            int(traj.firsts[t]),
            params,
        )
        q[t + 1] = (state.q1, state.q2)
    return q


@dataclass(frozen=True)
class EvalResult:
    throughput: float  # reward per unit time
    throughput_stderr: float
    mean_wait: float  # per request
    mean_wait_stderr: float
    mean_wait_per_step: float
    episodes: int


def evaluate(
    policy, params: QueueParams, episodes: int, steps: int, rng: np.random.Generator
) -> EvalResult:
    """Monte-Carlo estimates of baseline throughput per unit time and mean
    customer wait (per request), with standard errors across episodes."""
    th = np.zeros(episodes)
    wait_req = np.zeros(episodes)
    wait_step = np.zeros(episodes)
    for e in range(episodes):
        traj = rollout(policy, params, steps, rng)
        th[e] = traj.rewards.sum() / traj.dt.sum()
        wait_req[e] = traj.waits.sum() / (2 * steps)
        wait_step[e] = traj.waits.sum() / steps
    denom = np.sqrt(max(episodes - 1, 1))
    return EvalResult(
        throughput=float(th.mean()),
        throughput_stderr=float(th.std(ddof=1) / denom) if episodes > 1 else 0.0,
        mean_wait=float(wait_req.mean()),
        mean_wait_stderr=float(wait_req.std(ddof=1) / denom) if episodes > 1 else 0.0,
        mean_wait_per_step=float(wait_step.mean()),
        episodes=episodes,
    )


class FixedActionPolicy:
    """Constant-action baseline (e.g. always split); for tests and sanity runs."""

    def __init__(self, a1: int, a2: int):
        self.a = (a1, a2)

    def act(self, obs, rng):
        return self.a, None, 0.0, None


class RandomSplitPolicy:
    """Independent uniform routing; for tests."""

    def act(self, obs, rng):
        return (int(rng.integers(2)), int(rng.integers(2))), None, float(np.log(0.25)), None


def trajectory_csv(traj: QueueTrajectory) -> str:
    """Trajectory dump with one row per step."""
    lines = ["t,q1,q2,x1,x2,a1,a2,flip,dt,reward,wait"]
    for t in range(traj.steps):
        cells = [
            str(t),
            repr(float(traj.q[t, 0])),
            repr(float(traj.q[t, 1])),
            repr(float(traj.obs[t, 0])),
            repr(float(traj.obs[t, 1])),
            str(int(traj.actions[t, 0])),
            str(int(traj.actions[t, 1])),
            str(int(traj.flips[t])),
            repr(float(traj.dt[t])),
            repr(float(traj.rewards[t])),
            repr(float(traj.waits[t])),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
