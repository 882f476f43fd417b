"""Communication-free joint policy classes over finite history/action spaces.

Four executable families: explicit tables (for tests and adapters),
shared-randomness mixtures of local policies, entangled policies built from a
shared state plus per-agent measurements, and coordinator-advice policies
that sample advice from a coordinator and act through local actors.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from itertools import product
from typing import Sequence, Union

import numpy as np

from . import quantum as qt
from .cmatrix import kron_all

LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class FiniteHistorySpace:
    """Per-agent history and action alphabet sizes (histories are indices)."""

    history_sizes: tuple[int, ...]
    action_sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "history_sizes", tuple(int(v) for v in self.history_sizes))
        object.__setattr__(self, "action_sizes", tuple(int(v) for v in self.action_sizes))
        if len(self.history_sizes) != len(self.action_sizes):
            raise ValueError("history and action alphabets must cover the same agents")
        if not self.history_sizes:
            raise ValueError("need at least one agent")
        if min(self.history_sizes) < 1 or min(self.action_sizes) < 1:
            raise ValueError("alphabets must be non-empty")

    @property
    def n(self) -> int:
        return len(self.history_sizes)

    def joint_histories(self):
        return product(*(range(s) for s in self.history_sizes))

    def joint_actions(self):
        return product(*(range(s) for s in self.action_sizes))

    @property
    def joint_history_count(self) -> int:
        return int(np.prod(self.history_sizes))

    @property
    def joint_action_count(self) -> int:
        return int(np.prod(self.action_sizes))


@dataclass(frozen=True)
class ActionSample:
    """One sampled joint action with the log-probabilities needed for training."""

    actions: tuple[int, ...]
    advice: tuple[int, ...] | None
    log_q: float
    actor_log_probs: tuple[float, ...] | None


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_history(space: FiniteHistorySpace, h) -> tuple[int, ...]:
    h = tuple(int(v) for v in h)
    if len(h) != space.n:
        raise ValueError(f"history {h} has wrong arity for {space.n} agents")
    for hi, size in zip(h, space.history_sizes):
        if not 0 <= hi < size:
            raise ValueError(f"history component {hi} outside alphabet of size {size}")
    return h


class ExplicitPolicy:
    """Joint policy given by one explicit probability table per joint history."""

    def __init__(self, space: FiniteHistorySpace, tables: dict):
        self.space = space
        self.tables = {}
        for h, t in tables.items():
            t = np.asarray(t, dtype=float)
            if t.shape != space.action_sizes:
                raise ValueError(f"table for {h} has shape {t.shape}")
            if abs(t.sum() - 1.0) > 1e-9 or t.min() < -1e-12:
                raise ValueError(f"table for {h} is not a distribution")
            self.tables[tuple(h)] = t

    def joint_distribution(self, h) -> np.ndarray:
        return self.tables[_check_history(self.space, h)]

    def sample_action(self, h, rng: np.random.Generator) -> ActionSample:
        table = self.joint_distribution(h)
        idx = rng.choice(table.size, p=table.ravel() / table.sum())
        actions = np.unravel_index(idx, table.shape)
        logp = float(np.log(max(table[actions], LOG_FLOOR)))
        return ActionSample(tuple(int(a) for a in actions), None, logp, None)


class EntangledPolicy:
    """Shared state plus one measurement per (agent, history).

    ``rho`` may be a DensityMatrix or a trainable DensityFactor;
    ``measurements[i][h]`` may be a Povm or trainable PovmLogits.
    """

    def __init__(self, space: FiniteHistorySpace, rho, measurements: Sequence[Sequence]):
        self.space = space
        if not isinstance(rho, (qt.DensityMatrix, qt.DensityFactor)):
            raise TypeError("rho must be a DensityMatrix or DensityFactor")
        self.rho = rho
        if len(measurements) != space.n:
            raise ValueError("need one measurement map per agent")
        meas = []
        dims = []
        for i, per_history in enumerate(measurements):
            per_history = tuple(per_history)
            if len(per_history) != space.history_sizes[i]:
                raise ValueError(f"agent {i} needs {space.history_sizes[i]} measurements")
            d = per_history[0].dim
            for m in per_history:
                if not isinstance(m, (qt.Povm, qt.PovmLogits)):
                    raise TypeError("measurements must be Povm or PovmLogits")
                if m.dim != d:
                    raise ValueError("inconsistent measurement dimension within an agent")
                if m.outcomes != space.action_sizes[i]:
                    raise ValueError(
                        f"agent {i} measurement has {m.outcomes} outcomes, "
                        f"action alphabet is {space.action_sizes[i]}"
                    )
            dims.append(d)
            meas.append(per_history)
        if int(np.prod(dims)) != rho.dim:
            raise ValueError(f"product of agent dims {dims} != state dim {rho.dim}")
        self.measurements = tuple(meas)
        self._density_cache: qt.DensityMatrix | None = None
        self._povm_cache: dict = {}

    def density(self) -> qt.DensityMatrix:
        if self._density_cache is None:
            if isinstance(self.rho, qt.DensityFactor):
                self._density_cache = qt.density_from_factor(self.rho)
            else:
                self._density_cache = self.rho
        return self._density_cache

    def povm(self, agent: int, history: int) -> qt.Povm:
        key = (agent, history)
        if key not in self._povm_cache:
            m = self.measurements[agent][history]
            if isinstance(m, qt.PovmLogits):
                m = qt.quantum_softmax(m)[0]
            self._povm_cache[key] = m
        return self._povm_cache[key]

    def joint_distribution(self, h) -> np.ndarray:
        h = _check_history(self.space, h)
        povms = [self.povm(i, hi) for i, hi in enumerate(h)]
        return qt.born_joint(self.density(), povms)

    def sample_action(self, h, rng: np.random.Generator) -> ActionSample:
        table = self.joint_distribution(h)
        idx = rng.choice(table.size, p=table.ravel() / table.sum())
        actions = np.unravel_index(idx, table.shape)
        logp = float(np.log(max(table[actions], LOG_FLOOR)))
        return ActionSample(tuple(int(a) for a in actions), None, logp, None)


class SharedRandomnessPolicy:
    """Mixture over a shared random symbol of factorized local policies.

    ``local_logits[i]`` has shape (|X|, |H_i|, |A_i|); rows are normalized by
    softmax at evaluation time. A factorized policy is the |X| = 1 case.
    """

    def __init__(self, space: FiniteHistorySpace, q: np.ndarray, local_logits: Sequence[np.ndarray]):
        self.space = space
        q = np.asarray(q, dtype=float)
        if q.ndim != 1 or abs(q.sum() - 1.0) > 1e-9 or q.min() < -1e-12:
            raise ValueError("q must be a probability vector")
        self.q = q / q.sum()
        if len(local_logits) != space.n:
            raise ValueError("need one local policy per agent")
        locals_ = []
        for i, table in enumerate(local_logits):
            table = np.asarray(table, dtype=float)
            want = (q.size, space.history_sizes[i], space.action_sizes[i])
            if table.shape != want:
                raise ValueError(f"agent {i} logits must have shape {want}, got {table.shape}")
            locals_.append(table)
        self.local_logits = tuple(locals_)

    def local_probs(self, agent: int) -> np.ndarray:
        return _softmax(self.local_logits[agent])

    def joint_distribution(self, h) -> np.ndarray:
        h = _check_history(self.space, h)
        out = np.zeros(self.space.action_sizes)
        for x, qx in enumerate(self.q):
            if qx == 0.0:
                continue
            factors = [self.local_probs(i)[x, hi] for i, hi in enumerate(h)]
            joint = factors[0]
            for f in factors[1:]:
                joint = np.multiply.outer(joint, f)
            out += qx * joint
        return out

    def sample_action(self, h, rng: np.random.Generator) -> ActionSample:
        h = _check_history(self.space, h)
        x = int(rng.choice(self.q.size, p=self.q))
        actions = []
        actor_logs = []
        for i, hi in enumerate(h):
            probs = self.local_probs(i)[x, hi]
            a = int(rng.choice(probs.size, p=probs))
            actions.append(a)
            actor_logs.append(float(np.log(max(probs[a], LOG_FLOOR))))
        return ActionSample(
            tuple(actions),
            (x,) * self.space.n,
            float(np.log(max(self.q[x], LOG_FLOOR))),
            tuple(actor_logs),
        )


class SharedAdviceSource:
    """Coordinator of shared-randomness form: all agents receive the same
    symbol drawn from a fixed distribution, independent of history."""

    def __init__(self, q: np.ndarray):
        q = np.asarray(q, dtype=float)
        if q.ndim != 1 or abs(q.sum() - 1.0) > 1e-9 or q.min() < -1e-12:
            raise ValueError("q must be a probability vector")
        self.q = q / q.sum()


Coordinator = Union[EntangledPolicy, SharedAdviceSource]


class CoordinatorAdvicePolicy:
    """Coordinator samples an advice vector; per-agent actors map
    (advice, history) to an action distribution.

    ``actor_logits[i]`` has shape (|X_i|, |H_i|, |A_i|).
    """

    def __init__(
        self,
        space: FiniteHistorySpace,
        coordinator: Coordinator,
        actor_logits: Sequence[np.ndarray],
    ):
        self.space = space
        self.coordinator = coordinator
        if isinstance(coordinator, EntangledPolicy):
            if coordinator.space.history_sizes != space.history_sizes:
                raise ValueError("coordinator history space must match the policy's")
            advice_sizes = coordinator.space.action_sizes
        elif isinstance(coordinator, SharedAdviceSource):
            advice_sizes = (coordinator.q.size,) * space.n
        else:
            raise TypeError("coordinator must be EntangledPolicy or SharedAdviceSource")
        self.advice_sizes = advice_sizes
        actors = []
        for i, table in enumerate(actor_logits):
            table = np.asarray(table, dtype=float)
            want = (advice_sizes[i], space.history_sizes[i], space.action_sizes[i])
            if table.shape != want:
                raise ValueError(f"agent {i} actor logits must have shape {want}, got {table.shape}")
            actors.append(table)
        self.actor_logits = tuple(actors)

    def actor_probs(self, agent: int) -> np.ndarray:
        return _softmax(self.actor_logits[agent])

    def advice_distribution(self, h) -> np.ndarray:
        """q(x | h) as a table over the joint advice alphabet."""
        h = _check_history(self.space, h)
        if isinstance(self.coordinator, EntangledPolicy):
            return self.coordinator.joint_distribution(h)
        q = self.coordinator.q
        out = np.zeros(self.advice_sizes)
        idx = tuple(np.arange(q.size) for _ in range(self.space.n))
        out[idx] = q
        return out

    def joint_distribution(self, h) -> np.ndarray:
        h = _check_history(self.space, h)
        advice = self.advice_distribution(h)
        # contract each agent's actor conditional against its advice axis
        out = advice
        for i, hi in enumerate(h):
            probs = self.actor_probs(i)[:, hi, :]  # (X_i, A_i)
            out = np.tensordot(out, probs, axes=([0], [0]))
        return out

    def sample_action(self, h, rng: np.random.Generator) -> ActionSample:
        h = _check_history(self.space, h)
        advice_table = self.advice_distribution(h)
        idx = rng.choice(advice_table.size, p=advice_table.ravel() / advice_table.sum())
        advice = tuple(int(x) for x in np.unravel_index(idx, advice_table.shape))
        log_q = float(np.log(max(advice_table[advice], LOG_FLOOR)))
        actions = []
        actor_logs = []
        for i, (xi, hi) in enumerate(zip(advice, h)):
            probs = self.actor_probs(i)[xi, hi]
            a = int(rng.choice(probs.size, p=probs))
            actions.append(a)
            actor_logs.append(float(np.log(max(probs[a], LOG_FLOOR))))
        return ActionSample(tuple(actions), advice, log_q, tuple(actor_logs))


Policy = Union[ExplicitPolicy, EntangledPolicy, SharedRandomnessPolicy, CoordinatorAdvicePolicy]


def joint_distribution(policy: Policy, h) -> np.ndarray:
    return policy.joint_distribution(h)


def sample_action(policy: Policy, h, rng: np.random.Generator) -> ActionSample:
    return policy.sample_action(h, rng)


def deterministic_logits(choice: int, size: int, gap: float = 1e9) -> np.ndarray:
    """Logit row whose softmax is an exact point mass on ``choice``."""
    row = np.full(size, -gap)
    row[choice] = 0.0
    return row


def factorized(space: FiniteHistorySpace, fns: Sequence[Sequence[int]]) -> SharedRandomnessPolicy:
    """Deterministic factorized policy: agent i answers fns[i][h_i]."""
    locals_ = []
    for i, fn in enumerate(fns):
        table = np.stack(
            [deterministic_logits(int(fn[h]), space.action_sizes[i]) for h in range(space.history_sizes[i])]
        )
        locals_.append(table[None, :, :])
    return SharedRandomnessPolicy(space, np.ones(1), locals_)


def collapse_advice(policy: CoordinatorAdvicePolicy) -> EntangledPolicy:
    """Fold the actors of an entangled-coordinator policy into the measurements.

    The collapsed effects M_i(a|h) = sum_x pi_i(a|x,h) M~_i(x|h) are positive
    combinations of POVM effects and inherit completeness, so the result is a
    direct entangled policy with an identical joint distribution.
    """
    coord = policy.coordinator
    if not isinstance(coord, EntangledPolicy):
        raise TypeError("collapse_advice requires an entangled coordinator")
    measurements = []
    for i in range(policy.space.n):
        probs = policy.actor_probs(i)  # (X_i, H_i, A_i)
        per_history = []
        for h in range(policy.space.history_sizes[i]):
            advice_elements = coord.povm(i, h).elements  # (X_i, d, d)
            collapsed = np.einsum("xa,xjk->ajk", probs[:, h, :], advice_elements)
            per_history.append(qt.Povm(collapsed))
        measurements.append(per_history)
    return EntangledPolicy(policy.space, coord.density(), measurements)


def embed_shared_randomness(policy: SharedRandomnessPolicy) -> EntangledPolicy:
    """Represent a shared-randomness policy as an entangled one with a
    diagonal state (each agent holds dimension |X|) and diagonal effects."""
    x_size = policy.q.size
    n = policy.space.n
    rho = np.zeros((x_size**n, x_size**n), dtype=complex)
    for x, qx in enumerate(policy.q):
        basis = np.zeros((x_size, x_size), dtype=complex)
        basis[x, x] = 1.0
        rho += qx * kron_all([basis] * n)
    measurements = []
    for i in range(n):
        probs = policy.local_probs(i)  # (X, H_i, A_i)
        per_history = []
        for h in range(policy.space.history_sizes[i]):
            elements = np.stack(
                [np.diag(probs[:, h, a]).astype(complex) for a in range(policy.space.action_sizes[i])]
            )
            per_history.append(qt.Povm(elements))
        measurements.append(per_history)
    return EntangledPolicy(policy.space, qt.DensityMatrix(rho), measurements)


# ---------------------------------------------------------------------------
# Non-signaling verification
# ---------------------------------------------------------------------------

NON_SIGNALING_BUDGET = 10_000


@dataclass(frozen=True)
class NonSignalingReport:
    ok: bool
    max_violation: float


def full_table(policy: Policy) -> np.ndarray:
    """Tensor P[h_1..h_n, a_1..a_n] of the policy over its whole space."""
    space = policy.space
    out = np.zeros(space.history_sizes + space.action_sizes)
    for h in space.joint_histories():
        out[h] = policy.joint_distribution(h)
    return out


def check_non_signaling(policy: Policy, tolerance: float = 1e-9) -> NonSignalingReport:
    """Verify that every agent subset's action marginal is independent of the
    remaining agents' histories; returns the worst absolute deviation."""
    space = policy.space
    n = space.n
    if space.joint_history_count > NON_SIGNALING_BUDGET:
        raise ValueError(
            f"joint history space of size {space.joint_history_count} exceeds "
            f"the enumeration budget {NON_SIGNALING_BUDGET}"
        )
    table = full_table(policy)
    worst = 0.0
    for mask in range(1, 2**n - 1):
        group = [i for i in range(n) if mask >> i & 1]
        other = [i for i in range(n) if i not in group]
        # marginal over the other agents' actions must not vary with the
        # other agents' histories; track the worst pairwise spread
        marg = table.sum(axis=tuple(n + j for j in other))
        axes = tuple(other)
        spread = marg.max(axis=axes) - marg.min(axis=axes)
        worst = max(worst, float(np.max(spread)))
    return NonSignalingReport(ok=worst <= tolerance, max_violation=worst)


def distribution_csv(policy: Policy) -> str:
    """Exact distribution table as CSV with one row per (history, action) cell."""
    space = policy.space
    buf = io.StringIO()
    head = [f"h{i + 1}" for i in range(space.n)] + [f"a{i + 1}" for i in range(space.n)]
    buf.write(",".join(head + ["probability"]) + "\n")
    for h in space.joint_histories():
        table = policy.joint_distribution(h)
        for a in space.joint_actions():
            cells = [str(v) for v in h] + [str(v) for v in a] + [repr(float(table[a]))]
            buf.write(",".join(cells) + "\n")
    return buf.getvalue()
