"""The 4-30-2 ELU Q-network, its replay Q-learning trainer, and evaluation.

The canonical serialization of a policy is the flat 212-float weight vector
(hidden weights row-major, hidden bias, output weights row-major, output
bias); `vectorize`/`devectorize` convert between that vector and a `QNet`.
Everything downstream of training (the zoo, the generative model, repair)
works on these vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend, cartpole
from .errors import ContractViolation, NumericalError
from .nn import DenseLayer
from .rng import EVAL_STREAM, make_rng, tagged_rng

N_STATE = 4
N_HIDDEN = 30
N_ACTIONS = 2
N_PARAMS = 212  # 30*4 + 30 + 2*30 + 2

_W1 = slice(0, 120)
_B1 = slice(120, 150)
_W2 = slice(150, 210)
_B2 = slice(210, 212)


class QNet:
    """Q-network over cart-pole states, stored as its flat weight vector."""

    __slots__ = ("params",)

    def __init__(self, params: np.ndarray):
        params = np.ascontiguousarray(params, dtype=float)
        if params.shape != (N_PARAMS,):
            raise ContractViolation(f"QNet needs exactly {N_PARAMS} parameters, got {params.shape}")
        self.params = params

    @classmethod
    def random(cls, rng: np.random.Generator) -> "QNet":
        """Uniform init in +/-1/sqrt(fan_in) per layer, drawn in canonical order."""
        b1 = 1.0 / np.sqrt(N_STATE)
        b2 = 1.0 / np.sqrt(N_HIDDEN)
        parts = [
            rng.uniform(-b1, b1, size=N_HIDDEN * N_STATE),
            rng.uniform(-b1, b1, size=N_HIDDEN),
            rng.uniform(-b2, b2, size=N_ACTIONS * N_HIDDEN),
            rng.uniform(-b2, b2, size=N_ACTIONS),
        ]
        return cls(np.concatenate(parts))

    @property
    def w1(self) -> np.ndarray:
        return self.params[_W1].reshape(N_HIDDEN, N_STATE)

    @property
    def b1(self) -> np.ndarray:
        return self.params[_B1]

    @property
    def w2(self) -> np.ndarray:
        return self.params[_W2].reshape(N_ACTIONS, N_HIDDEN)

    @property
    def b2(self) -> np.ndarray:
        return self.params[_B2]

    @property
    def layer1(self) -> DenseLayer:
        return DenseLayer(self.w1.copy(), self.b1.copy())

    @property
    def layer2(self) -> DenseLayer:
        return DenseLayer(self.w2.copy(), self.b2.copy())

    def qvalues(self, state) -> np.ndarray:
        """Deterministic forward pass; returns (q_left, q_right)."""
        s = state.as_array() if isinstance(state, cartpole.CartState) else np.asarray(state, dtype=float)
        if s.shape != (N_STATE,):
            raise ContractViolation(f"state must have {N_STATE} entries")
        q0, q1 = backend.kernels.q_forward(self.params, np.ascontiguousarray(s))
        return np.array([q0, q1])

    def hidden(self, states: np.ndarray) -> np.ndarray:
        """Post-ELU hidden activations for a (n, 4) batch of states."""
        pre = states @ self.w1.T + self.b1
        return np.where(pre > 0.0, pre, np.expm1(pre))

    def outputs(self, states: np.ndarray) -> np.ndarray:
        """Raw linear output activations (Q-values) for a (n, 4) batch."""
        return self.hidden(states) @ self.w2.T + self.b2

    def copy(self) -> "QNet":
        return QNet(self.params.copy())


def vectorize(net: QNet) -> np.ndarray:
    """Canonical flat weight vector of a net (a fresh copy)."""
    return net.params.copy()


def devectorize(v: np.ndarray) -> QNet:
    """Inverse of vectorize; rejects vectors that are not length 212."""
    v = np.asarray(v, dtype=float)
    if v.shape != (N_PARAMS,):
        raise ContractViolation(f"weight vector must have length {N_PARAMS}, got {v.shape}")
    return QNet(v.copy())


def act_epsilon(q, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; ties in q break toward left (index 0)."""
    if not 0.0 <= epsilon <= 1.0:
        raise ContractViolation(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return cartpole.RIGHT if q[1] > q[0] else cartpole.LEFT


def greedy_policy(net: QNet):
    """State -> action callable evaluating the net greedily (epsilon = 0)."""
    params = net.params

    def policy(state):
        q0, q1 = backend.kernels.q_forward(params, state.as_array())
        return cartpole.RIGHT if q1 > q0 else cartpole.LEFT

    return policy


@dataclass
class TrainConfig:
    """Q-learning hyperparameters; the zoo builder randomizes `episodes`."""

    episodes: int = 250
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int | None = None  # default: half the worst-case step budget
    buffer_capacity: int = 10_000
    batch_size: int = 64
    lr: float = 1e-3
    max_steps: int = cartpole.MAX_STEPS
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ContractViolation("gamma must be in (0, 1]")
        for eps in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= eps <= 1.0:
                raise ContractViolation("epsilon schedule must stay within [0, 1]")

    def resolved_decay_steps(self) -> int:
        if self.epsilon_decay_steps is not None:
            return self.epsilon_decay_steps
        return max(1, self.episodes * self.max_steps // 2)


class ReplayBuffer:
    """Ring buffer of (s, a, r, s', terminal) transitions with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ContractViolation("buffer capacity must be positive")
        self.capacity = capacity
        self._s = np.empty((capacity, N_STATE))
        self._a = np.empty(capacity, dtype=np.int64)
        self._r = np.empty(capacity)
        self._s2 = np.empty((capacity, N_STATE))
        self._done = np.empty(capacity)
        self._size = 0
        self._pos = 0

    def __len__(self) -> int:
        return self._size

    def push(self, s, a, r, s2, done) -> None:
        i = self._pos
        self._s[i] = s
        self._a[i] = a
        self._r[i] = r
        self._s2[i] = s2
        self._done[i] = 1.0 if done else 0.0
        self._pos = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform sample without replacement within the batch."""
        if batch_size > self._size:
            raise ContractViolation("batch larger than buffer contents")
        idx = rng.choice(self._size, size=batch_size, replace=False, shuffle=False)
        return (
            np.ascontiguousarray(self._s[idx]),
            self._a[idx],
            self._r[idx],
            np.ascontiguousarray(self._s2[idx]),
            self._done[idx],
        )


def _epsilon_at(config: TrainConfig, step_index: int, decay_steps: int) -> float:
    frac = min(1.0, step_index / decay_steps)
    return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac


def _train(config: TrainConfig, rng: np.random.Generator, snapshot_every: int | None):
    from .nn import adam_init, adam_step  # local import keeps module load light

    kernels = backend.kernels
    net = QNet.random(rng)
    params = net.params
    adam = adam_init(N_PARAMS, lr=config.lr)
    buffer = ReplayBuffer(config.buffer_capacity)
    decay_steps = config.resolved_decay_steps()
    snapshots: list[tuple[int, np.ndarray]] = []
    total_steps = 0

    for episode in range(config.episodes):
        state = cartpole.reset(rng).as_array()
        for _ in range(config.max_steps):
            eps = _epsilon_at(config, total_steps, decay_steps)
            q = kernels.q_forward(params, state)
            action = act_epsilon(q, eps, rng)
            force = cartpole.FORCE_MAG if action == cartpole.RIGHT else -cartpole.FORCE_MAG
            nxt = np.array(kernels.cartpole_step(
                state[0], state[1], state[2], state[3], force, cartpole.PHYS))
            terminal = (abs(nxt[2]) > cartpole.THETA_THRESHOLD
                        or abs(nxt[0]) > cartpole.X_THRESHOLD)
            # Hitting the step cap is truncation, not physics termination, so
            # the stored flag (used to gate bootstrapping) stays False there.
            buffer.push(state, action, 1.0, nxt, terminal)
            if len(buffer) >= config.batch_size:
                s_b, a_b, r_b, s2_b, done_b = buffer.sample(config.batch_size, rng)
                grad, _ = kernels.batch_q_grad(params, s_b, a_b, r_b, s2_b, done_b, config.gamma)
                params, adam = adam_step(params, grad, adam)
                if not np.isfinite(params).all():
                    raise NumericalError(
                        f"training diverged: non-finite weight after episode {episode}, "
                        f"step {total_steps}"
                    )
            total_steps += 1
            if terminal:
                break
            state = nxt
        if snapshot_every is not None and (episode + 1) % snapshot_every == 0:
            snapshots.append((episode + 1, params.copy()))

    if snapshot_every is not None and (not snapshots or snapshots[-1][0] != config.episodes):
        snapshots.append((config.episodes, params.copy()))
    return QNet(params), snapshots


def train_agent(config: TrainConfig, rng: np.random.Generator | None = None) -> QNet:
    """Train one net with epsilon-decreasing replay Q-learning."""
    if rng is None:
        rng = make_rng(config.seed)
    net, _ = _train(config, rng, snapshot_every=None)
    return net


def train_agent_snapshots(config: TrainConfig, rng: np.random.Generator | None = None,
                          snapshot_every: int = 50):
    """Like train_agent, but also returns [(episodes_done, weights), ...] snapshots."""
    if snapshot_every < 1:
        raise ContractViolation("snapshot_every must be positive")
    if rng is None:
        rng = make_rng(config.seed)
    return _train(config, rng, snapshot_every=snapshot_every)[1]


def _stratified_starts(rng: np.random.Generator, n: int) -> np.ndarray:
    """n initial states, uniform on the reset box via a scrambled Latin hypercube.

    Each state is marginally uniform in [-0.05, 0.05]^4, but the batch is
    per-dimension stratified, which substantially tightens the survival-time
    estimate for policies whose episode length is sensitive to the start.
    """
    strata = np.stack([rng.permutation(n) for _ in range(4)], axis=1)
    u = (strata + rng.random((n, 4))) / n
    return -cartpole.RESET_BOUND + 2.0 * cartpole.RESET_BOUND * u


def survival_time(net: QNet, rng: np.random.Generator, n_episodes: int = 100,
                  max_steps: int = cartpole.MAX_STEPS) -> float:
    """Mean greedy episode length over n random starts; never mutates the net."""
    if n_episodes < 1:
        raise ContractViolation("n_episodes must be at least 1")
    kernels = backend.kernels
    starts = _stratified_starts(rng, n_episodes)
    total = 0
    for i in range(n_episodes):
        total += kernels.greedy_episode(net.params, starts[i], max_steps, cartpole.PHYS)
    return total / n_episodes


def survival_of_weights(weights: np.ndarray, seed: int, n_episodes: int = 100) -> float:
    """Survival time of a flat weight vector with the standard evaluation stream."""
    return survival_time(devectorize(weights), tagged_rng(seed, EVAL_STREAM), n_episodes)
