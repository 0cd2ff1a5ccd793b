"""Cart-pole simulator: Euler-integrated Barto dynamics, 12-degree termination.

Physics constants follow the canonical modern reference implementation of the
task: gravity 9.8, cart mass 1.0, pole mass 0.1, half pole length 0.5, force
+/-10 N, time step 0.02 s, position limit 2.4. Episodes terminate when the
pole angle exceeds 12 degrees, the cart leaves [-2.4, 2.4], or 200 steps are
reached; every step taken earns reward 1, including the terminating one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ContractViolation

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
HALF_POLE_LENGTH = 0.5
FORCE_MAG = 10.0
TAU = 0.02
THETA_THRESHOLD = 12.0 * np.pi / 180.0  # stored in radians to avoid unit drift
X_THRESHOLD = 2.4
MAX_STEPS = 200
RESET_BOUND = 0.05

# Constant block handed to the kernels; order documented in _core_py.
PHYS = np.array(
    [GRAVITY, CART_MASS, POLE_MASS, HALF_POLE_LENGTH, FORCE_MAG, TAU,
     THETA_THRESHOLD, X_THRESHOLD]
)

LEFT = 0
RIGHT = 1


@dataclass(frozen=True)
class CartState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.theta, self.theta_dot])

    @staticmethod
    def from_array(a) -> "CartState":
        return CartState(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass
class EpisodeResult:
    steps_survived: int
    trajectory: list | None = None  # list of (CartState, action, reward)


def reset(rng: np.random.Generator) -> CartState:
    """Initial state with all four fields uniform in [-0.05, 0.05]."""
    return CartState.from_array(rng.uniform(-RESET_BOUND, RESET_BOUND, size=4))


def is_terminal(state: CartState) -> bool:
    return abs(state.theta) > THETA_THRESHOLD or abs(state.x) > X_THRESHOLD


def step(state: CartState, action: int):
    """Advance one time step; returns (next_state, reward, terminal)."""
    if action not in (LEFT, RIGHT):
        raise ContractViolation(f"action must be {LEFT} (left) or {RIGHT} (right), got {action!r}")
    if is_terminal(state):
        raise ContractViolation("cannot step a terminal state")
    force = FORCE_MAG if action == RIGHT else -FORCE_MAG
    nxt = CartState(*backend.kernels.cartpole_step(
        state.x, state.x_dot, state.theta, state.theta_dot, force, PHYS))
    return nxt, 1.0, is_terminal(nxt)


def run_episode(policy, rng: np.random.Generator, max_steps: int = MAX_STEPS,
                record_trajectory: bool = False) -> EpisodeResult:
    """Run one episode of `policy` (a CartState -> action callable)."""
    state = reset(rng)
    trajectory = [] if record_trajectory else None
    steps = 0
    for _ in range(max_steps):
        action = policy(state)
        nxt, reward, terminal = step(state, action)
        steps += 1
        if record_trajectory:
            trajectory.append((state, action, reward))
        if terminal:
            break
        state = nxt
    return EpisodeResult(steps_survived=steps, trajectory=trajectory)


def random_policy(rng: np.random.Generator):
    """Policy choosing left/right uniformly at random."""
    return lambda state: int(rng.integers(2))


def constant_policy(action: int):
    return lambda state: action


def dump_trajectory(result: EpisodeResult, path) -> None:
    """Write a recorded trajectory as JSON lines, one object per step."""
    if result.trajectory is None:
        raise ContractViolation("episode was run without record_trajectory=True")
    with open(path, "w", encoding="utf-8") as fh:
        for t, (state, action, reward) in enumerate(result.trajectory):
            fh.write(json.dumps({
                "t": t,
                "x": state.x,
                "x_dot": state.x_dot,
                "theta": state.theta,
                "theta_dot": state.theta_dot,
                "action": int(action),
                "reward": reward,
            }) + "\n")
