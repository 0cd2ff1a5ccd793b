"""Pure-Python/NumPy kernels.

Fallback for the compiled extension `polezoo._core`; the module-level API is
identical and `polezoo.backend` picks whichever is available. Both backends
are deterministic on their own; across backends, values agree to float64
rounding (dot products may associate differently), which the backend tests
pin down.

Parameter layout of the 212-float policy vector (canonical order, shared
with `polezoo.agent`):

    [0:120]   hidden weights, 30x4 row-major (one row per hidden unit)
    [120:150] hidden bias
    [150:210] output weights, 2x30 row-major
    [210:212] output bias

`phys` is the 8-float physics constant block built in `polezoo.cartpole`:
gravity, cart mass, pole mass, half pole length, force magnitude, time step,
pole-angle threshold, cart-position threshold.
"""

import math

import numpy as np

COMPILED = False


def _views(params):
    w1 = params[:120].reshape(30, 4)
    b1 = params[120:150]
    w2 = params[150:210].reshape(2, 30)
    b2 = params[210:212]
    return w1, b1, w2, b2


def cartpole_step(x, x_dot, theta, theta_dot, force, phys):
    """One explicit-Euler step of the cart-pole dynamics; returns the 4 new fields."""
    gravity = phys[0]
    masscart = phys[1]
    masspole = phys[2]
    half_length = phys[3]
    tau = phys[5]
    total_mass = masscart + masspole
    polemass_length = masspole * half_length

    sin_t = math.sin(theta)
    cos_t = math.cos(theta)
    temp = (force + polemass_length * theta_dot * theta_dot * sin_t) / total_mass
    theta_acc = (gravity * sin_t - cos_t * temp) / (
        half_length * (4.0 / 3.0 - masspole * cos_t * cos_t / total_mass)
    )
    x_acc = temp - polemass_length * theta_acc * cos_t / total_mass

    return (
        x + tau * x_dot,
        x_dot + tau * x_acc,
        theta + tau * theta_dot,
        theta_dot + tau * theta_acc,
    )


def q_forward(params, s):
    """Q-values (left, right) of the 4-30-2 ELU net for one state."""
    w1, b1, w2, b2 = _views(params)
    pre = w1 @ s + b1
    h = np.where(pre > 0.0, pre, np.expm1(pre))
    q = w2 @ h + b2
    return float(q[0]), float(q[1])


def greedy_episode(params, s0, max_steps, phys):
    """Roll out the greedy policy from s0; returns the number of rewarded steps.

    Ties in the Q-values resolve to action 0 (left), matching
    `polezoo.agent.act_epsilon` with epsilon = 0.
    """
    w1, b1, w2, b2 = _views(params)
    force_mag = phys[4]
    theta_thr = phys[6]
    x_thr = phys[7]

    x, x_dot, theta, theta_dot = (float(s0[0]), float(s0[1]), float(s0[2]), float(s0[3]))
    s = np.empty(4)
    steps = 0
    for _ in range(max_steps):
        s[0] = x
        s[1] = x_dot
        s[2] = theta
        s[3] = theta_dot
        pre = w1 @ s + b1
        h = np.where(pre > 0.0, pre, np.expm1(pre))
        q = w2 @ h + b2
        force = force_mag if q[1] > q[0] else -force_mag
        x, x_dot, theta, theta_dot = cartpole_step(x, x_dot, theta, theta_dot, force, phys)
        steps += 1
        if abs(theta) > theta_thr or abs(x) > x_thr:
            break
    return steps


def batch_q_grad(params, s, a, r, s2, done, gamma):
    """Gradient of the mean squared TD error over one replay minibatch.

    Targets r + gamma * max_a' q(s') are treated as constants (semi-gradient);
    done = 1.0 zeroes the bootstrap term. Returns (flat gradient, loss).
    """
    w1, b1, w2, b2 = _views(params)
    n = s.shape[0]

    pre_t = s2 @ w1.T + b1
    h_t = np.where(pre_t > 0.0, pre_t, np.expm1(pre_t))
    q_t = h_t @ w2.T + b2
    target = r + gamma * q_t.max(axis=1) * (1.0 - done)

    pre = s @ w1.T + b1
    h = np.where(pre > 0.0, pre, np.expm1(pre))
    q = h @ w2.T + b2

    rows = np.arange(n)
    diff = q[rows, a] - target
    loss = float(np.mean(diff * diff))

    dq = np.zeros((n, 2))
    dq[rows, a] = 2.0 * diff / n
    g_w2 = dq.T @ h
    g_b2 = dq.sum(axis=0)
    dh = dq @ w2
    dpre = dh * np.where(h > 0.0, 1.0, h + 1.0)
    g_w1 = dpre.T @ s
    g_b1 = dpre.sum(axis=0)

    grad = np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2])
    return grad, loss
