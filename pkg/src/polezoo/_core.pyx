# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the hot inner loops.

Same API and semantics as `polezoo._core_py` (see that module for the
parameter layout and the `phys` constant block). These loops dominate zoo
building and survival evaluation, so they run without the GIL in plain C.
"""

from libc.math cimport expm1, fabs, sin, cos

import numpy as np

cimport numpy as cnp

cnp.import_array()

COMPILED = True


cdef inline void _step(double* st, double force, const double* phys) noexcept nogil:
    cdef double gravity = phys[0]
    cdef double masscart = phys[1]
    cdef double masspole = phys[2]
    cdef double half_length = phys[3]
    cdef double tau = phys[5]
    cdef double total_mass = masscart + masspole
    cdef double polemass_length = masspole * half_length
    cdef double sin_t = sin(st[2])
    cdef double cos_t = cos(st[2])
    cdef double temp = (force + polemass_length * st[3] * st[3] * sin_t) / total_mass
    cdef double theta_acc = (gravity * sin_t - cos_t * temp) / (
        half_length * (4.0 / 3.0 - masspole * cos_t * cos_t / total_mass)
    )
    cdef double x_acc = temp - polemass_length * theta_acc * cos_t / total_mass
    st[0] = st[0] + tau * st[1]
    st[1] = st[1] + tau * x_acc
    st[2] = st[2] + tau * st[3]
    st[3] = st[3] + tau * theta_acc


cdef inline void _q_forward(const double* p, const double* s, double* q, double* h) noexcept nogil:
    cdef int i, j
    cdef double acc
    for j in range(30):
        acc = p[120 + j]
        for i in range(4):
            acc += p[j * 4 + i] * s[i]
        h[j] = acc if acc > 0.0 else expm1(acc)
    for i in range(2):
        acc = p[210 + i]
        for j in range(30):
            acc += p[150 + i * 30 + j] * h[j]
        q[i] = acc


def cartpole_step(double x, double x_dot, double theta, double theta_dot,
                  double force, const double[::1] phys):
    """One explicit-Euler step of the cart-pole dynamics; returns the 4 new fields."""
    cdef double st[4]
    st[0] = x
    st[1] = x_dot
    st[2] = theta
    st[3] = theta_dot
    _step(st, force, &phys[0])
    return st[0], st[1], st[2], st[3]


def q_forward(const double[::1] params, const double[::1] s):
    """Q-values (left, right) of the 4-30-2 ELU net for one state."""
    cdef double q[2]
    cdef double h[30]
    _q_forward(&params[0], &s[0], q, h)
    return q[0], q[1]


def greedy_episode(const double[::1] params, const double[::1] s0, int max_steps,
                   const double[::1] phys):
    """Roll out the greedy policy from s0; returns the number of rewarded steps."""
    cdef double st[4]
    cdef double q[2]
    cdef double h[30]
    cdef double force_mag = phys[4]
    cdef double theta_thr = phys[6]
    cdef double x_thr = phys[7]
    cdef double force
    cdef int steps = 0
    cdef int t
    st[0] = s0[0]
    st[1] = s0[1]
    st[2] = s0[2]
    st[3] = s0[3]
    with nogil:
        for t in range(max_steps):
            _q_forward(&params[0], st, q, h)
            force = force_mag if q[1] > q[0] else -force_mag
            _step(st, force, &phys[0])
            steps += 1
            if fabs(st[2]) > theta_thr or fabs(st[0]) > x_thr:
                break
    return steps


def batch_q_grad(const double[::1] params, const double[:, ::1] s,
                 const cnp.int64_t[::1] a, const double[::1] r,
                 const double[:, ::1] s2, const double[::1] done, double gamma):
    """Gradient of the mean squared TD error over one replay minibatch."""
    cdef int n = s.shape[0]
    cdef cnp.ndarray[double, ndim=1] grad_arr = np.zeros(212)
    cdef double[::1] grad = grad_arr
    cdef double q[2]
    cdef double h[30]
    cdef double qt[2]
    cdef double ht[30]
    cdef double dh[30]
    cdef double loss = 0.0
    cdef double target, d, mx, dpre
    cdef int b, i, j, ai
    with nogil:
        for b in range(n):
            _q_forward(&params[0], &s2[b, 0], qt, ht)
            mx = qt[0] if qt[0] >= qt[1] else qt[1]
            target = r[b] + gamma * mx * (1.0 - done[b])
            _q_forward(&params[0], &s[b, 0], q, h)
            ai = <int>a[b]
            d = q[ai] - target
            loss += d * d
            d = 2.0 * d / n
            for j in range(30):
                grad[150 + ai * 30 + j] += d * h[j]
                dh[j] = d * params[150 + ai * 30 + j]
            grad[210 + ai] += d
            for j in range(30):
                dpre = dh[j] * (1.0 if h[j] > 0.0 else h[j] + 1.0)
                for i in range(4):
                    grad[j * 4 + i] += dpre * s[b, i]
                grad[120 + j] += dpre
    return grad_arr, loss / n
