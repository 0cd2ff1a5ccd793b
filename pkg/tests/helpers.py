"""Independent oracles shared by the tests.

Everything here is deliberately naive (explicit loops, two-pass statistics,
central finite differences) and stays independent of the implementation
paths it checks.
"""

import numpy as np


def central_diff_grad(f, x, h=1e-4, indices=None):
    """Central finite-difference gradient of scalar f at x (selected indices)."""
    x = np.asarray(x, dtype=float)
    indices = range(x.size) if indices is None else indices
    grad = {}
    for j in indices:
        xp = x.copy()
        xp[j] += h
        xm = x.copy()
        xm[j] -= h
        grad[j] = (f(xp) - f(xm)) / (2.0 * h)
    return grad


def rel_err(a, b, floor=1e-3):
    """|a - b| relative to the larger magnitude, floored for near-zero values."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def greedy_bipartite_oracle(rho):
    """Explicit-scan greedy matching with lexicographic tie-break."""
    rho = np.asarray(rho, dtype=float)
    n_a, n_b = rho.shape
    used_a, used_b = set(), set()
    pairs = []
    for _ in range(min(n_a, n_b)):
        best = None
        for i in range(n_a):
            if i in used_a:
                continue
            for j in range(n_b):
                if j in used_b:
                    continue
                if best is None or rho[i, j] > best[2]:
                    best = (i, j, rho[i, j])
        pairs.append((best[0], best[1], float(best[2])))
        used_a.add(best[0])
        used_b.add(best[1])
    return pairs


def semi_matching_oracle(rho):
    """Per-row scan for the best column, smallest column on ties."""
    rho = np.asarray(rho, dtype=float)
    pairs = []
    for i in range(rho.shape[0]):
        best_j = 0
        for j in range(1, rho.shape[1]):
            if rho[i, j] > rho[i, best_j]:
                best_j = j
        pairs.append((i, best_j, float(rho[i, best_j])))
    return pairs


def convergence_distance_oracle(rho):
    """CD from the two matching oracles: sum of semi minus bipartite correlation."""
    semi = {i: r for i, _, r in semi_matching_oracle(rho)}
    bip = {i: r for i, _, r in greedy_bipartite_oracle(rho)}
    return sum(semi[i] - bip[i] for i in bip)


def two_pass_abs_stats(acts):
    """Two-pass mean/population-std of |activations|, explicit loops."""
    acts = np.abs(np.asarray(acts, dtype=float))
    n, units = acts.shape
    mu = np.zeros(units)
    for i in range(units):
        total = 0.0
        for t in range(n):
            total += acts[t, i]
        mu[i] = total / n
    sigma = np.zeros(units)
    for i in range(units):
        total = 0.0
        for t in range(n):
            total += (acts[t, i] - mu[i]) ** 2
        sigma[i] = np.sqrt(total / n)
    return mu, sigma


def pearson_oracle(a, b):
    """Direct-definition correlation of two 1-D series (population moments)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mu_a, mu_b = a.mean(), b.mean()
    sa = np.sqrt(np.mean((a - mu_a) ** 2))
    sb = np.sqrt(np.mean((b - mu_b) ** 2))
    if sa < 1e-12 or sb < 1e-12:
        return 0.0
    return float(np.mean((a - mu_a) * (b - mu_b)) / (sa * sb))
