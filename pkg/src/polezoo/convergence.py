"""Convergent-learning analysis between pairs of trained nets.

Both nets are run over a shared reference set of simulator states; per-unit
statistics of the *absolute* activations (the nets use ELU, whose negative
activations carry signal) feed a Pearson correlation matrix between the
units of the two nets. Two pairings of units are derived from it:

- bipartite: repeatedly take the best remaining (i, j) pair and retire both
  units, giving a one-to-one matching;
- semi: every unit i of the first net independently takes its best partner,
  so second-net units may be reused.

The convergence distance is the total correlation the bipartite matching
gives up relative to the per-unit optimum: sum_i rho[i, semi(i)] -
rho[i, bipartite(i)]. It is 0 when the two pairings agree (the nets are a
unit permutation of each other in correlation structure) and grows as their
representations diverge. The semi-matching is a pure per-row argmax, so the
processing order cannot change it; pairs are merely reported in descending
bipartite-correlation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import cartpole
from .agent import QNet, devectorize
from .cartpole import run_episode, random_policy
from .errors import ContractViolation
from .zoo import Group, Zoo

HIDDEN = "hidden"
OUTPUT = "output"

SIGMA_FLOOR = 1e-12  # below this a unit counts as dead; its correlations are 0


@dataclass
class ReferenceSet:
    states: np.ndarray  # (n, 4)
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass
class CorrelationMatrix:
    layer: str
    rho: np.ndarray  # (units_a, units_b)
    mu_a: np.ndarray
    sigma_a: np.ndarray
    mu_b: np.ndarray
    sigma_b: np.ndarray


@dataclass
class Matching:
    kind: str  # "bipartite" | "semi"
    pairs: list  # (i, j, rho_ij)

    def assignment(self) -> dict:
        return {i: (j, r) for i, j, r in self.pairs}


def collect_reference_states(zoo: Zoo | None, rng: np.random.Generator,
                             n: int = 10_000) -> ReferenceSet:
    """Visit n diverse non-terminal states with a mix of random and zoo policies.

    Episodes alternate between the uniform-random policy and greedy policies
    of randomly chosen zoo agents, cycling through the four survival groups
    so every skill level contributes states. An empty zoo falls back to the
    random policy alone (flagged in provenance).
    """
    if n < 1:
        raise ContractViolation("n must be at least 1")
    from .agent import greedy_policy  # avoid import cycle at module load

    by_group = {g: [] for g in Group}
    if zoo is not None:
        for r in zoo.records:
            by_group[r.group].append(r)
    groups_available = [g for g in Group if by_group[g]]
    random_only = not groups_available

    states = []
    policies_used = {"random": 0, "greedy": 0}
    cycle = 0
    while len(states) < n:
        use_random = random_only or cycle % 2 == 0
        if use_random:
            policy = random_policy(rng)
            policies_used["random"] += 1
        else:
            group = groups_available[(cycle // 2) % len(groups_available)]
            record = by_group[group][rng.integers(len(by_group[group]))]
            policy = greedy_policy(devectorize(record.weights))
            policies_used["greedy"] += 1
        result = run_episode(policy, rng, record_trajectory=True)
        states.extend(s.as_array() for s, _, _ in result.trajectory)
        cycle += 1

    provenance = {"n": n, "policies": policies_used, "random_only": random_only}
    return ReferenceSet(states=np.array(states[:n]), provenance=provenance)


def _abs_activations(net: QNet, refs: ReferenceSet, layer: str) -> np.ndarray:
    if layer == HIDDEN:
        return np.abs(net.hidden(refs.states))
    if layer == OUTPUT:
        return np.abs(net.outputs(refs.states))
    raise ContractViolation(f"layer must be {HIDDEN!r} or {OUTPUT!r}, got {layer!r}")


def activation_stats(net: QNet, refs: ReferenceSet, layer: str):
    """Per-unit mean and population std of the absolute activations."""
    if len(refs) == 0:
        raise ContractViolation("reference set is empty")
    acts = _abs_activations(net, refs, layer)
    return acts.mean(axis=0), acts.std(axis=0)


def correlation_matrix(net_a: QNet, net_b: QNet, refs: ReferenceSet,
                       layer: str) -> CorrelationMatrix:
    """Pearson correlation of absolute activations between all unit pairs.

    Units with std below SIGMA_FLOOR in either net get 0 by convention, so
    dead units never win an argmax.
    """
    acts_a = _abs_activations(net_a, refs, layer)
    acts_b = _abs_activations(net_b, refs, layer)
    n = acts_a.shape[0]
    if n == 0:
        raise ContractViolation("reference set is empty")
    mu_a = acts_a.mean(axis=0)
    mu_b = acts_b.mean(axis=0)
    sigma_a = acts_a.std(axis=0)
    sigma_b = acts_b.std(axis=0)
    cov = (acts_a - mu_a).T @ (acts_b - mu_b) / n
    denom = np.outer(sigma_a, sigma_b)
    alive = (sigma_a[:, None] > SIGMA_FLOOR) & (sigma_b[None, :] > SIGMA_FLOOR)
    rho = np.zeros_like(cov)
    np.divide(cov, denom, out=rho, where=alive)
    return CorrelationMatrix(layer=layer, rho=rho, mu_a=mu_a, sigma_a=sigma_a,
                             mu_b=mu_b, sigma_b=sigma_b)


def greedy_bipartite(rho: np.ndarray) -> Matching:
    """One-to-one matching by repeatedly taking the best remaining pair.

    Ties resolve to the smallest (i, j) in row-major order.
    """
    rho = np.asarray(rho, dtype=float)
    work = rho.copy()
    n_a, n_b = rho.shape
    pairs = []
    for _ in range(min(n_a, n_b)):
        flat = int(np.argmax(work))  # first maximum in C order = smallest (i, j)
        i, j = divmod(flat, n_b)
        pairs.append((i, j, float(rho[i, j])))
        work[i, :] = -np.inf
        work[:, j] = -np.inf
    return Matching(kind="bipartite", pairs=pairs)


def semi_matching(rho: np.ndarray) -> Matching:
    """Per-unit argmax pairing; second-net units may repeat. Ties take the smallest j."""
    rho = np.asarray(rho, dtype=float)
    best = rho.argmax(axis=1)
    pairs = [(i, int(j), float(rho[i, j])) for i, j in enumerate(best)]
    pairs.sort(key=lambda p: (-p[2], p[0]))
    return Matching(kind="semi", pairs=pairs)


def convergence_distance_from_rho(rho: np.ndarray) -> float:
    """sum_i rho[i, semi(i)] - rho[i, bipartite(i)]; always >= 0."""
    semi = semi_matching(rho).assignment()
    bipartite = greedy_bipartite(rho).assignment()
    return float(sum(semi[i][1] - bipartite[i][1] for i in bipartite))


def convergence_distance(net_a: QNet, net_b: QNet, refs: ReferenceSet, layer: str) -> float:
    """Directional convergence distance computed from net_a's perspective."""
    return convergence_distance_from_rho(correlation_matrix(net_a, net_b, refs, layer).rho)


def convergence_report(net_a: QNet, net_b: QNet, refs: ReferenceSet, layer: str):
    """(forward, backward, mean) convergence distances for one pair."""
    rho = correlation_matrix(net_a, net_b, refs, layer).rho
    forward = convergence_distance_from_rho(rho)
    backward = convergence_distance_from_rho(rho.T)
    return forward, backward, (forward + backward) / 2.0


def pairwise_cd(nets: list, refs: ReferenceSet, layer: str):
    """All-pairs rows (index_a, index_b, forward, backward, mean)."""
    rows = []
    for a, b in combinations(range(len(nets)), 2):
        fwd, bwd, mean = convergence_report(nets[a], nets[b], refs, layer)
        rows.append((a, b, fwd, bwd, mean))
    return rows


def export_correlation_csv(cm: CorrelationMatrix, path) -> None:
    """Plain CSV grid of the correlation matrix (heatmap-ready)."""
    np.savetxt(path, cm.rho, delimiter=",", fmt="%.10g",
               header=f"layer={cm.layer} rows=net_a units, cols=net_b units")
