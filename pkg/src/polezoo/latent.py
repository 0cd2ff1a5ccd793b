"""Interpolation sweeps between agents, in latent space and in weight space.

An agent's embedding is the encoder's posterior mean for its weight vector.
A sweep walks the interpolation coefficient across [0, 1.5] (beyond 1 is
extrapolation) and at each point measures the survival time of (a) the net
decoded from the interpolated embeddings and (b) the net built from directly
interpolated weight vectors, against a straight-line baseline between the
decoded endpoints' survivals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent import devectorize, survival_time
from .errors import ContractViolation
from .rng import make_rng
from .vae import GenModel, decode, encode

# 20 coefficients covering [0, 1.5]; denser on [0, 1] so that both exact
# endpoints are on the grid (evaluated against the endpoint-survival line).
DEFAULT_ALPHAS = tuple(np.concatenate([np.linspace(0.0, 1.0, 14),
                                       np.linspace(1.0, 1.5, 7)[1:]]))


@dataclass
class SweepRecord:
    alpha: float
    survival_latent: float
    survival_weight: float
    baseline_line: float


def embed(model: GenModel, w: np.ndarray, label=None) -> np.ndarray:
    """Deterministic embedding: the encoder's posterior mean."""
    mu, _ = encode(model, w, label=label)
    return mu


def lerp(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """(1 - alpha) * a + alpha * b; alpha outside [0, 1] extrapolates."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(f"lerp endpoints differ in shape: {a.shape} vs {b.shape}")
    return (1.0 - alpha) * a + alpha * b


def sweep(model: GenModel, w_a: np.ndarray, w_b: np.ndarray,
          rng: np.random.Generator, alphas=None, eval_episodes: int = 100,
          label=None) -> list[SweepRecord]:
    """Survival along the latent and weight interpolation paths.

    Each sweep point gets its own evaluation seed (drawn once up front from
    `rng`), shared between the latent-path and weight-path nets at that alpha
    so the two see identical evaluation episodes. The baseline column is the
    straight line between the decoded endpoints' survival times.
    """
    alphas = DEFAULT_ALPHAS if alphas is None else tuple(float(a) for a in alphas)
    mu_a = embed(model, w_a, label=label)
    mu_b = embed(model, w_b, label=label)

    seeds = rng.integers(0, 2**63 - 1, size=len(alphas) + 2)
    s_end_a = survival_time(devectorize(decode(model, mu_a, label=label)),
                            make_rng(int(seeds[-2])), n_episodes=eval_episodes)
    s_end_b = survival_time(devectorize(decode(model, mu_b, label=label)),
                            make_rng(int(seeds[-1])), n_episodes=eval_episodes)

    records = []
    for k, alpha in enumerate(alphas):
        latent_net = devectorize(decode(model, lerp(mu_a, mu_b, alpha), label=label))
        weight_net = devectorize(lerp(w_a, w_b, alpha))
        s_latent = survival_time(latent_net, make_rng(int(seeds[k])), n_episodes=eval_episodes)
        s_weight = survival_time(weight_net, make_rng(int(seeds[k])), n_episodes=eval_episodes)
        baseline = (1.0 - alpha) * s_end_a + alpha * s_end_b
        records.append(SweepRecord(alpha=alpha, survival_latent=s_latent,
                                   survival_weight=s_weight, baseline_line=baseline))
    return records
