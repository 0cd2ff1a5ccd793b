"""Missing-weight repair by rejection sampling from the generative model.

A damaged net has a fraction of its 212 weights zeroed (the mask marks the
missing positions). Repair samples a budget of candidate weight vectors from
the model, ranks them by one of two criteria against the damaged vector:

- missing criterion: squared distance over the *existing* positions only;
- whole criterion: squared distance over all positions (missing entries of
  the damaged vector are zero, which biases toward small-weight candidates);

then patches the missing positions from the best candidates in order and
accepts the first whose survival time lands within epsilon of the original
undamaged net's survival. The acceptance test compares against the original
net's recorded survival: recovery is only meaningful relative to what was
lost, not relative to the damaged husk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agent import N_PARAMS, devectorize, survival_time
from .errors import ContractViolation
from .rng import make_rng
from .vae import GenModel, sample_networks
from .zoo import Zoo


@dataclass
class DamagedNet:
    weights: np.ndarray  # zeros at missing positions
    missing_mask: np.ndarray  # True exactly where weights were zeroed
    original_survival: float


@dataclass
class RepairOutcome:
    success: bool
    candidate: np.ndarray | None
    repaired_survival: float
    st_error: float  # |ST(patched) - ST(original)|; success iff < epsilon
    samples_used: int  # candidates actually patched and evaluated


def degrade(w: np.ndarray, fraction: float, rng: np.random.Generator,
            eval_episodes: int = 100) -> DamagedNet:
    """Zero a random fraction of the weights; records the undamaged survival."""
    if not 0.0 <= fraction <= 1.0:
        raise ContractViolation(f"fraction must be in [0, 1], got {fraction}")
    w = np.asarray(w, dtype=float)
    if w.shape != (N_PARAMS,):
        raise ContractViolation(f"weight vector must have length {N_PARAMS}")
    original = survival_time(devectorize(w), rng, n_episodes=eval_episodes)
    k = round(fraction * N_PARAMS)
    mask = np.zeros(N_PARAMS, dtype=bool)
    if k:
        mask[rng.choice(N_PARAMS, size=k, replace=False, shuffle=False)] = True
    damaged = w.copy()
    damaged[mask] = 0.0
    return DamagedNet(weights=damaged, missing_mask=mask, original_survival=original)


def missing_criterion(d: DamagedNet, c: np.ndarray) -> float:
    """Squared distance over existing positions only; masked entries are ignored."""
    c = np.asarray(c, dtype=float)
    if c.shape != d.weights.shape:
        raise ContractViolation("candidate length does not match the damaged net")
    keep = ~d.missing_mask
    diff = d.weights[keep] - c[keep]
    return float(diff @ diff)


def whole_criterion(d: DamagedNet, c: np.ndarray) -> float:
    """Squared distance over all positions (= missing + sum of masked c^2)."""
    c = np.asarray(c, dtype=float)
    if c.shape != d.weights.shape:
        raise ContractViolation("candidate length does not match the damaged net")
    diff = d.weights - c
    return float(diff @ diff)


CRITERIA = {"missing": missing_criterion, "whole": whole_criterion}


def patch(d: DamagedNet, candidate: np.ndarray) -> np.ndarray:
    """Damaged weights with the masked positions filled from the candidate."""
    return np.where(d.missing_mask, np.asarray(candidate, dtype=float), d.weights)


def repair(d: DamagedNet, model: GenModel, rng: np.random.Generator,
           source: Zoo | list | None = None, sample_budget: int = 200, k: int = 10,
           epsilon: float = 5.0, criterion=whole_criterion, sample_mode: str = "posterior",
           eval_episodes: int = 100, label=None) -> RepairOutcome:
    """Rejection-sampling repair; failure is an outcome, not an error.

    Samples `sample_budget` candidates, ranks ascending by `criterion`
    (stable, so ties keep sampling order), and accepts the first of the k
    best whose patched survival is within epsilon of the original survival.
    """
    if sample_budget < 0 or k < 1:
        raise ContractViolation("sample_budget must be >= 0 and k >= 1")
    if sample_budget == 0:
        return RepairOutcome(success=False, candidate=None, repaired_survival=math.nan,
                             st_error=math.inf, samples_used=0)

    candidates = sample_networks(model, sample_budget, mode=sample_mode,
                                 source=source, rng=rng, label=label)
    scores = np.array([criterion(d, c) for c in candidates])
    order = np.argsort(scores, kind="stable")[:k]

    best_error = math.inf
    best_survival = math.nan
    used = 0
    for idx in order:
        candidate = candidates[idx]
        st = survival_time(devectorize(patch(d, candidate)), rng, n_episodes=eval_episodes)
        used += 1
        err = abs(st - d.original_survival)
        if err < epsilon:
            return RepairOutcome(success=True, candidate=candidate.copy(),
                                 repaired_survival=st, st_error=err, samples_used=used)
        if err < best_error:
            best_error = err
            best_survival = st
    return RepairOutcome(success=False, candidate=None, repaired_survival=best_survival,
                         st_error=best_error, samples_used=used)


def degradation_sweep(w: np.ndarray, model: GenModel, rng: np.random.Generator,
                      source: Zoo | list | None = None, fractions=None,
                      sample_budget: int = 200, k: int = 10, epsilon: float = 5.0,
                      eval_episodes: int = 100):
    """Both criteria at each degradation level; rows mirror the repair report.

    Returns (fraction, criterion, success, st_error, samples_used) tuples.
    """
    fractions = np.linspace(0.1, 1.0, 10) if fractions is None else fractions
    rows = []
    for fraction in fractions:
        damaged = degrade(w, float(fraction), rng, eval_episodes=eval_episodes)
        for name, criterion in CRITERIA.items():
            outcome = repair(damaged, model, rng, source=source, sample_budget=sample_budget,
                             k=k, epsilon=epsilon, criterion=criterion,
                             eval_episodes=eval_episodes)
            rows.append((float(fraction), name, outcome.success, outcome.st_error,
                         outcome.samples_used))
    return rows
