"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_backends.py [--episodes 40] [--repeats 3]

Times the four hot kernels plus two end-to-end paths (survival evaluation
and full agent training) on both backends and prints the speedups.
"""

import argparse
import time

import numpy as np

from polezoo import backend, cartpole
from polezoo.agent import QNet, TrainConfig, survival_time, train_agent
from polezoo.rng import make_rng


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        n = fn()
        best = min(best, (time.perf_counter() - start) / n)
    return best


def bench_backend(name, episodes, repeats):
    backend.set_backend(name)
    kernels = backend.kernels
    rng = make_rng(0)
    net = QNet.random(rng)
    params = net.params
    state = rng.uniform(-0.05, 0.05, 4)
    batch = (
        rng.uniform(-0.2, 0.2, (64, 4)),
        rng.integers(0, 2, 64).astype(np.int64),
        np.ones(64),
        rng.uniform(-0.2, 0.2, (64, 4)),
        np.zeros(64),
    )

    def q_forward():
        for _ in range(20_000):
            kernels.q_forward(params, state)
        return 20_000

    def physics_step():
        for _ in range(50_000):
            kernels.cartpole_step(0.0, 0.1, 0.02, -0.1, 10.0, cartpole.PHYS)
        return 50_000

    def rollout():
        steps = 0
        for _ in range(500):
            steps += kernels.greedy_episode(params, state, 200, cartpole.PHYS)
        return steps

    def grad():
        for _ in range(2_000):
            kernels.batch_q_grad(params, *batch, 0.99)
        return 2_000

    def survival():
        survival_time(net, make_rng(1), n_episodes=100)
        return 1

    def train():
        train_agent(TrainConfig(episodes=episodes, seed=2))
        return 1

    rows = {}
    for label, fn in [("q_forward (per call)", q_forward),
                      ("cartpole_step (per call)", physics_step),
                      ("greedy rollout (per env step)", rollout),
                      ("batch_q_grad 64 (per call)", grad),
                      ("survival_time 100 eps (per eval)", survival),
                      (f"train_agent {episodes} eps (per run)", train)]:
        rows[label] = timeit(fn, repeats)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--episodes", type=int, default=40,
                        help="training episodes for the end-to-end row")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not backend.compiled_available():
        print("compiled extension not built; benchmarking python backend only")
        names = ["python"]
    else:
        names = ["python", "compiled"]

    results = {name: bench_backend(name, args.episodes, args.repeats) for name in names}
    width = max(len(k) for k in next(iter(results.values())))
    header = f"{'kernel':<{width}}  " + "".join(f"{n:>14}" for n in names)
    if len(names) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label in next(iter(results.values())):
        line = f"{label:<{width}}  "
        for name in names:
            line += f"{results[name][label] * 1e6:>12.2f}us"
        if len(names) == 2:
            line += f"{results['python'][label] / results['compiled'][label]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
