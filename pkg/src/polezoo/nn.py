"""Minimal dense-network substrate: ELU, dense layers, explicit backprop, Adam.

Everything is float64. Gradients are computed by hand-written per-layer
chain-rule formulas; the networks in this package are tiny and fixed-shape,
so a general autodiff graph would buy nothing. Flattened parameter and
gradient vectors always use the canonical order: for each layer in turn, the
weight matrix row-major, then the bias.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractViolation, NumericalError


def elu(x):
    """Exponential linear unit: x for x > 0, exp(x) - 1 otherwise."""
    arr = np.asarray(x, dtype=float)
    out = np.where(arr > 0.0, arr, np.expm1(arr))
    return float(out) if out.ndim == 0 else out


def elu_grad(x):
    """Derivative of elu: 1 for x > 0, exp(x) otherwise (continuous at 0)."""
    arr = np.asarray(x, dtype=float)
    out = np.where(arr > 0.0, 1.0, np.exp(arr))
    return float(out) if out.ndim == 0 else out


@dataclass
class DenseLayer:
    """Affine map y = W x + b with W of shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ContractViolation("DenseLayer needs a 2-D weight matrix and 1-D bias")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ContractViolation(
                f"bias length {self.bias.shape[0]} != output dim {self.weights.shape[0]}"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ContractViolation("DenseLayer entries must be finite")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.bias.size

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Pre-activation W x + b; x is one vector or a (batch, in) matrix."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_in:
            raise ContractViolation(f"input length {x.shape[-1]} != layer input dim {self.n_in}")
        return x @ self.weights.T + self.bias


def init_dense(rng: np.random.Generator, n_in: int, n_out: int) -> DenseLayer:
    """Uniform init in [-1/sqrt(n_in), 1/sqrt(n_in)] for weights and bias."""
    bound = 1.0 / np.sqrt(n_in)
    return DenseLayer(
        weights=rng.uniform(-bound, bound, size=(n_out, n_in)),
        bias=rng.uniform(-bound, bound, size=n_out),
    )


class Mlp:
    """Dense stack with ELU between layers and a linear output layer.

    `forward` caches the pass; `backward` consumes the cache and returns the
    flat parameter gradient. One backward per forward.
    """

    def __init__(self, layers: list[DenseLayer]):
        if not layers:
            raise ContractViolation("Mlp needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.n_out != nxt.n_in:
                raise ContractViolation(
                    f"layer dims do not chain: {prev.n_out} -> {nxt.n_in}"
                )
        self.layers = layers
        self._cache = None

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise ContractViolation("Mlp.forward takes a single input vector")
        inputs = []  # input fed to each layer
        pres = []  # pre-activation of each layer
        h = x
        for i, layer in enumerate(self.layers):
            inputs.append(h)
            pre = layer.forward(h)
            pres.append(pre)
            h = elu(pre) if i < len(self.layers) - 1 else pre
        self._cache = (inputs, pres)
        return h

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        """Flat d(loss)/d(params) given d(loss)/d(output); needs a cached forward."""
        if self._cache is None:
            raise ContractViolation("backward called without a matching forward")
        inputs, pres = self._cache
        self._cache = None
        g = np.asarray(upstream, dtype=float)
        if g.shape != (self.layers[-1].n_out,):
            raise ContractViolation("upstream gradient shape does not match the output")

        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            g_w = np.outer(g, inputs[i])
            g_b = g.copy()
            grads[i] = (g_w, g_b)
            if i > 0:
                g = layer.weights.T @ g
                g = g * elu_grad(pres[i - 1])
        return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])

    def params_flat(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([l.weights.ravel(), l.bias]) for l in self.layers]
        )

    def set_params_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ContractViolation(f"expected {self.n_params} params, got {flat.shape}")
        pos = 0
        for layer in self.layers:
            nw = layer.weights.size
            layer.weights = flat[pos : pos + nw].reshape(layer.weights.shape).copy()
            pos += nw
            nb = layer.bias.size
            layer.bias = flat[pos : pos + nb].copy()
            pos += nb


@dataclass
class AdamState:
    """Adam moments plus hyperparameters; t counts completed steps."""

    m: np.ndarray
    v: np.ndarray
    t: int
    lr: float
    beta1: float
    beta2: float
    eps: float


def adam_init(n: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(m=np.zeros(n), v=np.zeros(n), t=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """One bias-corrected Adam update; returns (new params, new state).

    Note that for a constant gradient the bias-corrected update magnitude is
    lr*|g|/(|g| + eps) at every step, i.e. the sequence is non-increasing but
    not strictly decreasing.
    """
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ContractViolation("params, grads and Adam moments must share one length")
    if not np.isfinite(grads).all():
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NumericalError(f"poisoned gradient: non-finite entry at index {bad}")

    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, t=t)
