"""Variational autoencoder over 212-float agent weight vectors.

Encoder and decoder are ELU nets with concatenation skip connections (the
layer input is re-concatenated onto the hidden activation before the next
layer); the latent space is a 32-dimensional diagonal Gaussian. The
conditional variant concatenates a one-hot survival-group label onto both
encoder and decoder inputs.

Shapes (unconditional; conditional adds 4 one-hot entries to both inputs):

    encoder: x(212) -> 128 ELU -> concat(x, h): 340 -> 64 ELU -> mu(32), logvar(32)
    decoder: z(32)  -> 64 ELU  -> concat(z, h): 96  -> 128 ELU -> 212 linear

Training minimizes reconstruction (summed squared error, the Gaussian
negative log-likelihood up to constants) plus the closed-form KL to the
standard normal prior, with one noise sample per item. Gradients are
explicit chain-rule formulas; a finite-difference harness in the test suite
checks them end to end.

Model file layout (little-endian): magic b"POLEGEN1", u32 version, u32
descriptor length, canonical-JSON architecture descriptor, then all
parameters as float32 in canonical layer order (each layer: weights
row-major, then bias). Trained parameters are snapped to float32 before the
model is returned, so save/load is lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .agent import N_PARAMS
from .errors import ContractViolation, FileFormatError, NumericalError
from .nn import DenseLayer, adam_init, adam_step, init_dense
from .rng import make_rng
from .zoo import Group, Zoo

INPUT_DIM = N_PARAMS
LATENT_DIM = 32
ENC_H1 = 128
ENC_H2 = 64
DEC_H1 = 64
DEC_H2 = 128
N_GROUPS = 4

LOGVAR_MIN = -20.0
LOGVAR_MAX = 5.0

MODEL_MAGIC = b"POLEGEN1"
MODEL_VERSION = 1

_LAYER_NAMES = ("enc1", "enc2", "enc_mu", "enc_logvar", "dec1", "dec2", "dec_out")


@dataclass
class GenModel:
    enc1: DenseLayer
    enc2: DenseLayer
    enc_mu: DenseLayer
    enc_logvar: DenseLayer
    dec1: DenseLayer
    dec2: DenseLayer
    dec_out: DenseLayer
    n_conditions: int = 0

    @property
    def conditional(self) -> bool:
        return self.n_conditions > 0

    def layers(self) -> list[DenseLayer]:
        return [getattr(self, name) for name in _LAYER_NAMES]

    @property
    def n_params(self) -> int:
        return sum(l.n_params for l in self.layers())

    def params_flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([l.weights.ravel(), l.bias]) for l in self.layers()])

    def set_params_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for layer in self.layers():
            nw = layer.weights.size
            layer.weights = flat[pos : pos + nw].reshape(layer.weights.shape).copy()
            pos += nw
            nb = layer.bias.size
            layer.bias = flat[pos : pos + nb].copy()
            pos += nb


def init_gen_model(rng: np.random.Generator, conditional: bool = False) -> GenModel:
    cond = N_GROUPS if conditional else 0
    x_in = INPUT_DIM + cond
    z_in = LATENT_DIM + cond
    return GenModel(
        enc1=init_dense(rng, x_in, ENC_H1),
        enc2=init_dense(rng, x_in + ENC_H1, ENC_H2),
        enc_mu=init_dense(rng, ENC_H2, LATENT_DIM),
        enc_logvar=init_dense(rng, ENC_H2, LATENT_DIM),
        dec1=init_dense(rng, z_in, DEC_H1),
        dec2=init_dense(rng, z_in + DEC_H1, DEC_H2),
        dec_out=init_dense(rng, DEC_H2, INPUT_DIM),
        n_conditions=cond,
    )


def _elu(a):
    return np.where(a > 0.0, a, np.expm1(a))


def _elu_grad_from_act(h):
    # elu is strictly increasing through 0, so sign(h) == sign(pre) and
    # exp(pre) == h + 1 on the negative branch.
    return np.where(h > 0.0, 1.0, h + 1.0)


def _one_hot(labels, n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((labels.shape[0], n))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _label_indices(label, batch: int) -> np.ndarray:
    """Accepts a Group, an int index 0-3, or a sequence of either."""
    if isinstance(label, Group):
        label = int(label) - 1
    if np.isscalar(label):
        idx = np.full(batch, int(label))
    else:
        idx = np.array([int(l) - 1 if isinstance(l, Group) else int(l) for l in label])
    if idx.shape != (batch,) or idx.min() < 0 or idx.max() >= N_GROUPS:
        raise ContractViolation("labels must be group indices 0-3 matching the batch")
    return idx


def _check_label(model: GenModel, label) -> None:
    if model.conditional and label is None:
        raise ContractViolation("conditional model requires a group label")
    if not model.conditional and label is not None:
        raise ContractViolation("unconditional model does not take a label")


def _as_batch(x, dim: int, what: str):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ContractViolation(f"{what} must have {dim} entries per row, got {x.shape}")
    return x, single


def _with_label(model: GenModel, x: np.ndarray, label) -> np.ndarray:
    if not model.conditional:
        return x
    idx = _label_indices(label, x.shape[0])
    return np.concatenate([x, _one_hot(idx, model.n_conditions)], axis=1)


def encode(model: GenModel, x, label=None):
    """Deterministic posterior parameters (mu, logvar) for weight vectors x."""
    _check_label(model, label)
    x, single = _as_batch(x, INPUT_DIM, "weight vector")
    x_in = _with_label(model, x, label)
    h1 = _elu(model.enc1.forward(x_in))
    h2 = _elu(model.enc2.forward(np.concatenate([x_in, h1], axis=1)))
    mu = model.enc_mu.forward(h2)
    logvar = np.clip(model.enc_logvar.forward(h2), LOGVAR_MIN, LOGVAR_MAX)
    if single:
        return mu[0], logvar[0]
    return mu, logvar


def reparameterize(mu, logvar, rng: np.random.Generator):
    """z = mu + sigma * eps with eps ~ N(0, I); logvar clamped for stability."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.clip(np.asarray(logvar, dtype=float), LOGVAR_MIN, LOGVAR_MAX)
    if mu.shape != logvar.shape or mu.shape[-1] != LATENT_DIM:
        raise ContractViolation(f"mu and logvar must both have {LATENT_DIM} entries per row")
    eps = rng.standard_normal(mu.shape)
    return mu + np.exp(0.5 * logvar) * eps


def decode(model: GenModel, z, label=None):
    """Deterministic mean of the Gaussian likelihood; returns 212-float rows."""
    _check_label(model, label)
    z, single = _as_batch(z, LATENT_DIM, "latent code")
    z_in = _with_label(model, z, label)
    g1 = _elu(model.dec1.forward(z_in))
    g2 = _elu(model.dec2.forward(np.concatenate([z_in, g1], axis=1)))
    x_hat = model.dec_out.forward(g2)
    if single:
        return x_hat[0]
    return x_hat


def kl_term(mu, logvar) -> float:
    """Closed-form KL(q || N(0, I)); nonnegative, 0 iff mu = 0 and logvar = 0."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    return float(-0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar)))


def elbo_loss(x, x_hat, mu, logvar):
    """(recon, kl, total) for one item; training minimizes total = recon + kl."""
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    recon = float(np.sum((x - x_hat) ** 2))
    kl = kl_term(mu, logvar)
    return recon, kl, recon + kl


@dataclass
class GenTrainConfig:
    epochs: int = 20
    batch_size: int = 10
    lr: float = 1e-3
    seed: int = 0
    mode: str = "combined"  # "combined" | "conditional"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractViolation("epochs and batch_size must be at least 1")
        if self.mode not in ("combined", "conditional"):
            raise ContractViolation(f"unknown training mode {self.mode!r}")


def _loss_and_grads(model: GenModel, x: np.ndarray, x_in: np.ndarray,
                    z_label: np.ndarray | None, eps: np.ndarray):
    """Batch-mean loss pieces and the flat parameter gradient."""
    n = x.shape[0]

    # forward, caching everything the backward pass needs
    a1 = model.enc1.forward(x_in)
    h1 = _elu(a1)
    c1 = np.concatenate([x_in, h1], axis=1)
    a2 = model.enc2.forward(c1)
    h2 = _elu(a2)
    mu = model.enc_mu.forward(h2)
    lv_raw = model.enc_logvar.forward(h2)
    lv = np.clip(lv_raw, LOGVAR_MIN, LOGVAR_MAX)
    sigma = np.exp(0.5 * lv)
    z = mu + sigma * eps
    z_in = z if z_label is None else np.concatenate([z, z_label], axis=1)
    b1 = model.dec1.forward(z_in)
    g1 = _elu(b1)
    c2 = np.concatenate([z_in, g1], axis=1)
    b2 = model.dec2.forward(c2)
    g2 = _elu(b2)
    x_hat = model.dec_out.forward(g2)

    diff = x_hat - x
    recon = float(np.sum(diff * diff) / n)
    kl = float(-0.5 * np.sum(1.0 + lv - mu * mu - np.exp(lv)) / n)

    # backward (gradients of the batch-mean total loss)
    d_xhat = 2.0 * diff / n
    g_out_w = d_xhat.T @ g2
    g_out_b = d_xhat.sum(axis=0)
    d_g2 = d_xhat @ model.dec_out.weights
    d_b2 = d_g2 * _elu_grad_from_act(g2)
    g_dec2_w = d_b2.T @ c2
    g_dec2_b = d_b2.sum(axis=0)
    d_c2 = d_b2 @ model.dec2.weights
    z_in_dim = z_in.shape[1]
    d_zin = d_c2[:, :z_in_dim].copy()
    d_g1 = d_c2[:, z_in_dim:]
    d_b1 = d_g1 * _elu_grad_from_act(g1)
    g_dec1_w = d_b1.T @ z_in
    g_dec1_b = d_b1.sum(axis=0)
    d_zin += d_b1 @ model.dec1.weights
    d_z = d_zin[:, :LATENT_DIM]  # the one-hot block carries no gradient

    d_mu = d_z + mu / n
    d_lv = d_z * eps * sigma * 0.5 - 0.5 * (1.0 - np.exp(lv)) / n
    d_lv_raw = d_lv * ((lv_raw > LOGVAR_MIN) & (lv_raw < LOGVAR_MAX))

    g_mu_w = d_mu.T @ h2
    g_mu_b = d_mu.sum(axis=0)
    g_lv_w = d_lv_raw.T @ h2
    g_lv_b = d_lv_raw.sum(axis=0)
    d_h2 = d_mu @ model.enc_mu.weights + d_lv_raw @ model.enc_logvar.weights
    d_a2 = d_h2 * _elu_grad_from_act(h2)
    g_enc2_w = d_a2.T @ c1
    g_enc2_b = d_a2.sum(axis=0)
    d_c1 = d_a2 @ model.enc2.weights
    d_h1 = d_c1[:, x_in.shape[1]:]
    d_a1 = d_h1 * _elu_grad_from_act(h1)
    g_enc1_w = d_a1.T @ x_in
    g_enc1_b = d_a1.sum(axis=0)

    grads = np.concatenate([
        g_enc1_w.ravel(), g_enc1_b,
        g_enc2_w.ravel(), g_enc2_b,
        g_mu_w.ravel(), g_mu_b,
        g_lv_w.ravel(), g_lv_b,
        g_dec1_w.ravel(), g_dec1_b,
        g_dec2_w.ravel(), g_dec2_b,
        g_out_w.ravel(), g_out_b,
    ])
    return recon, kl, recon + kl, grads


def batch_loss_grads(model: GenModel, x, eps, label=None):
    """Public wrapper around the fused pass (used by training and grad checks)."""
    _check_label(model, label)
    x, _ = _as_batch(x, INPUT_DIM, "weight vector")
    x_in = _with_label(model, x, label)
    z_label = None
    if model.conditional:
        z_label = _one_hot(_label_indices(label, x.shape[0]), model.n_conditions)
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (x.shape[0], LATENT_DIM):
        raise ContractViolation("eps must be (batch, latent_dim)")
    return _loss_and_grads(model, x, x_in, z_label, eps)


def train_gen(zoo_or_records, config: GenTrainConfig,
              rng: np.random.Generator | None = None):
    """Minibatch Adam on the ELBO; returns (model, per-epoch curve rows).

    Curve rows are (epoch, recon, kl, total), each the per-item mean over the
    epoch. Conditional mode one-hot-encodes each record's survival group into
    both encoder and decoder inputs.
    """
    records = zoo_or_records.records if isinstance(zoo_or_records, Zoo) else list(zoo_or_records)
    if not records:
        raise ContractViolation("training needs at least one record")
    if rng is None:
        rng = make_rng(config.seed)

    x_all = np.stack([r.weights for r in records])
    labels_all = np.array([int(r.group) - 1 for r in records])
    conditional = config.mode == "conditional"

    model = init_gen_model(rng, conditional=conditional)
    params = model.params_flat()
    adam = adam_init(params.size, lr=config.lr)
    n = len(records)
    curve = []

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        recon_sum = kl_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            x = x_all[idx]
            label = labels_all[idx] if conditional else None
            eps = rng.standard_normal((len(idx), LATENT_DIM))
            model.set_params_flat(params)
            recon, kl, total, grads = batch_loss_grads(model, x, eps, label=label)
            if not np.isfinite(total):
                raise NumericalError(
                    f"non-finite loss in epoch {epoch}, batch starting at {start}"
                )
            params, adam = adam_step(params, grads, adam)
            recon_sum += recon * len(idx)
            kl_sum += kl * len(idx)
        curve.append((epoch, recon_sum / n, kl_sum / n, (recon_sum + kl_sum) / n))

    # Snap to the serialization grid so saved and in-memory models agree.
    model.set_params_flat(params.astype(np.float32).astype(np.float64))
    return model, curve


def sample_networks(model: GenModel, n: int, mode: str = "posterior",
                    source: Zoo | list | None = None,
                    rng: np.random.Generator | None = None, label=None) -> np.ndarray:
    """Draw n fresh weight vectors; returns an (n, 212) array.

    posterior mode encodes randomly chosen source records (with replacement),
    samples their posteriors, and decodes; prior mode decodes z ~ N(0, I).
    A label filters the source records (posterior) or conditions the decoder
    (prior, required for conditional models).
    """
    if mode not in ("posterior", "prior"):
        raise ContractViolation(f"unknown sampling mode {mode!r}")
    if rng is None:
        rng = make_rng(0)
    if n == 0:
        return np.empty((0, INPUT_DIM))

    if mode == "prior":
        z = rng.standard_normal((n, LATENT_DIM))
        return decode(model, z, label=label if model.conditional else None)

    records = source.records if isinstance(source, Zoo) else (list(source) if source else [])
    if label is not None:
        group = label if isinstance(label, Group) else Group(int(label))
        records = [r for r in records if r.group == group]
    if not records:
        raise ContractViolation("posterior sampling needs a non-empty source zoo"
                                + (f" with {group.name} records" if label is not None else ""))
    idx = rng.integers(0, len(records), size=n)
    x = np.stack([records[i].weights for i in idx])
    enc_label = np.array([int(records[i].group) - 1 for i in idx]) if model.conditional else None
    mu, logvar = encode(model, x, label=enc_label)
    z = reparameterize(mu, logvar, rng)
    return decode(model, z, label=enc_label)


def _descriptor(model: GenModel) -> dict:
    return {
        "format": MODEL_VERSION,
        "input_dim": INPUT_DIM,
        "latent_dim": LATENT_DIM,
        "n_conditions": model.n_conditions,
        "layers": {name: [getattr(model, name).n_out, getattr(model, name).n_in]
                   for name in _LAYER_NAMES},
    }


def save_model(model: GenModel, path) -> None:
    desc = json.dumps(_descriptor(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    params = model.params_flat().astype("<f4")
    header = (MODEL_MAGIC
              + np.uint32(MODEL_VERSION).tobytes()
              + np.uint32(len(desc)).tobytes()
              + desc)
    from .zoo import _atomic_write

    _atomic_write(path, header + params.tobytes())


def load_model(path) -> GenModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:8] != MODEL_MAGIC:
        raise FileFormatError(f"bad model magic {data[:8]!r}", offset=0)
    version = int(np.frombuffer(data[8:12], dtype="<u4")[0])
    if version != MODEL_VERSION:
        raise FileFormatError(f"unsupported model version {version}", offset=8)
    desc_len = int(np.frombuffer(data[12:16], dtype="<u4")[0])
    if len(data) < 16 + desc_len:
        raise FileFormatError("truncated model descriptor", offset=len(data))
    try:
        desc = json.loads(data[16 : 16 + desc_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise FileFormatError(f"model descriptor is not valid JSON: {err}", offset=16)

    model = init_gen_model(make_rng(0), conditional=desc["n_conditions"] > 0)
    for name in _LAYER_NAMES:
        want = desc["layers"][name]
        have = [getattr(model, name).n_out, getattr(model, name).n_in]
        if want != have:
            raise FileFormatError(f"layer {name} has shape {want}, expected {have}")
    pos = 16 + desc_len
    expected = model.n_params * 4
    if len(data) - pos != expected:
        raise FileFormatError(
            f"expected {expected} parameter bytes, found {len(data) - pos}", offset=pos
        )
    flat = np.frombuffer(data, dtype="<f4", count=model.n_params, offset=pos).astype(np.float64)
    model.set_params_flat(flat)
    return model
