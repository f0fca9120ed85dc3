"""Dense network engine.

Forward/backward passes for small MLPs, the three training objectives
(reconstruction MSE, center distance, contrastive center-hinge), Adam, and
finite-difference gradient checking. Everything is float64 and functional:
parameter and optimizer values are never mutated in place, so returned
objects are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .backend import kernels as K
from .errors import ConfigurationError, DimensionError, InputError, NumericError

LEAKY_SLOPE = 0.01

LOSS_MSE = "mse"
LOSS_CENTER = "center"
LOSS_DEEPMAD = "deepmad"


def _as_matrix(x, name="batch"):
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 1-D or 2-D, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class MlpParams:
    """Weights of a dense network.

    weights[l] has shape (layer_dims[l+1], layer_dims[l]); a forward step is
    a @ W.T (+ bias). Hidden layers apply a leaky rectifier, the final layer
    is linear. center_loss_mode networks carry no biases so that a center
    objective cannot be satisfied by a constant map.
    """

    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...] | None = None
    activation: str = "leaky_relu"
    use_bias: bool = False
    center_loss_mode: bool = False

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ConfigurationError(f"bad layer_dims {dims}")
        ws = tuple(np.ascontiguousarray(w, dtype=np.float64) for w in self.weights)
        if len(ws) != len(dims) - 1:
            raise DimensionError(
                f"expected {len(dims) - 1} weight matrices, got {len(ws)}"
            )
        for l, w in enumerate(ws):
            if w.shape != (dims[l + 1], dims[l]):
                raise DimensionError(
                    f"layer {l}: weight shape {w.shape} does not match "
                    f"dims ({dims[l + 1]}, {dims[l]})"
                )
            if not np.all(np.isfinite(w)):
                raise NumericError(f"layer {l}: non-finite weight entries")
        if self.activation != "leaky_relu":
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.use_bias != (self.biases is not None):
            raise ConfigurationError("use_bias flag inconsistent with biases")
        if self.center_loss_mode and self.use_bias:
            raise ConfigurationError("center_loss_mode networks must be bias-free")
        bs = None
        if self.biases is not None:
            bs = tuple(np.ascontiguousarray(b, dtype=np.float64) for b in self.biases)
            if len(bs) != len(ws):
                raise DimensionError("one bias vector per layer required")
            for l, b in enumerate(bs):
                if b.shape != (dims[l + 1],):
                    raise DimensionError(f"layer {l}: bias shape {b.shape}")
                if not np.all(np.isfinite(b)):
                    raise NumericError(f"layer {l}: non-finite bias entries")
        object.__setattr__(self, "layer_dims", dims)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def output_dim(self):
        return self.layer_dims[-1]


@dataclass(frozen=True)
class MlpGrads:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...] | None = None


def init_mlp(layer_dims, seed=0, use_bias=False, center_loss_mode=False):
    """Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)) per layer."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dims = tuple(int(d) for d in layer_dims)
    weights = []
    for l in range(len(dims) - 1):
        fan_in, fan_out = dims[l], dims[l + 1]
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
    biases = tuple(np.zeros(d) for d in dims[1:]) if use_bias else None
    return MlpParams(
        layer_dims=dims,
        weights=tuple(weights),
        biases=biases,
        use_bias=use_bias,
        center_loss_mode=center_loss_mode,
    )


def _forward_cached(params, x):
    """Forward pass keeping per-layer inputs and pre-activations."""
    inputs = [x]
    preacts = []
    a = x
    last = len(params.weights) - 1
    for l, w in enumerate(params.weights):
        z = a @ w.T
        if params.biases is not None:
            z = z + params.biases[l]
        preacts.append(z)
        a = K.leaky_forward(z, LEAKY_SLOPE) if l < last else z
        if l < last:
            inputs.append(a)
    return a, preacts, inputs


def mlp_forward(params, batch):
    """Network output for a batch; a 1-D input yields a 1-D output."""
    x = _as_matrix(batch)
    single = np.ndim(batch) == 1
    if x.shape[1] != params.input_dim:
        raise DimensionError(
            f"batch width {x.shape[1]} does not match input width {params.input_dim}"
        )
    out, _, _ = _forward_cached(params, x)
    return out[0] if single else out


def _backprop(params, preacts, inputs, dout, want_dx=False):
    """Gradients for all layers given dL/d(output); optionally dL/d(input)."""
    n_layers = len(params.weights)
    d_w = [None] * n_layers
    d_b = [None] * n_layers if params.biases is not None else None
    g = dout
    dx = None
    for l in range(n_layers - 1, -1, -1):
        d_w[l] = g.T @ inputs[l]
        if d_b is not None:
            d_b[l] = g.sum(axis=0)
        if l > 0:
            da = g @ params.weights[l]
            g = K.leaky_backward(preacts[l - 1], da, LEAKY_SLOPE)
        elif want_dx:
            dx = g @ params.weights[0]
    grads = MlpGrads(
        weights=tuple(d_w), biases=tuple(d_b) if d_b is not None else None
    )
    return (grads, dx) if want_dx else (grads, None)


def mse_loss(x, x_hat):
    """Mean over all entries of the squared difference."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(x_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.mean(diff * diff))


def _weight_decay_terms(params, wd, d_w):
    reg = 0.0
    if wd != 0.0:
        for l, w in enumerate(params.weights):
            reg += 0.5 * wd * K.frob_sq(w)
            d_w[l] = d_w[l] + wd * w
    return reg, d_w


def loss_and_grads(params, loss_tag, batch, aux):
    """Loss value and parameter gradients for one of the three objectives.

    aux keys by tag:
      mse:     target
      center:  center, weight_decay
      deepmad: center, batch_neg, eta, delta, weight_decay, n_total, n_pos
    """
    if loss_tag == LOSS_MSE:
        x = _as_matrix(batch)
        target = _as_matrix(aux["target"], "target")
        out, preacts, inputs = _forward_cached(params, x)
        if out.shape != target.shape:
            raise DimensionError(
                f"output shape {out.shape} does not match target {target.shape}"
            )
        diff = out - target
        loss = float(np.mean(diff * diff))
        dout = (2.0 / diff.size) * diff
        grads, _ = _backprop(params, preacts, inputs, dout)
        return loss, grads

    if loss_tag == LOSS_CENTER:
        x = _as_matrix(batch)
        center = np.asarray(aux["center"], dtype=np.float64)
        wd = float(aux.get("weight_decay", 0.0))
        z, preacts, inputs = _forward_cached(params, x)
        n = x.shape[0]
        loss = float(K.sqdist_rows(z, center).sum()) / n
        dz = K.center_grad(z, center, 1.0 / n)
        grads, _ = _backprop(params, preacts, inputs, dz)
        reg, d_w = _weight_decay_terms(params, wd, list(grads.weights))
        return loss + reg, MlpGrads(weights=tuple(d_w), biases=grads.biases)

    if loss_tag == LOSS_DEEPMAD:
        return _deepmad_loss_and_grads(params, batch, aux)

    raise ConfigurationError(f"unknown loss tag {loss_tag!r}")


def _deepmad_loss_and_grads(params, batch_pos, aux):
    center = np.asarray(aux["center"], dtype=np.float64)
    eta = float(aux["eta"])
    delta = float(aux["delta"])
    wd = float(aux.get("weight_decay", 0.0))
    n_total = int(aux["n_total"])
    n_pos = int(aux["n_pos"])
    if delta <= 0.0:
        raise ConfigurationError(f"hinge margin must be positive, got {delta}")
    if n_total < 1 or not (0 <= n_pos <= n_total):
        raise ConfigurationError(f"bad population sizes n_total={n_total} n_pos={n_pos}")

    pos = None
    if batch_pos is not None and np.size(batch_pos):
        pos = _as_matrix(batch_pos)
    neg_raw = aux.get("batch_neg")
    neg = None
    if neg_raw is not None and np.size(neg_raw):
        neg = _as_matrix(neg_raw, "batch_neg")
    if pos is None and neg is None:
        raise InputError("at least one of the batches must be non-empty")

    parts = [p for p in (pos, neg) if p is not None]
    x = parts[0] if len(parts) == 1 else np.vstack(parts)
    z, preacts, inputs = _forward_cached(params, x)
    n_p = pos.shape[0] if pos is not None else 0

    loss = 0.0
    dz = np.zeros_like(z)
    if pos is not None:
        coef = n_pos / (n_total * n_p)
        loss += coef * float(K.sqdist_rows(z[:n_p], center).sum())
        dz[:n_p] = K.center_grad(z[:n_p], center, coef)
    if neg is not None:
        coef = eta * (n_total - n_pos) / (n_total * neg.shape[0])
        _, pen = K.hinge_penalties(z[n_p:], center, delta)
        loss += coef * float(pen.sum())
        dz[n_p:] = K.hinge_grad(z[n_p:], center, delta, coef)

    grads, _ = _backprop(params, preacts, inputs, dz)
    reg, d_w = _weight_decay_terms(params, wd, list(grads.weights))
    return loss + reg, MlpGrads(weights=tuple(d_w), biases=grads.biases)


def backward(params, loss_tag, batch, aux):
    """Gradients of the tagged loss with respect to every parameter entry."""
    return loss_and_grads(params, loss_tag, batch, aux)[1]


def reconstruction_loss_and_grads(encoder, decoder, batch):
    """MSE autoencoder objective through an encoder/decoder pair."""
    x = _as_matrix(batch)
    latent, pre_e, in_e = _forward_cached(encoder, x)
    out, pre_d, in_d = _forward_cached(decoder, latent)
    if out.shape != x.shape:
        raise DimensionError("decoder output width does not match the input width")
    diff = out - x
    loss = float(np.mean(diff * diff))
    dout = (2.0 / diff.size) * diff
    dec_grads, dlatent = _backprop(decoder, pre_d, in_d, dout, want_dx=True)
    enc_grads, _ = _backprop(encoder, pre_e, in_e, dlatent)
    return loss, enc_grads, dec_grads


@dataclass(frozen=True)
class AdamState:
    """Adam moment accumulators, shaped exactly like the parameters."""

    m_weights: tuple[np.ndarray, ...]
    v_weights: tuple[np.ndarray, ...]
    m_biases: tuple[np.ndarray, ...] | None
    v_biases: tuple[np.ndarray, ...] | None
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params, beta1=0.9, beta2=0.999, eps=1e-8):
    zeros_w = tuple(np.zeros_like(w) for w in params.weights)
    zeros_w2 = tuple(np.zeros_like(w) for w in params.weights)
    zeros_b = zeros_b2 = None
    if params.biases is not None:
        zeros_b = tuple(np.zeros_like(b) for b in params.biases)
        zeros_b2 = tuple(np.zeros_like(b) for b in params.biases)
    return AdamState(zeros_w, zeros_w2, zeros_b, zeros_b2, t=0, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update; returns new params and state."""
    if not lr > 0.0:
        raise ConfigurationError(f"learning rate must be positive, got {lr}")
    for g in grads.weights:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite weight gradient")
    if grads.biases is not None:
        for g in grads.biases:
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite bias gradient")
    t = state.t + 1
    new_w, new_mw, new_vw = [], [], []
    for w, g, m, v in zip(params.weights, grads.weights, state.m_weights, state.v_weights):
        if g.shape != w.shape:
            raise DimensionError("gradient shape does not match parameter shape")
        p2, m2, v2 = K.adam_update(w, g, m, v, t, lr, state.beta1, state.beta2, state.eps)
        new_w.append(p2)
        new_mw.append(m2)
        new_vw.append(v2)
    new_b = new_mb = new_vb = None
    if params.biases is not None:
        new_b, new_mb, new_vb = [], [], []
        for b, g, m, v in zip(params.biases, grads.biases, state.m_biases, state.v_biases):
            p2, m2, v2 = K.adam_update(b, g, m, v, t, lr, state.beta1, state.beta2, state.eps)
            new_b.append(p2)
            new_mb.append(m2)
            new_vb.append(v2)
        new_b, new_mb, new_vb = tuple(new_b), tuple(new_mb), tuple(new_vb)
    params2 = replace(params, weights=tuple(new_w), biases=new_b)
    state2 = AdamState(
        tuple(new_mw), tuple(new_vw), new_mb, new_vb,
        t=t, beta1=state.beta1, beta2=state.beta2, eps=state.eps,
    )
    return params2, state2


def _perturbed(params, layer, idx, dv, is_bias):
    if is_bias:
        bs = list(params.biases)
        b = bs[layer].copy()
        b[idx] += dv
        bs[layer] = b
        return replace(params, biases=tuple(bs))
    ws = list(params.weights)
    w = ws[layer].copy()
    w[idx] += dv
    ws[layer] = w
    return replace(params, weights=tuple(ws))


def finite_diff_gradcheck(loss_fn, params, epsilon=1e-5):
    """Max relative gap between analytic and central-difference gradients.

    loss_fn maps MlpParams to (loss, MlpGrads). The per-coordinate metric is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if not (1e-6 <= epsilon <= 1e-3):
        raise ConfigurationError(f"epsilon must lie in [1e-6, 1e-3], got {epsilon}")
    _, analytic = loss_fn(params)

    def probe(layer, idx, is_bias):
        lp, _ = loss_fn(_perturbed(params, layer, idx, epsilon, is_bias))
        lm, _ = loss_fn(_perturbed(params, layer, idx, -epsilon, is_bias))
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise NumericError("non-finite loss at a finite-difference probe point")
        return (lp - lm) / (2.0 * epsilon)

    worst = 0.0
    for l, g in enumerate(analytic.weights):
        for idx in np.ndindex(g.shape):
            num = probe(l, idx, False)
            a = g[idx]
            worst = max(worst, abs(a - num) / max(1e-8, abs(a) + abs(num)))
    if analytic.biases is not None:
        for l, g in enumerate(analytic.biases):
            for idx in np.ndindex(g.shape):
                num = probe(l, idx, True)
                a = g[idx]
                worst = max(worst, abs(a - num) / max(1e-8, abs(a) + abs(num)))
    return worst
