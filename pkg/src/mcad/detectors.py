"""One-class detector training.

A detector is an encoder trained to concentrate one normal category around
a fixed latent center: autoencoder pretraining picks the representation,
the center is the clamped mean embedding, and either a plain center loss or
the contrastive center-hinge objective (other categories pushed beyond a
margin) fine-tunes the encoder. Scores are latent distances; a logistic
calibration turns them into acceptance probabilities for fusion.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .backend import kernels as K
from .errors import (
    ConfigurationError,
    DimensionError,
    FormatError,
    StateError,
)
from .fusion import MASS_CEIL, MASS_FLOOR

CENTER_MIN_COORD = 0.01
CENTER_REPLACEMENT = 0.1
TAU_FLOOR = 1e-6

POOLED_ID = "pooled"


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs shared by all detector variants."""

    eta: float = 1.0
    delta: float = 2.0
    lam: float = 1e-4
    lr_pretrain: float = 1e-3
    lr_finetune: float = 1e-4
    epochs_pretrain: int = 30
    epochs_finetune: int = 30
    batch_size: int = 64
    gamma_quantile: float = 0.95
    latent_dim: int = 32
    seed: int = 0
    hidden_dims: tuple[int, ...] = (128, 64)

    def __post_init__(self):
        if not self.eta > 0.0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        if not self.delta > 0.0:
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        if self.lam < 0.0:
            raise ConfigurationError(f"lam must be >= 0, got {self.lam}")
        if not self.lr_pretrain > 0.0 or not self.lr_finetune > 0.0:
            raise ConfigurationError("learning rates must be positive")
        if self.epochs_pretrain < 0 or self.epochs_finetune < 0:
            raise ConfigurationError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 < self.gamma_quantile < 1.0):
            raise ConfigurationError(
                f"gamma_quantile must lie in (0, 1), got {self.gamma_quantile}"
            )
        if self.latent_dim < 1:
            raise ConfigurationError(f"latent_dim must be >= 1, got {self.latent_dim}")
        dims = tuple(int(h) for h in self.hidden_dims)
        if any(h < 1 for h in dims):
            raise ConfigurationError(f"hidden_dims must be positive, got {dims}")
        object.__setattr__(self, "hidden_dims", dims)


@dataclass(frozen=True)
class OneClassDetector:
    """Trained encoder, its latent center, and calibration constants."""

    encoder: nn.MlpParams
    center: np.ndarray
    calib_gamma: float | None
    calib_tau: float | None
    category_id: int | str

    def __post_init__(self):
        center = np.ascontiguousarray(self.center, dtype=np.float64)
        if center.shape != (self.encoder.output_dim,):
            raise DimensionError(
                f"center shape {center.shape} does not match encoder output "
                f"width {self.encoder.output_dim}"
            )
        if not np.all(np.isfinite(center)):
            raise ConfigurationError("non-finite center")
        if (self.calib_gamma is None) != (self.calib_tau is None):
            raise ConfigurationError("gamma and tau must be set together")
        if self.calib_gamma is not None:
            if not (math.isfinite(self.calib_gamma) and self.calib_gamma >= 0.0):
                raise ConfigurationError(f"bad gamma {self.calib_gamma}")
            if not (math.isfinite(self.calib_tau) and self.calib_tau > 0.0):
                raise ConfigurationError(f"bad tau {self.calib_tau}")
        object.__setattr__(self, "center", center)

    @property
    def is_calibrated(self):
        return self.calib_gamma is not None


class TrainingLog:
    """Per-epoch loss collector for the CLI training log."""

    def __init__(self):
        self.rows = []

    def add(self, phase, category, epoch, loss):
        self.rows.append((phase, category, int(epoch), float(loss)))


def _check_training_set(x, what):
    if x is None or np.size(x) == 0:
        raise ConfigurationError(f"{what} training set is empty")
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    return a


def pretrain_autoencoder(x, hp, record=None, category_id=None):
    """Train a bias-free encoder/decoder pair on reconstruction MSE.

    Returns (encoder, decoder, final full-batch MSE). Deterministic for a
    fixed hp.seed; epochs_pretrain=0 returns the initialization untouched.
    """
    x = _check_training_set(x, "autoencoder")
    rng = np.random.default_rng(hp.seed)
    d = x.shape[1]
    enc_dims = (d, *hp.hidden_dims, hp.latent_dim)
    dec_dims = (hp.latent_dim, *reversed(hp.hidden_dims), d)
    encoder = nn.init_mlp(enc_dims, seed=rng, center_loss_mode=True)
    decoder = nn.init_mlp(dec_dims, seed=rng)
    enc_state = nn.init_adam(encoder)
    dec_state = nn.init_adam(decoder)
    n = x.shape[0]
    bs = min(hp.batch_size, n)
    steps = -(-n // bs)
    for epoch in range(hp.epochs_pretrain):
        perm = rng.permutation(n)
        total = 0.0
        for s in range(steps):
            batch = x[perm[s * bs: (s + 1) * bs]]
            loss, enc_grads, dec_grads = nn.reconstruction_loss_and_grads(
                encoder, decoder, batch
            )
            encoder, enc_state = nn.adam_step(encoder, enc_grads, enc_state, hp.lr_pretrain)
            decoder, dec_state = nn.adam_step(decoder, dec_grads, dec_state, hp.lr_pretrain)
            total += loss
        if record is not None:
            record.add("pretrain", category_id, epoch, total / steps)
    reconstructed = nn.mlp_forward(decoder, nn.mlp_forward(encoder, x))
    return encoder, decoder, nn.mse_loss(x, reconstructed)


def compute_center(encoder, x):
    """Mean embedding with small coordinates pushed off zero.

    Coordinates below 0.01 in magnitude become +-0.1 (sign preserved, zero
    counts as positive) so a center loss cannot be satisfied by mapping
    everything to the origin.
    """
    z = nn.mlp_forward(encoder, _check_training_set(x, "center"))
    center = z.mean(axis=0)
    tiny = np.abs(center) < CENTER_MIN_COORD
    center[tiny] = np.where(center[tiny] < 0.0, -CENTER_REPLACEMENT, CENTER_REPLACEMENT)
    return center


def _distances(encoder, center, x):
    z = nn.mlp_forward(encoder, x)
    return np.sqrt(K.sqdist_rows(z, center))


def _calibration(encoder, center, x, hp):
    d = _distances(encoder, center, x)
    gamma = float(np.quantile(d, hp.gamma_quantile))
    tau = max(float(np.median(np.abs(d - np.median(d)))), TAU_FLOOR)
    return gamma, tau


def _train_center_objective(
    encoder, center, x_pos, x_neg, hp, record=None, category_id=None
):
    """Shared fine-tuning loop for the center and center-hinge objectives.

    With an empty negative pool this is exactly the plain center objective:
    the code path, loss values, and RNG consumption are identical, so a
    margin-based run with no negatives reproduces a center-only run bit for
    bit.
    """
    center = np.ascontiguousarray(center, dtype=np.float64)
    n_pos = x_pos.shape[0]
    has_neg = x_neg is not None and x_neg.shape[0] > 0
    n_neg = x_neg.shape[0] if has_neg else 0
    n_total = n_pos + n_neg
    bs = min(hp.batch_size, n_total)
    if has_neg:
        bs_pos = int(round(bs * n_pos / n_total))
        bs_pos = max(1, min(bs_pos, bs - 1, n_pos))
        bs_neg = bs - bs_pos
    else:
        bs_pos = min(bs, n_pos)
        bs_neg = 0
    steps = -(-n_pos // bs_pos)
    rng = np.random.default_rng(hp.seed)
    state = nn.init_adam(encoder)
    aux = {
        "center": center,
        "eta": hp.eta,
        "delta": hp.delta,
        "weight_decay": hp.lam,
        "n_total": n_total,
        "n_pos": n_pos,
        "batch_neg": None,
    }
    for epoch in range(hp.epochs_finetune):
        perm_pos = rng.permutation(n_pos)
        if has_neg:
            perm_neg = rng.permutation(n_neg)
            cursor = 0
        total = 0.0
        for s in range(steps):
            batch_pos = x_pos[perm_pos[s * bs_pos: (s + 1) * bs_pos]]
            if has_neg:
                take = (cursor + np.arange(bs_neg)) % n_neg
                aux["batch_neg"] = x_neg[perm_neg[take]]
                cursor += bs_neg
            loss, grads = nn.loss_and_grads(encoder, nn.LOSS_DEEPMAD, batch_pos, aux)
            encoder, state = nn.adam_step(encoder, grads, state, hp.lr_finetune)
            total += loss
        if record is not None:
            record.add("finetune", category_id, epoch, total / steps)
    return encoder


def svdd_train(encoder, center, x_normal, hp, record=None, category_id=0):
    """Fine-tune an encoder to contract one category around a fixed center,
    then calibrate it. The objective is the mean squared center distance
    plus Frobenius weight decay."""
    x = _check_training_set(x_normal, "center-loss")
    trained = _train_center_objective(
        encoder, center, x, None, hp, record=record, category_id=category_id
    )
    gamma, tau = _calibration(trained, center, x, hp)
    return OneClassDetector(
        encoder=trained,
        center=np.asarray(center, dtype=np.float64),
        calib_gamma=gamma,
        calib_tau=tau,
        category_id=category_id,
    )


def deepmad_loss(encoder, center, batch_pos, batch_neg, eta, delta, lam, n_total, n_pos):
    """Contrastive center-hinge objective value.

    Positive and negative minibatch sums are rescaled by their population
    sizes so the value is an unbiased estimate of the full-dataset loss:
    (1/N) sum_pos ||E(x)-c||^2 + (eta/N) sum_neg max(0, delta-||E(x)-c||)^2
    + (lam/2) sum_l ||W_l||_F^2.
    """
    aux = {
        "center": center,
        "batch_neg": batch_neg,
        "eta": eta,
        "delta": delta,
        "weight_decay": lam,
        "n_total": n_total,
        "n_pos": n_pos,
    }
    loss, _ = nn.loss_and_grads(encoder, nn.LOSS_DEEPMAD, batch_pos, aux)
    return loss


def deepmad_finetune(
    encoder, center, x_own, x_other, hp, record=None, category_id=0
):
    """Fine-tune with the contrastive center-hinge objective.

    Every step draws a positive minibatch from the detector's own category
    and a negative one from the pooled other categories, sized
    proportionally to the population split (at least one each when both
    pools are non-empty)."""
    x_pos = _check_training_set(x_own, "positive")
    x_neg = None
    if x_other is not None and np.size(x_other):
        x_neg = np.ascontiguousarray(x_other, dtype=np.float64)
        if x_neg.ndim == 1:
            x_neg = x_neg.reshape(1, -1)
    trained = _train_center_objective(
        encoder, center, x_pos, x_neg, hp, record=record, category_id=category_id
    )
    gamma, tau = _calibration(trained, center, x_pos, hp)
    return OneClassDetector(
        encoder=trained,
        center=np.asarray(center, dtype=np.float64),
        calib_gamma=gamma,
        calib_tau=tau,
        category_id=category_id,
    )


def score(detector, x):
    """Euclidean latent distance to the detector's center; >= 0."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    d = _distances(detector.encoder, detector.center, arr)
    return float(d[0]) if single else d


def calibrate_probability(detector, distance):
    """Acceptance probability logistic((gamma - distance) / tau), clamped
    into [1e-6, 1 - 1e-6] so downstream fusion can never hit total
    conflict. Strictly decreasing in distance between the clamps."""
    if not detector.is_calibrated:
        raise StateError("detector has no calibration; train it first")
    d = np.asarray(distance, dtype=np.float64)
    p = K.logistic((detector.calib_gamma - np.atleast_1d(d)) / detector.calib_tau)
    p = np.clip(p, MASS_FLOOR, MASS_CEIL)
    return float(p[0]) if d.ndim == 0 else p.reshape(d.shape)


def detector_to_dict(detector):
    """Self-describing plain-data form; floats survive exactly via repr."""
    enc = detector.encoder
    doc = {
        "format": "mcad-detector",
        "version": 1,
        "category_id": detector.category_id,
        "layer_dims": list(enc.layer_dims),
        "activation": enc.activation,
        "use_bias": enc.use_bias,
        "center_loss_mode": enc.center_loss_mode,
        "weights": [w.ravel().tolist() for w in enc.weights],
        "biases": None
        if enc.biases is None
        else [b.tolist() for b in enc.biases],
        "center": detector.center.tolist(),
        "calib_gamma": detector.calib_gamma,
        "calib_tau": detector.calib_tau,
    }
    return doc


def detector_from_dict(doc):
    if not isinstance(doc, dict) or doc.get("format") != "mcad-detector":
        raise FormatError("not a detector document")
    dims = tuple(int(d) for d in doc["layer_dims"])
    weights = tuple(
        np.asarray(flat, dtype=np.float64).reshape(dims[l + 1], dims[l])
        for l, flat in enumerate(doc["weights"])
    )
    biases = None
    if doc.get("biases") is not None:
        biases = tuple(np.asarray(b, dtype=np.float64) for b in doc["biases"])
    encoder = nn.MlpParams(
        layer_dims=dims,
        weights=weights,
        biases=biases,
        activation=doc.get("activation", "leaky_relu"),
        use_bias=doc.get("use_bias", biases is not None),
        center_loss_mode=doc.get("center_loss_mode", False),
    )
    return OneClassDetector(
        encoder=encoder,
        center=np.asarray(doc["center"], dtype=np.float64),
        calib_gamma=doc["calib_gamma"],
        calib_tau=doc["calib_tau"],
        category_id=doc["category_id"],
    )


def save_detector(detector, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(detector_to_dict(detector), fh)


def load_detector(path):
    with open(path, "r", encoding="utf-8") as fh:
        return detector_from_dict(json.load(fh))
