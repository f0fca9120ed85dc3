"""The three end-to-end pipelines over one-class detectors.

Separate detectors fused by evidence combination, one pooled detector over
all normal categories combined, and the contrastive multi-encoder variant
scored by minimum center distance.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, replace

import numpy as np

from . import detectors as det
from .errors import ConfigurationError, DimensionError, FormatError, InputError
from .fusion import FocalMass, ds_combine, min_distance_score, or_rule_decide

MODE_DS_FUSION = "ds-fusion"
MODE_POOLED = "pooled"
MODE_MIN_DISTANCE = "min-distance"

# Fixed seed offsets keep per-category training independent of scheduling;
# a pool of a single category trains exactly like that category's own
# detector so the three pipelines coincide at m=1.
POOLED_SEED_OFFSET = 1000


@dataclass(frozen=True)
class MultiDetector:
    """A set of trained detectors plus the rule that combines them."""

    detectors: tuple[det.OneClassDetector, ...]
    mode: str
    normal_ids: tuple[int, ...]

    def __post_init__(self):
        ids = tuple(int(i) for i in self.normal_ids)
        if self.mode == MODE_POOLED:
            if len(self.detectors) != 1:
                raise ConfigurationError("pooled mode carries exactly one detector")
        elif self.mode in (MODE_DS_FUSION, MODE_MIN_DISTANCE):
            if len(self.detectors) != len(ids):
                raise ConfigurationError(
                    f"{self.mode} mode needs one detector per normal category"
                )
        else:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "normal_ids", ids)
        object.__setattr__(self, "detectors", tuple(self.detectors))


def _as_category_map(training_sets):
    if isinstance(training_sets, Mapping):
        items = {int(c): np.asarray(x, dtype=np.float64) for c, x in training_sets.items()}
    else:
        items = {i: np.asarray(x, dtype=np.float64) for i, x in enumerate(training_sets)}
    if not items:
        raise ConfigurationError("no training categories supplied")
    for c, x in items.items():
        if x.size == 0:
            raise ConfigurationError(f"category {c}: empty training set")
    return dict(sorted(items.items()))


def _train_single(x, hp, seed, category_id, x_other=None, record=None):
    hp_i = replace(hp, seed=seed)
    encoder, _, _ = det.pretrain_autoencoder(
        x, hp_i, record=record, category_id=category_id
    )
    center = det.compute_center(encoder, x)
    if x_other is None:
        return det.svdd_train(
            encoder, center, x, hp_i, record=record, category_id=category_id
        )
    return det.deepmad_finetune(
        encoder, center, x, x_other, hp_i, record=record, category_id=category_id
    )


def train_algorithm1(training_sets, hp, record=None):
    """One detector per normal category, combined at test time by evidence
    fusion. Detector seeds are fixed by category id, so listing order and
    scheduling cannot change the result."""
    by_cat = _as_category_map(training_sets)
    trained = tuple(
        _train_single(x, hp, hp.seed + c, c, record=record)
        for c, x in by_cat.items()
    )
    return MultiDetector(
        detectors=trained, mode=MODE_DS_FUSION, normal_ids=tuple(by_cat)
    )


def train_algorithm2(training_sets, hp, record=None):
    """A single detector over the union of all normal categories."""
    by_cat = _as_category_map(training_sets)
    pooled = np.vstack(list(by_cat.values()))
    if len(by_cat) == 1:
        seed = hp.seed + next(iter(by_cat))
    else:
        seed = hp.seed + POOLED_SEED_OFFSET
    detector = _train_single(pooled, hp, seed, det.POOLED_ID, record=record)
    return MultiDetector(
        detectors=(detector,), mode=MODE_POOLED, normal_ids=tuple(by_cat)
    )


def train_deepmad(training_sets, hp, record=None):
    """One contrastively fine-tuned encoder per category, the remaining
    categories serving as that encoder's negatives; scored by minimum
    center distance."""
    by_cat = _as_category_map(training_sets)
    cats = list(by_cat)
    trained = []
    for c in cats:
        others = [by_cat[j] for j in cats if j != c]
        x_other = np.vstack(others) if others else None
        trained.append(
            _train_single(by_cat[c], hp, hp.seed + c, c, x_other=x_other, record=record)
        )
    return MultiDetector(
        detectors=tuple(trained), mode=MODE_MIN_DISTANCE, normal_ids=tuple(cats)
    )


def _check_width(md, x):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    width = md.detectors[0].encoder.input_dim
    if arr.shape[1] != width:
        raise DimensionError(
            f"test width {arr.shape[1]} does not match detector input {width}"
        )
    return arr


def predict_scores(md, x_test):
    """Anomaly scores, higher meaning more anomalous.

    ds-fusion: combined anomaly probability from the calibrated per-detector
    masses. pooled: raw center distance. min-distance: smallest per-detector
    center distance.
    """
    x = _check_width(md, x_test)
    if md.mode == MODE_POOLED:
        return det.score(md.detectors[0], x)
    dists = np.stack([det.score(d, x) for d in md.detectors], axis=0)
    if md.mode == MODE_MIN_DISTANCE:
        return dists.min(axis=0)
    probs = np.stack(
        [det.calibrate_probability(d, dists[i]) for i, d in enumerate(md.detectors)],
        axis=0,
    )
    out = np.empty(x.shape[0])
    for j in range(x.shape[0]):
        masses = [
            FocalMass(category_id=d.category_id, p_in=float(probs[i, j]))
            for i, d in enumerate(md.detectors)
        ]
        out[j] = ds_combine(masses).p_anomaly
    return out


def predict_labels(md, x_test, threshold):
    """Boolean anomaly flags: score >= threshold."""
    t = float(threshold)
    if np.isnan(t):
        raise InputError("threshold must not be NaN")
    return predict_scores(md, x_test) >= t


def predict_labels_all_reject(md, x_test):
    """The all-reject rule: anomalous only when every detector's distance
    reaches its own calibrated threshold. ds-fusion mode only."""
    if md.mode != MODE_DS_FUSION:
        raise ConfigurationError("the all-reject rule applies to ds-fusion mode")
    x = _check_width(md, x_test)
    for d in md.detectors:
        if not d.is_calibrated:
            raise ConfigurationError("all detectors must be calibrated")
    dists = np.stack([det.score(d, x) for d in md.detectors], axis=0)
    gammas = np.array([d.calib_gamma for d in md.detectors])
    says_normal = dists < gammas[:, None]
    return np.array(
        [or_rule_decide(says_normal[:, j]) for j in range(x.shape[0])], dtype=bool
    )


def min_distance(md, x_test):
    """Per-sample minimum center distance across detectors."""
    x = _check_width(md, x_test)
    dists = np.stack([det.score(d, x) for d in md.detectors], axis=0)
    return np.array([min_distance_score(dists[:, j]) for j in range(x.shape[0])])


def multi_to_dict(md):
    return {
        "format": "mcad-multi-detector",
        "version": 1,
        "mode": md.mode,
        "normal_ids": list(md.normal_ids),
        "detectors": [det.detector_to_dict(d) for d in md.detectors],
    }


def multi_from_dict(doc):
    if not isinstance(doc, dict) or doc.get("format") != "mcad-multi-detector":
        raise FormatError("not a multi-detector document")
    return MultiDetector(
        detectors=tuple(det.detector_from_dict(d) for d in doc["detectors"]),
        mode=doc["mode"],
        normal_ids=tuple(int(i) for i in doc["normal_ids"]),
    )


def save_multi(md, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(multi_to_dict(md), fh)


def load_multi(path):
    with open(path, "r", encoding="utf-8") as fh:
        return multi_from_dict(json.load(fh))
