"""Evidence combination for ensembles of one-class detectors.

Each detector contributes a two-focal mass assignment: probability p that
the sample belongs to its own category, and 1-p on the complement. The
closed-form combination, a literal power-set verifier for it, the all-reject
decision rule, and the per-sample aggregation modes live here.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .errors import CapacityError, ConfigurationError, ConflictError, InputError

# Detector masses are clamped to this band so the combination normalizer
# can never vanish (total conflict).
MASS_FLOOR = 1e-6
MASS_CEIL = 1.0 - 1e-6

_BRUTE_FORCE_MAX = 12
_MIN_NORMALIZER = 1e-300


@dataclass(frozen=True)
class FocalMass:
    """One detector's mass p_in on its own category {i}."""

    category_id: int
    p_in: float


@dataclass(frozen=True)
class CombinedVerdict:
    """Combined anomaly probability and the normalizer it was divided by."""

    p_anomaly: float
    normalization: float


def _checked(masses):
    if not masses:
        raise InputError("no masses to combine")
    seen = set()
    for fm in masses:
        if fm.category_id in seen:
            raise InputError(f"duplicate category id {fm.category_id}")
        seen.add(fm.category_id)
        if not (0.0 <= fm.p_in <= 1.0) or not math.isfinite(fm.p_in):
            raise InputError(f"mass {fm.p_in} outside [0, 1]")
    return [fm.p_in for fm in masses]


def ds_combine(masses):
    """Closed-form combination of the two-focal masses.

    normalizer = prod(1 - p_i) + sum_i p_i * prod_{j != i} (1 - p_j);
    the anomaly probability is prod(1 - p_i) divided by it.
    """
    ps = _checked(masses)
    complement_prod = math.prod(1.0 - p for p in ps)
    k = complement_prod
    for i, p in enumerate(ps):
        k += p * math.prod(1.0 - q for j, q in enumerate(ps) if j != i)
    if k <= _MIN_NORMALIZER:
        raise ConflictError(f"total conflict: normalizer {k} is not positive")
    return CombinedVerdict(p_anomaly=complement_prod / k, normalization=k)


def ds_combine_bruteforce(masses):
    """Power-set verifier for ds_combine.

    Enumerates every selection u_i in {{i}, complement of {i}} over the
    hypothesis space {categories} + {anomaly}, intersects the selected sets,
    and accumulates the product masses whose intersection is exactly the
    anomaly singleton (numerator) or empty (conflict, subtracted from 1 to
    form the normalizer).
    """
    ps = _checked(masses)
    m = len(ps)
    if m > _BRUTE_FORCE_MAX:
        raise CapacityError(f"power-set enumeration capped at m={_BRUTE_FORCE_MAX}")
    anomaly = "anomaly"
    ids = [fm.category_id for fm in masses]
    universe = frozenset(ids) | {anomaly}
    anomaly_only = frozenset({anomaly})
    options = [
        ((frozenset({i}), p), (universe - {i}, 1.0 - p)) for i, p in zip(ids, ps)
    ]
    numerator = 0.0
    conflict = 0.0
    for picks in itertools.product(*options):
        inter = universe
        weight = 1.0
        for subset, mass in picks:
            inter = inter & subset
            weight *= mass
        if inter == anomaly_only:
            numerator += weight
        elif not inter:
            conflict += weight
    k = 1.0 - conflict
    if k <= _MIN_NORMALIZER:
        raise ConflictError(f"total conflict: normalizer {k} is not positive")
    return CombinedVerdict(p_anomaly=numerator / k, normalization=k)


def or_rule_decide(normal_flags):
    """Anomalous only when no detector accepts the sample as normal."""
    flags = list(normal_flags)
    if not flags:
        raise InputError("no detector decisions supplied")
    return not any(flags)


def min_distance_score(distances):
    """Minimum of per-detector distances, the multi-encoder test score."""
    ds = [float(d) for d in distances]
    if not ds:
        raise InputError("no distances supplied")
    for d in ds:
        if not math.isfinite(d) or d < 0.0:
            raise InputError(f"distances must be finite and non-negative, got {d}")
    return min(ds)


def aggregate_rates(p_values, mode):
    """Combine per-detector acceptance probabilities into one rejection mass.

    product mode returns prod(1 - p_i); mean mode the arithmetic mean of the
    same complements.
    """
    ps = [float(p) for p in p_values]
    if not ps:
        raise InputError("no probabilities supplied")
    for p in ps:
        if not (0.0 <= p <= 1.0):
            raise InputError(f"probability {p} outside [0, 1]")
    if mode == "product":
        return math.prod(1.0 - p for p in ps)
    if mode == "mean":
        return sum(1.0 - p for p in ps) / len(ps)
    raise ConfigurationError(f"unknown aggregation mode {mode!r}")
