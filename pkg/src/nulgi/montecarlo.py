"""Gaussian pseudodata resampling and violation-count distributions.

Each replication draws a pseudo-dataset, re-identifies correlated triads
on the resampled times, and counts triads with K3 > 0.  Replication ``r``
of stream ``s`` always uses the Philox stream keyed by
``(seed, s, r)``, so results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ComparisonError, DataError, DomainError
from .lgi import DataPoint, TriadConfig, PairTable, count_violations
from .oscillation import bin_averaged_probability

DEFAULT_SEED = 20220133
DEFAULT_REPLICATIONS = 10_000
MAX_REJECTIONS = 1000

EXPERIMENTAL_STREAM = 0
THEORETICAL_STREAM = 1


class PseudoPoint(NamedTuple):
    tau: float
    pi: float


@dataclass(frozen=True)
class RunConfig:
    replications: int = DEFAULT_REPLICATIONS
    seed: int = DEFAULT_SEED
    triad: TriadConfig = field(default_factory=TriadConfig)
    clamp: str = "none"
    theoretical: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError("replications must be at least 1")
        if not (0 <= self.seed < 2**64):
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.clamp not in ("none", "clip"):
            raise DomainError(f"unknown clamp policy {self.clamp!r}")


@dataclass(frozen=True)
class TrialDistribution:
    """Histogram ``{violation count: replications}`` with population mean and spread.

    ``confidence`` is ``mu / sigma`` and is ``None`` when ``sigma == 0``.
    """

    histogram: dict
    mu: float
    sigma: float
    confidence: Optional[float]
    replications: int

    @classmethod
    def from_counts(cls, counts):
        return cls.from_histogram(Counter(int(c) for c in counts))

    @classmethod
    def from_histogram(cls, histogram):
        histogram = {int(c): int(f) for c, f in sorted(histogram.items()) if f > 0}
        total = sum(histogram.values())
        if total == 0:
            raise DomainError("empty histogram")
        mu = sum(c * f for c, f in histogram.items()) / total
        var = sum((c - mu) ** 2 * f for c, f in histogram.items()) / total
        sigma = math.sqrt(var)
        confidence = mu / sigma if sigma > 0 else None
        return cls(histogram, mu, sigma, confidence, total)


def replication_rng(seed, replication, stream=EXPERIMENTAL_STREAM):
    """Counter-based generator for one replication."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream, replication))))


def _resample_arrays(t, p, dt, dp, rng, clamp="none"):
    tau = t + dt * rng.standard_normal(t.size)
    bad = tau <= 0
    tries = 0
    while bad.any():
        tries += 1
        if tries > MAX_REJECTIONS:
            idx = int(np.flatnonzero(bad)[0])
            raise DataError(
                f"point {idx}: {MAX_REJECTIONS} consecutive non-positive time draws (t={t[idx]!r}, dt={dt[idx]!r})",
                field="dt",
            )
        redraw = t[bad] + dt[bad] * rng.standard_normal(int(bad.sum()))
        tau[bad] = redraw
        bad = tau <= 0
    pi = p + dp * rng.standard_normal(p.size)
    if clamp == "clip":
        pi = np.clip(pi, 0.0, 1.0)
    return tau, pi


def resample(dataset, rng, clamp="none"):
    """One Gaussian pseudo-dataset; times are redrawn until positive, survivals are left unclamped by default."""
    tau, pi = _resample_arrays(dataset.t, dataset.p, dataset.dt, dataset.dp, rng, clamp)
    return [PseudoPoint(float(a), float(b)) for a, b in zip(tau, pi)]


def violation_count(pseudodata, triad_config=TriadConfig(), groups=None):
    """Correlated triads (on the resampled times) with K3 > 0."""
    if len(pseudodata) == 0:
        return 0
    tau = np.array([pt[0] for pt in pseudodata], dtype=float)
    pi = np.array([pt[1] for pt in pseudodata], dtype=float)
    return count_violations(tau, pi, triad_config, groups)


def _replication_counts(arrays, config, table, stream, replications):
    t, p, dt, dp = arrays
    out = []
    for r in replications:
        rng = replication_rng(config.seed, r, stream)
        tau, pi = _resample_arrays(t, p, dt, dp, rng, config.clamp)
        out.append(count_violations(tau, pi, table=table))
    return out


def run_trials(dataset, config=RunConfig(), params=None, *, stream=EXPERIMENTAL_STREAM, workers=1):
    """Violation-count distribution over ``config.replications`` pseudo-datasets.

    With ``config.theoretical`` the survival values are first replaced by
    bin-averaged predictions from ``params``.
    """
    if config.theoretical:
        if params is None:
            raise DomainError("theoretical substitution needs oscillation parameters")
        dataset = theoretical_substitute(dataset, params)
    arrays = (dataset.t, dataset.p, dataset.dt, dataset.dp)
    table = PairTable(len(dataset), config.triad, dataset.groups) if len(dataset) >= 3 else None
    reps = range(config.replications)
    if len(dataset) < 3:
        counts = [0] * config.replications
    elif workers <= 1:
        counts = _replication_counts(arrays, config, table, stream, reps)
    else:
        chunk = max(1, math.ceil(config.replications / (4 * workers)))
        chunks = [reps[i : i + chunk] for i in range(0, config.replications, chunk)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(lambda rs: _replication_counts(arrays, config, table, stream, rs), chunks)
            counts = [c for part in parts for c in part]
    return TrialDistribution.from_counts(counts)


def theoretical_substitute(dataset, params, channel=None):
    """Copy of ``dataset`` with each ``p`` replaced by the prediction averaged over ``[t - dt, t + dt]``."""
    channel = dataset.channel if channel is None else channel
    points = [
        DataPoint(pt.t, bin_averaged_probability(params, channel, pt.t, pt.dt), pt.dt, pt.dp)
        for pt in dataset.points
    ]
    return dataset.with_points(points)


def compare(dist_experimental, dist_theoretical):
    """Ratio of experimental to theoretical confidence."""
    ce = dist_experimental.confidence
    ct = dist_theoretical.confidence
    if ce is None or ct is None:
        raise ComparisonError("confidence is undefined (zero spread in violation counts)")
    if ct == 0:
        raise ComparisonError("theoretical confidence is zero")
    return ce / ct


def correlated_triad_counts(dataset, config=RunConfig()):
    """Number of correlated triads on the unperturbed times (for notices and diagnostics)."""
    if len(dataset) < 3:
        return 0
    table = PairTable(len(dataset), config.triad, dataset.groups)
    return int(np.count_nonzero(table.correlated(dataset.t)))

