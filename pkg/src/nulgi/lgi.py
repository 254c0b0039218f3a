"""Leggett-Garg statistics on (t, P) sequences: K3 / K_N and correlated triads."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class DataPoint:
    """Measured survival ``p`` at ``t = L/E`` (km/GeV) with 1-sigma errors."""

    t: float
    p: float
    dt: float = 0.0
    dp: float = 0.0

    def __post_init__(self):
        for name in ("t", "p", "dt", "dp"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.t <= 0:
            raise DomainError("t must be positive")
        if self.dt < 0 or self.dp < 0:
            raise DomainError("uncertainties must be non-negative")


class Triad(NamedTuple):
    """Point indices with ``t_i + t_j ~ t_k``; ``i <= j`` and ``k not in (i, j)``."""

    i: int
    j: int
    k: int


@dataclass(frozen=True)
class TriadConfig:
    """Relative tolerance for ``|t_i + t_j - t_k| / t_k``.

    ``allow_self_pair`` lets a point pair with itself (``i == j``).
    ``cross_group`` permits triads mixing points from different groups
    (e.g. detector halls) when group labels are supplied.
    """

    epsilon: float = 0.05
    allow_self_pair: bool = True
    cross_group: bool = True

    def __post_init__(self):
        if not (0.0 < self.epsilon < 1.0):
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")


def k3(p_i, p_j, p_k):
    """``p_i * p_j - p_k``; positive values violate the inequality."""
    return p_i * p_j - p_k


def k_n(survivals, total_survival):
    """``prod(P(t_i)) - P(sum t_i)``, same sign convention as :func:`k3`."""
    survivals = list(survivals)
    if len(survivals) < 2:
        raise DomainError("k_n needs at least two survival values")
    return math.prod(survivals) - total_survival


def _split_points(points):
    t = np.array([float(pt[0]) if not isinstance(pt, DataPoint) else pt.t for pt in points], dtype=float)
    p = np.array([float(pt[1]) if not isinstance(pt, DataPoint) else pt.p for pt in points], dtype=float)
    return t, p


class PairTable:
    """Pair sums and the index mask, cached per sequence length and config."""

    def __init__(self, size, config, groups=None):
        self.size = size
        iu, ju = np.triu_indices(size, k=0 if config.allow_self_pair else 1)
        self.pi = iu
        self.pj = ju
        ks = np.arange(size)
        mask = (ks[:, None] != iu[None, :]) & (ks[:, None] != ju[None, :])
        if groups is not None and not config.cross_group:
            g = np.asarray(groups)
            mask &= (g[:, None] == g[iu][None, :]) & (g[:, None] == g[ju][None, :])
        self.mask = mask
        self.epsilon = config.epsilon

    def correlated(self, t):
        """Boolean ``(k, pair)`` matrix of correlated triads for times ``t``."""
        sums = t[self.pi] + t[self.pj]
        rel = np.abs(sums[None, :] - t[:, None]) / t[:, None]
        return (rel <= self.epsilon) & self.mask


def find_correlated_triads(points, config=TriadConfig(), groups=None):
    """All triads whose times satisfy the relative tolerance, ordered by ``(k, i, j)``.

    ``points`` holds ``(t, p)`` pairs or :class:`DataPoint` objects; all ``t``
    must be positive.
    """
    t, _ = _split_points(points)
    if t.size == 0:
        return []
    if np.any(t <= 0):
        raise DomainError("all times must be positive")
    table = PairTable(t.size, config, groups)
    ks, pairs = np.nonzero(table.correlated(t))
    triads = [Triad(int(table.pi[q]), int(table.pj[q]), int(k)) for k, q in zip(ks, pairs)]
    triads.sort(key=lambda tr: (tr.k, tr.i, tr.j))
    return triads


def relative_error(triad, points):
    t, _ = _split_points(points)
    return abs(t[triad.i] + t[triad.j] - t[triad.k]) / t[triad.k]


def triad_k3(triad, points):
    _, p = _split_points(points)
    n = len(p)
    for idx in triad:
        if not (0 <= idx < n):
            raise DomainError(f"triad index {idx} out of range for {n} points")
    return k3(p[triad.i], p[triad.j], p[triad.k])


def violates(triad, points):
    """True when K3 over the triad's survival values is strictly positive."""
    return bool(triad_k3(triad, points) > 0)


def count_violations(t, p, config=TriadConfig(), groups=None, table: Optional[PairTable] = None):
    """Number of correlated triads with K3 > 0 (vectorised; ``t`` and ``p`` are arrays)."""
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    if t.size < 3:
        return 0
    if table is None or table.size != t.size:
        table = PairTable(t.size, config, groups)
    corr = table.correlated(t)
    kval = (p[table.pi] * p[table.pj])[None, :] - p[:, None]
    return int(np.count_nonzero(corr & (kval > 0)))


def k3_scatter(points, config=TriadConfig(), groups=None):
    """``(triad, rel_err, k3)`` rows for every correlated triad."""
    return [
        (tr, relative_error(tr, points), triad_k3(tr, points))
        for tr in find_correlated_triads(points, config, groups)
    ]

