"""Three-flavour vacuum oscillation probabilities.

Times are ``t = L/E`` in km/GeV throughout.  The phase accumulated by mass
state ``i`` relative to state 1 is ``KAPPA * dm2_i1 * t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import DEG, KAPPA
from .errors import DataError, DomainError
from .quadrature import adaptive_simpson

FLAVORS = ("e", "mu", "tau")

PARAM_KEYS = ("theta12_deg", "theta13_deg", "theta23_deg", "delta_cp_deg", "dm2_21_ev2", "dm2_31_ev2")


@dataclass(frozen=True)
class OscillationParams:
    """Mixing angles and CP phase in radians, mass splittings in eV^2."""

    theta12: float
    theta13: float
    theta23: float
    delta_cp: float
    dm2_21: float
    dm2_31: float

    def __post_init__(self):
        for name in ("theta12", "theta13", "theta23"):
            value = getattr(self, name)
            if not (0.0 <= value <= math.pi / 2):
                raise DomainError(f"{name}={value!r} outside [0, pi/2]")
        if not (0.0 <= self.delta_cp < 2 * math.pi):
            raise DomainError(f"delta_cp={self.delta_cp!r} outside [0, 2pi)")
        if not self.dm2_21 >= 0.0:
            raise DomainError(f"dm2_21={self.dm2_21!r} must be non-negative")
        if not math.isfinite(self.dm2_31):
            raise DomainError(f"dm2_31={self.dm2_31!r} must be finite")

    @classmethod
    def from_degrees(cls, theta12_deg, theta13_deg, theta23_deg, delta_cp_deg, dm2_21_ev2, dm2_31_ev2):
        """Build from angles in degrees; ``delta_cp_deg`` is wrapped into [0, 360)."""
        return cls(
            theta12=theta12_deg * DEG,
            theta13=theta13_deg * DEG,
            theta23=theta23_deg * DEG,
            delta_cp=(delta_cp_deg % 360.0) * DEG,
            dm2_21=float(dm2_21_ev2),
            dm2_31=float(dm2_31_ev2),
        )

    def to_degrees(self):
        return {
            "theta12_deg": self.theta12 / DEG,
            "theta13_deg": self.theta13 / DEG,
            "theta23_deg": self.theta23 / DEG,
            "delta_cp_deg": self.delta_cp / DEG,
            "dm2_21_ev2": self.dm2_21,
            "dm2_31_ev2": self.dm2_31,
        }


# NuFIT global fit, normal ordering.
BEST_FIT = OscillationParams.from_degrees(33.44, 8.57, 49.0, 195.0, 7.42e-5, 2.514e-3)

# (low, high) three-sigma ranges in file units; delta_cp range wraps past 360.
THREE_SIGMA_RANGES = {
    "theta12_deg": (31.27, 35.86),
    "theta13_deg": (8.20, 8.97),
    "theta23_deg": (39.6, 51.8),
    "delta_cp_deg": (107.0, 403.0),
    "dm2_21_ev2": (6.82e-5, 8.04e-5),
    "dm2_31_ev2": (2.431e-3, 2.598e-3),
}


def sample_params(rng, ranges=THREE_SIGMA_RANGES):
    """Draw a parameter set uniformly from ``ranges``."""
    values = {key: rng.uniform(*ranges[key]) for key in PARAM_KEYS}
    return OscillationParams.from_degrees(**values)


def load_params(path):
    """Read a ``key = value`` parameter file (angles in degrees).

    Blank lines and ``#`` comments are ignored.  All six keys are required.
    """
    path = Path(path)
    values = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"expected 'key = value' in {path}", line=lineno)
            key, _, value = (part.strip() for part in line.partition("="))
            if key not in PARAM_KEYS:
                raise DataError(f"unknown parameter in {path}", line=lineno, field=key)
            try:
                values[key] = float(value)
            except ValueError:
                raise DataError(f"not a number: {value!r} in {path}", line=lineno, field=key) from None
    missing = [k for k in PARAM_KEYS if k not in values]
    if missing:
        raise DataError(f"{path}: missing keys {', '.join(missing)}")
    return OscillationParams.from_degrees(**values)


def save_params(params, path):
    lines = ["# angles in degrees, mass splittings in eV^2"]
    lines += [f"{key} = {value!r}" for key, value in params.to_degrees().items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class FlavorChannel:
    """Transition ``alpha -> beta``; flavours are indices into ``FLAVORS``."""

    alpha: int
    beta: int
    antineutrino: bool = False

    def __post_init__(self):
        for f in (self.alpha, self.beta):
            if f not in (0, 1, 2):
                raise DomainError(f"flavour index {f!r} not in (0, 1, 2)")

    @property
    def is_survival(self):
        return self.alpha == self.beta

    @property
    def name(self):
        return FLAVORS[self.alpha] + FLAVORS[self.beta]

    @classmethod
    def parse(cls, text, antineutrino=False):
        """Parse ``"ee"``, ``"mumu"``, ``"emu"``, ``"mutau"``...; a leading ``"anti-"`` sets the flag."""
        text = text.strip().lower()
        if text.startswith("anti-"):
            antineutrino = True
            text = text[len("anti-"):]
        for a, fa in enumerate(FLAVORS):
            if text.startswith(fa):
                rest = text[len(fa):]
                if rest in FLAVORS:
                    return cls(a, FLAVORS.index(rest), antineutrino)
        raise DomainError(f"unrecognised channel {text!r}")

    def __str__(self):
        return ("anti-" if self.antineutrino else "") + self.name


def build_pmns(params, antineutrino=False):
    """Standard PMNS parametrisation (no Majorana phases); complex-conjugated for antineutrinos."""
    if not isinstance(params, OscillationParams):
        raise DomainError("params must be an OscillationParams")
    s12, c12 = math.sin(params.theta12), math.cos(params.theta12)
    s13, c13 = math.sin(params.theta13), math.cos(params.theta13)
    s23, c23 = math.sin(params.theta23), math.cos(params.theta23)
    ed = complex(math.cos(params.delta_cp), math.sin(params.delta_cp))
    u = np.array(
        [
            [c12 * c13, s12 * c13, s13 / ed],
            [-s12 * c23 - c12 * s13 * s23 * ed, c12 * c23 - s12 * s13 * s23 * ed, c13 * s23],
            [s12 * s23 - c12 * s13 * c23 * ed, -c12 * s23 - s12 * s13 * c23 * ed, c13 * c23],
        ],
        dtype=complex,
    )
    return u.conj() if antineutrino else u


def mass_splittings(params):
    """``(0, dm2_21, dm2_31)`` in eV^2."""
    return np.array([0.0, params.dm2_21, params.dm2_31])


def flavor_hamiltonian(params, antineutrino=False):
    """Vacuum Hamiltonian in the flavour basis, per unit of t (km/GeV), hbar = 1."""
    u = build_pmns(params, antineutrino)
    return (u * (KAPPA * mass_splittings(params))) @ u.conj().T


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0):
        raise DomainError("t = L/E must be finite and non-negative")
    return t


def amplitude(params, channel, t):
    """Complex amplitude ``sum_i U*_{alpha i} U_{beta i} exp(-i KAPPA dm2_i1 t)``."""
    t = _check_t(t)
    u = build_pmns(params, channel.antineutrino)
    weights = u[channel.alpha].conj() * u[channel.beta]
    phases = np.exp(-1j * KAPPA * np.multiply.outer(t, mass_splittings(params)))
    return phases @ weights


def oscillation_probability(params, channel, t):
    """Vacuum transition probability for ``channel`` at ``t`` (scalar or array, km/GeV)."""
    amp = amplitude(params, channel, t)
    p = amp.real**2 + amp.imag**2
    if np.ndim(p) == 0:
        return float(p)
    return p


def oscillation_period(params, which="31"):
    """Period in t (km/GeV) of the ``sin^2(KAPPA dm2 t / 2)`` term for dm2_21 or dm2_31."""
    dm2 = params.dm2_21 if which == "21" else params.dm2_31
    if dm2 == 0:
        return math.inf
    return 2 * math.pi / (KAPPA * abs(dm2))


def bin_averaged_probability(params, channel, t_center, t_halfwidth, *, rtol=1e-6):
    """Mean probability over ``[t_center - t_halfwidth, t_center + t_halfwidth]``.

    The interval is truncated at t = 0.  A zero halfwidth returns the point value.
    """
    if t_halfwidth < 0:
        raise DomainError("t_halfwidth must be non-negative")
    _check_t(t_center)
    lo = max(0.0, t_center - t_halfwidth)
    hi = t_center + t_halfwidth
    if hi <= lo:
        return oscillation_probability(params, channel, t_center)
    fastest = max(abs(params.dm2_21), abs(params.dm2_31), abs(params.dm2_31 - params.dm2_21))
    cycles = KAPPA * fastest * (hi - lo) / (2 * math.pi)
    panels = max(8, int(math.ceil(4 * cycles)))
    integral = adaptive_simpson(
        lambda x: oscillation_probability(params, channel, x), lo, hi, rtol=rtol * 0.1, min_panels=panels
    )
    return integral / (hi - lo)


def incoherent_limit(params, channel):
    """Oscillation-averaged probability ``sum_i |U_{alpha i}|^2 |U_{beta i}|^2``."""
    u = build_pmns(params, channel.antineutrino)
    return float(np.sum(np.abs(u[channel.alpha]) ** 2 * np.abs(u[channel.beta]) ** 2))
