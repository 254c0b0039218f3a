"""Physical constants and unit conversions.

All oscillation phases are written as ``KAPPA * dm2 * t`` with ``dm2`` in
eV^2 and ``t = L/E`` in km/GeV.  ``KAPPA`` is 1/(2 hbar c) in those units.
"""

import math

HBARC_MEV_FM = 197.3269804
HBARC_EV_KM = HBARC_MEV_FM * 1e6 * 1e-18

# km/GeV -> km/eV
KM_PER_GEV_TO_KM_PER_EV = 1e-9

KAPPA = KM_PER_GEV_TO_KM_PER_EV / (2.0 * HBARC_EV_KM)

# Frozen to 10 significant digits; tests check KAPPA against it.
CONSTANTS_TABLE = {
    "hbarc_MeV_fm": 197.3269804,
    "kappa_per_eV2_per_km_per_GeV": 2.533865359,
    "kappa_over_2": 1.266932679,
}

DEG = math.pi / 180.0
