"""Physical constants and numerical floors shared across the package."""

import math

#: Reduced Planck constant (J s), CODATA exact value.
HBAR = 1.054571817e-34

#: Elementary charge (C), CODATA exact value.
E_CHARGE = 1.602176634e-19

#: Reduced flux quantum hbar/(2e) (Wb).
PHI0 = HBAR / (2.0 * E_CHARGE)

#: Resistance quantum PHI0/(2e) (Ohm), about 1.027 kOhm.
Z_Q = PHI0 / (2.0 * E_CHARGE)

TWO_PI = 2.0 * math.pi

#: Biases with |cos(phi_ex_eff)| below this value are rejected as degenerate.
BIAS_COS_FLOOR = 1e-3

#: Residual tolerance of the circulating-flux fixed-point solver.
FIXED_POINT_TOL = 1e-12

#: Magnitude floor (rad^2/s^2) of the signal-idler determinant before a
#: point is declared to be at the parametric threshold.
THRESHOLD_FLOOR = 1e-18

#: Magnitude floor of the reference reflection used for normalization.
REFERENCE_FLOOR = 1e-12

#: Effective gain below which the high-gain added-noise formula is flagged.
HIGH_GAIN_FLOOR = 100.0

#: Vacuum noise in photons per mode.
VACUUM_NOISE_PHOTONS = 0.5

#: Ripple visibility corresponding to a 1 dB peak-to-center gain ripple.
ONE_DB_VISIBILITY = (10.0**0.1 - 1.0) / (10.0**0.1 + 1.0)
