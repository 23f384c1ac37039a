"""Synthetic data shared by the fitting and acceptance suites."""

import math

import numpy as np
from scipy.optimize import brentq

from fpjpa.circuit_model import JpaParams
from fpjpa.fitting import Dataset
from fpjpa.interference import (
    DriveParams,
    FabryPerotParams,
    Spectrum,
    normalized_spectrum,
    parametric_threshold,
    to_db,
)

MHZ = 2 * math.pi * 1e6

# parameter set reported for the measured device
FITTED_TRUTH = dict(
    omega_a=3 * MHZ,
    kappa=280 * MHZ,
    kappa0=22 * MHZ,
    eta=0.996,
    eta0=0.803,
    fsr=140 * MHZ,
    phi0=-1.05,
    phi_ref=-0.048,
)

GAIN_TRUTH = dict(
    eta=0.996,
    eta0=0.803,
    fsr=140 * MHZ,
    phi0=-1.05,
    phi_ref=-0.048,
    c_p=2 * math.pi * 50e6 / 1e-6,
)
GAIN_TARGETS_DB = (6, 10, 14, 18, 22)
GAIN_KAPPAS = tuple(k * MHZ for k in (280, 276, 272, 268, 264))
GAIN_KAPPA0S = tuple(k * MHZ for k in (22, 23, 24, 25, 26))
GAIN_INITIAL = dict(eta=0.99, eta0=0.85, fsr=130 * MHZ, phi_ref=0.0, kappa=250 * MHZ, kappa0=30 * MHZ)


def fp_from(values):
    return FabryPerotParams(values["eta"], values["eta0"], values["fsr"], values["phi0"], values["phi_ref"])


def reflection_dataset(noise=0.0, seed=1, n=2001, scale=1.0):
    """Normalized complex reflection of the reference device, optional complex noise.

    ``scale`` multiplies the frequency axis (use ``1/(2 pi)`` for Hz).
    """
    t = FITTED_TRUTH
    d = np.linspace(-600 * MHZ, 600 * MHZ, n)
    jpa = JpaParams(0.0, t["kappa"], t["kappa0"])
    s = normalized_spectrum(d - t["omega_a"], jpa, fp_from(t))[0]
    if noise:
        rng = np.random.default_rng(seed)
        s = s + noise * (rng.normal(size=n) + 1j * rng.normal(size=n)) / math.sqrt(2)
    return Dataset(Spectrum(d * scale, s, "normalized_s11"))


def gain_datasets(noise_db=0.2, seed=0, n=2001, targets=GAIN_TARGETS_DB):
    """Net-gain traces at several pump powers sharing the environment."""
    fp = fp_from(GAIN_TRUTH)
    c_p = GAIN_TRUTH["c_p"]
    d = np.linspace(-400 * MHZ, 400 * MHZ, n)
    rng = np.random.default_rng(seed)
    out = []
    for gt, k, k0 in zip(targets, GAIN_KAPPAS, GAIN_KAPPA0S):
        jpa = JpaParams(0.0, k, k0)
        th = float(np.min(parametric_threshold(d, jpa, fp)))

        def excess(om):
            return float(np.max(to_db(normalized_spectrum(d, jpa, fp, DriveParams(om))[1]))) - gt

        om = brentq(excess, 0.0, th * 0.999999)
        g = to_db(normalized_spectrum(d, jpa, fp, DriveParams(om))[1])
        if noise_db:
            g = g + noise_db * rng.normal(size=n)
        out.append(Dataset(Spectrum(d, g, "net_gain_dB"), (om / c_p) ** 2))
    return out
