"""Coupling of a point emitter to whispering-gallery modes.

Single-mode emission fraction versus gap (Purcell ratio with an evanescent
positional factor), the broadband reduction, the collected-signal distance
dependence and the NNLS decomposition of an angular scan into polar mode
profiles. Angles at this interface are radians measured from the equator.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .numerics import nnls, normalized_assoc_legendre_sq, polar_maximum

# orientation average of |d . E|^2 for a randomly oriented dipole
ORIENTATION_FACTOR = 1.0 / 3.0
ANGULAR_MODEL_LIMIT = math.radians(20.0)


@dataclass(frozen=True)
class Emitter:
    """Donor or acceptor. Lengths in meters, cross sections in square meters."""

    role: str
    lambda_center: float
    linewidth: float
    sigma_abs_molecule: float
    molecule_count: int = 1
    gap: float = 0.0
    polar_angle: float = 0.0

    def __post_init__(self):
        if self.role not in ("donor", "acceptor"):
            raise ValueError(f"role must be 'donor' or 'acceptor', got {self.role!r}")
        if not self.lambda_center > 0:
            raise ValueError("lambda_center must be positive")
        if not self.linewidth > 0:
            raise ValueError("linewidth must be positive")
        if not self.sigma_abs_molecule > 0:
            raise ValueError("sigma_abs_molecule must be positive")
        if int(self.molecule_count) != self.molecule_count or self.molecule_count < 1:
            raise ValueError("molecule_count must be an integer >= 1")
        if not self.gap >= 0:
            raise ValueError("gap must be non-negative")

    @property
    def sigma_abs_total(self):
        return self.sigma_abs_molecule * self.molecule_count


@dataclass(frozen=True)
class AngularScan:
    thetas: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=float)
        iv = np.asarray(self.intensities, dtype=float)
        if th.ndim != 1 or th.shape != iv.shape:
            raise ValueError("thetas and intensities must be 1-D and equally long")
        if th.size < 10:
            raise ValueError("an angular scan needs at least 10 samples")
        if np.any(np.diff(th) <= 0):
            raise ValueError("scan angles must be strictly increasing")
        if np.any(iv < 0) or not np.all(np.isfinite(iv)):
            raise ValueError("intensities must be finite and non-negative")
        object.__setattr__(self, "thetas", th)
        object.__setattr__(self, "intensities", iv)


@dataclass(frozen=True)
class AngularFit:
    weights: np.ndarray
    residual_rms: float
    fitted_thetas: np.ndarray
    fitted_curve: np.ndarray
    l: int


def _check_mode(mode):
    for name in ("lambda_res", "mode_volume", "decay_length", "surface_intensity_rel"):
        v = getattr(mode, name, None)
        if v is None or not v > 0:
            raise ValueError(f"mode is missing a positive {name}")
    if not mode.q_total > 0:
        raise ValueError("mode is missing a positive total Q")


def positional_factor(mode, gap):
    """Relative intensity at the emitter, ``u(d) = surface_rel * exp(-2 d / L)``."""
    gap = np.asarray(gap, dtype=float)
    if np.any(gap < 0):
        raise ValueError("gap must be non-negative")
    return mode.surface_intensity_rel * np.exp(-2.0 * gap / mode.decay_length)


def purcell_factor(mode, gap, host_index=1.0):
    """Orientation-averaged single-mode enhancement at distance ``gap`` outside the surface."""
    _check_mode(mode)
    lam = mode.lambda_res / host_index
    f0 = 3.0 / (4 * math.pi ** 2) * lam ** 3 * mode.q_total / mode.mode_volume
    return ORIENTATION_FACTOR * f0 * positional_factor(mode, gap)


def beta0(sphere, mode, gap):
    """Fraction of a narrow-band emitter's photons entering ``mode``: F / (1 + F).

    ``sphere`` is accepted for interface symmetry; all geometry enters via
    the mode descriptors.
    """
    f = purcell_factor(mode, gap)
    out = f / (1.0 + f)
    return float(out) if np.ndim(out) == 0 else out


def beta_broadband(beta0_value, gamma_cav, gamma_b):
    """Broadband emission fraction ``beta0 * min(1, gamma_cav / gamma_b)``."""
    if not gamma_cav > 0 or not gamma_b > 0:
        raise ValueError("linewidths must be positive")
    return beta0_value * min(1.0, gamma_cav / gamma_b)


def cavity_linewidth(wavelength, q_total):
    """Resonance FWHM in wavelength, lambda / Q."""
    if not q_total > 0:
        raise ValueError("q_total must be positive")
    return wavelength / q_total


def distance_scan(sphere, mode, gaps):
    """Collected signal versus gap, normalized to 1 at the smallest gap.

    Returns an array of shape (len(gaps), 2) with columns (gap, signal).
    """
    gaps = np.asarray(gaps, dtype=float)
    if gaps.ndim != 1 or gaps.size == 0:
        raise ValueError("gaps must be a non-empty 1-D sequence")
    if np.any(gaps < 0) or np.any(np.diff(gaps) <= 0):
        raise ValueError("gaps must be non-negative and strictly increasing")
    _check_mode(mode)
    signal = np.exp(-2.0 * (gaps - gaps[0]) / mode.decay_length)
    return np.column_stack([gaps, signal])


def angular_model(sphere, l, K, thetas):
    """Design matrix of polar intensity profiles.

    Column p is |Y_l^{l-p}|^2 at polar angle pi/2 - theta, scaled so its
    maximum over the sphere is 1. ``thetas`` are measured from the equator.
    """
    thetas = np.asarray(thetas, dtype=float)
    if int(l) != l or l < 1:
        raise ValueError("l must be a positive integer")
    if int(K) != K or not 1 <= K <= l:
        raise ValueError(f"need 1 <= K <= l, got K={K}")
    if np.any(np.abs(thetas) > ANGULAR_MODEL_LIMIT + 1e-12):
        raise ValueError("angular model is limited to within 20 degrees of the equator")
    cols = []
    for p in range(int(K)):
        peak, _ = polar_maximum(int(l), int(l) - p)
        cols.append(normalized_assoc_legendre_sq(int(l), int(l) - p, np.pi / 2 - thetas) / peak)
    return np.column_stack(cols)


def fit_angular_scan(scan, sphere, l, K=10, dense_points=2001):
    """Non-negative decomposition of an angular scan into the first K polar profiles."""
    design = angular_model(sphere, l, K, scan.thetas)
    if not np.any(scan.intensities):
        weights = np.zeros(int(K))
    else:
        weights = nnls(design, scan.intensities)
    resid = design @ weights - scan.intensities
    dense = np.linspace(scan.thetas[0], scan.thetas[-1], dense_points)
    curve = angular_model(sphere, l, K, dense) @ weights
    return AngularFit(weights, float(np.sqrt(np.mean(resid ** 2))), dense, curve, int(l))


def angular_curve(l, weights, thetas):
    """Weighted sum of unit-peak polar profiles at angles from the equator."""
    weights = np.asarray(weights, dtype=float)
    return angular_model(None, l, weights.size, thetas) @ weights


def half_width(l, weights, limit=ANGULAR_MODEL_LIMIT, points=20001):
    """Smallest angle from the equator at which the weighted profile falls
    to half its maximum over [0, limit]. Radians."""
    th = np.linspace(0.0, limit, points)
    curve = angular_curve(l, weights, th)
    i_max = int(np.argmax(curve))
    below = np.flatnonzero(curve[i_max:] <= 0.5 * curve[i_max])
    if below.size == 0:
        raise ValueError("profile does not fall to half maximum within the model range")
    j = i_max + int(below[0])
    # linear interpolation between the bracketing samples
    c0, c1 = curve[j - 1], curve[j]
    half = 0.5 * curve[i_max]
    return float(th[j - 1] + (th[j] - th[j - 1]) * (c0 - half) / (c0 - c1))


def read_angular_scan(path):
    """Read a ``theta_deg,intensity`` CSV file."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"theta_deg", "intensity"}:
        raise ValueError(f"{path}: expected header 'theta_deg,intensity'")
    th = np.radians([float(r["theta_deg"]) for r in rows])
    return AngularScan(th, [float(r["intensity"]) for r in rows])


def write_angular_scan(path, scan):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_deg", "intensity"])
        for t, v in zip(np.degrees(scan.thetas), scan.intensities):
            w.writerow([repr(float(t)), repr(float(v))])
