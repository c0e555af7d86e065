"""Cavity-mediated donor-to-acceptor photon transfer budget.

Per-mode efficiency is ``eta_i = beta_i * q_i`` where the quotient
``q_i = sigma_A / (sigma_A + sigma_Dsca + sigma_Dabs + sigma_Q)`` is the
probability that a cavity photon is absorbed by the acceptor before any
loss channel claims it. Cross sections are square meters throughout.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import emitter_coupling as ec
from .numerics import polar_maximum
from .wgm_modes import (POLARIZATIONS, Mode, ModeId, cached_radial_field, scan_roots,
                        asymptotic_size_parameter, complex_root, fsr_analytic,
                        fundamental_l, fundamental_mode, q_from_root,
                        volume_from_field)

CM2 = 1e-4  # square meters per cm^2
DEFAULT_FRET_R0 = 10e-9


@dataclass(frozen=True)
class LossBudget:
    sigma_a_abs: float
    sigma_q: float
    sigma_d_sca: float = 0.0
    sigma_d_abs: float = 0.0

    def __post_init__(self):
        for name in ("sigma_a_abs", "sigma_d_sca", "sigma_d_abs", "sigma_q"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if not self.sigma_q > 0:
            raise ValueError("sigma_q must be positive")

    @property
    def sigma_loss(self):
        return self.sigma_d_sca + self.sigma_d_abs + self.sigma_q

    def scaled(self, factor):
        return LossBudget(self.sigma_a_abs * factor, self.sigma_q * factor,
                          self.sigma_d_sca * factor, self.sigma_d_abs * factor)


@dataclass(frozen=True)
class ModeRow:
    mode_id: ModeId
    beta_i: float
    quotient: float
    eta_i: float


@dataclass(frozen=True)
class TransferBudget:
    per_mode: tuple
    eta_total: float
    multimode_factor: float
    baseline_free_space: float
    baseline_fret_r0_ratio: float
    baseline_fret: float
    enhancement: float
    eta_fundamental: float
    sigma_q_fundamental: float
    quotient_fundamental: float
    beta0_fundamental: float
    beta_i_fundamental: float
    baseline_distance: float
    explicit_factor: float | None = None
    explicit_rows: tuple = field(default=())

    @property
    def eta_total_explicit(self):
        if self.explicit_factor is None:
            return None
        return self.eta_fundamental * self.explicit_factor


def sigma_q(sphere, mode):
    """Equivalent cavity-loss cross section ``2 pi N V / (Q lambda)``."""
    q = mode.q_total
    if q is None or not q > 0:
        raise ValueError("mode has no positive total Q")
    if not mode.mode_volume > 0:
        raise ValueError("mode has no positive mode volume")
    return 2 * math.pi * sphere.index_real * mode.mode_volume / (q * mode.lambda_res)


def quotient(budget):
    """Probability the acceptor absorbs the photon before any loss channel."""
    total = budget.sigma_a_abs + budget.sigma_loss
    if not total > 0:
        raise ValueError("all cross sections are zero")
    return budget.sigma_a_abs / total


def eta_single_mode(beta_i, quotient_value):
    for name, v in (("beta_i", beta_i), ("quotient", quotient_value)):
        if not 0 <= v <= 1:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    return beta_i * quotient_value


def fsr_count_from_span(span, fsr):
    """Number of free spectral ranges covered by an emission span (rounded)."""
    if not span > 0 or not fsr > 0:
        raise ValueError("span and fsr must be positive")
    return max(int(round(span / fsr)), 1)


def multimode_factor(fsr_count, n_gain=10.0, lm_gain=40.0, polarizations=2):
    """Counting estimate of the all-mode gain over one fundamental mode.

    ``lm_gain`` already carries the correction for the modes beyond the first
    40 polar orders, so the product is ``n_gain * lm_gain * fsr_count * polarizations``.
    """
    if polarizations not in (1, 2):
        raise ValueError("polarizations must be 1 or 2")
    if fsr_count < 1 or n_gain < 1 or lm_gain < 1:
        raise ValueError("gains and fsr_count must be >= 1")
    return float(n_gain) * float(lm_gain) * int(fsr_count) * polarizations


def free_space_absorption(sigma_a, r):
    """Capture probability of an isotropic emission by a cross section at distance r."""
    if not r > 0:
        raise ValueError("distance must be positive")
    return sigma_a / (4 * math.pi * r * r)


def fret_efficiency(r, r0):
    if not r >= 0 or not r0 > 0:
        raise ValueError("need r >= 0 and r0 > 0")
    return 1.0 / (1.0 + (r / r0) ** 6)


# ---------------------------------------------------------------------------
# Explicit mode enumeration
# ---------------------------------------------------------------------------

def enumerate_mode_family(sphere, wavelength, n_max=10, lm_count=40, q_loaded=None):
    """Modes (pol, n <= n_max, l - |m| < lm_count) at the fundamental order l
    nearest ``wavelength``.

    The polar order only rescales the mode volume by the ratio of polar
    maxima; the radial part is shared across a (pol, n) family.
    """
    l = fundamental_l(sphere, wavelength, "TE")
    N = sphere.index_real
    ymax = np.array([polar_maximum(l, l - p)[0] for p in range(lm_count)])
    modes = []
    for pol in POLARIZATIONS:
        for n in range(1, n_max + 1):
            seed = float(asymptotic_size_parameter(N, pol, l, n))
            roots = scan_roots(sphere, pol, l, seed - 0.3, seed + 0.3)
            if len(roots) != 1:
                continue
            x = roots[0]
            fld = cached_radial_field(sphere.radius, N, pol, l, x)
            v0 = volume_from_field(fld, ymax[0])
            q_rad = q_from_root(complex_root(sphere, pol, l, x))
            for p in range(lm_count):
                modes.append(Mode(
                    id=ModeId(pol, n, l, l - p),
                    lambda_res=sphere.wavelength(x),
                    size_parameter=x,
                    q_radiative=q_rad,
                    mode_volume=v0 * ymax[0] / ymax[p],
                    surface_intensity_rel=fld.surface_rel,
                    decay_length=fld.decay_length(),
                    q_loaded=q_loaded,
                ))
    return modes


def explicit_rows(sphere, modes, fundamental, beta_i_fund, sigma_a, gap,
                  sigma_d_sca=0.0, sigma_d_abs=0.0):
    """Per-mode rows with beta scaled by the relative field intensity at the emitter."""
    u_f = float(ec.positional_factor(fundamental, gap))
    rows = []
    for md in modes:
        u = float(ec.positional_factor(md, gap))
        beta = beta_i_fund * (u / u_f) * (fundamental.mode_volume / md.mode_volume)
        q = quotient(LossBudget(sigma_a, sigma_q(sphere, md), sigma_d_sca, sigma_d_abs))
        rows.append(ModeRow(md.id, beta, q, beta * q))
    return rows


# ---------------------------------------------------------------------------
# Aggregate
# ---------------------------------------------------------------------------

def aggregate_eta(sphere, donor, acceptor, q_loaded, gamma_cav=None, span=None,
                  fsr_count=None, n_gain=10.0, lm_gain=40.0, polarizations=2,
                  baseline_distance=35e-6, fret_r0=DEFAULT_FRET_R0, explicit=False,
                  n_max=10, lm_count=40, sigma_d_sca=0.0, sigma_d_abs=0.0):
    """Transfer efficiency for a donor near the sphere and an acceptor on its surface.

    Parameters
    ----------
    gamma_cav : float, optional
        Cavity linewidth in meters. Defaults to lambda / Q_total.
    span, fsr_count :
        Donor emission span (meters) used to count free spectral ranges, or
        the count itself. With neither, the count is 1.
    explicit : bool
        Also evaluate the enumerated-mode cross-check.
    """
    if acceptor.gap != 0:
        raise ValueError("the acceptor must sit on the sphere surface (gap = 0)")
    fund = fundamental_mode(sphere, donor.lambda_center, "TE", q_loaded=q_loaded)
    b0 = ec.beta0(sphere, fund, donor.gap)
    if gamma_cav is None:
        gamma_cav = ec.cavity_linewidth(fund.lambda_res, fund.q_total)
    beta_i = ec.beta_broadband(b0, gamma_cav, donor.linewidth)
    sig_q = sigma_q(sphere, fund)
    sigma_a = acceptor.sigma_abs_total
    q = quotient(LossBudget(sigma_a, sig_q, sigma_d_sca, sigma_d_abs))
    eta_f = eta_single_mode(beta_i, q)

    if fsr_count is None:
        fsr_count = 1 if span is None else fsr_count_from_span(
            span, fsr_analytic(sphere, donor.lambda_center))
    factor = multimode_factor(fsr_count, n_gain, lm_gain, polarizations)
    eta_total = eta_f * factor

    explicit_factor, rows_x = None, ()
    if explicit:
        modes = enumerate_mode_family(sphere, donor.lambda_center, n_max, lm_count, q_loaded)
        rows_x = tuple(explicit_rows(sphere, modes, fund, beta_i, sigma_a, donor.gap,
                                     sigma_d_sca, sigma_d_abs))
        per_l = sum(r.eta_i for r in rows_x) / eta_f
        if polarizations == 1:
            per_l = sum(r.eta_i for r in rows_x if r.mode_id.polarization == "TE") / eta_f
        explicit_factor = per_l * fsr_count

    base = free_space_absorption(sigma_a, baseline_distance)
    return TransferBudget(
        per_mode=(ModeRow(fund.id, beta_i, q, eta_f),),
        eta_total=eta_total,
        multimode_factor=factor,
        baseline_free_space=base,
        baseline_fret_r0_ratio=baseline_distance / fret_r0,
        baseline_fret=fret_efficiency(baseline_distance, fret_r0),
        enhancement=eta_total / base,
        eta_fundamental=eta_f,
        sigma_q_fundamental=sig_q,
        quotient_fundamental=q,
        beta0_fundamental=b0,
        beta_i_fundamental=beta_i,
        baseline_distance=baseline_distance,
        explicit_factor=explicit_factor,
        explicit_rows=rows_x,
    )


# ---------------------------------------------------------------------------
# Monte Carlo oracle
# ---------------------------------------------------------------------------

def _mc_partition(rng, photons, p_a, p_loss):
    probs = [p_a, p_loss, 1.0 - p_a - p_loss]
    absorbed = 0
    active = photons
    while active:
        a, lost, active = rng.multinomial(active, probs)
        absorbed += int(a)
    return absorbed


def monte_carlo_competition(p_a, p_loss, trials, seed, partitions=4):
    """Fraction of photons absorbed when each pass absorbs with probability
    ``p_a``, loses with ``p_loss`` and otherwise keeps the photon.

    Trials are split across ``partitions`` independent streams spawned from
    ``seed``. Returns ``(estimate, standard_error)``.
    """
    if int(trials) != trials or trials < 10_000:
        raise ValueError("trials must be an integer >= 10^4")
    if not (0 <= p_a <= 1 and 0 <= p_loss <= 1 and p_a + p_loss <= 1 and p_a + p_loss > 0):
        raise ValueError(f"invalid per-pass probabilities p_a={p_a}, p_loss={p_loss}")
    trials = int(trials)
    sizes = [trials // partitions + (i < trials % partitions) for i in range(partitions)]
    streams = np.random.SeedSequence(seed).spawn(partitions)
    absorbed = sum(_mc_partition(np.random.default_rng(s), k, p_a, p_loss)
                   for s, k in zip(streams, sizes))
    est = absorbed / trials
    return est, math.sqrt(est * (1 - est) / trials)


def monte_carlo_quotient(budget, trials, seed, partitions=4, per_pass_total=0.1):
    """Round-trip simulation of the absorption-versus-loss competition.

    Per-pass probabilities are ``sigma / sigma_ref`` with ``sigma_ref`` chosen
    so absorption plus loss sum to ``per_pass_total``.
    """
    if not 0 < per_pass_total <= 0.1:
        raise ValueError("per_pass_total must lie in (0, 0.1]")
    sigma_ref = (budget.sigma_a_abs + budget.sigma_loss) / per_pass_total
    return monte_carlo_competition(budget.sigma_a_abs / sigma_ref, budget.sigma_loss / sigma_ref,
                                   trials, seed, partitions)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def report_lines(budget):
    """Key-value report; cross sections in cm^2 and m^2 side by side."""
    rows = [
        ("[transfer]", None),
        ("eta_total", budget.eta_total),
        ("eta_fundamental", budget.eta_fundamental),
        ("multimode_factor", budget.multimode_factor),
        ("enhancement", budget.enhancement),
        ("beta0_fundamental", budget.beta0_fundamental),
        ("beta_i_fundamental", budget.beta_i_fundamental),
        ("quotient_fundamental", budget.quotient_fundamental),
        ("sigma_q_fundamental_cm2", budget.sigma_q_fundamental / CM2),
        ("sigma_q_fundamental_m2", budget.sigma_q_fundamental),
        ("[baseline]", None),
        ("distance_um", budget.baseline_distance * 1e6),
        ("baseline_free_space", budget.baseline_free_space),
        ("baseline_fret_r0_ratio", budget.baseline_fret_r0_ratio),
        ("baseline_fret", budget.baseline_fret),
    ]
    if budget.explicit_factor is not None:
        rows += [("[explicit_sum]", None),
                 ("explicit_factor", budget.explicit_factor),
                 ("eta_total_explicit", budget.eta_total_explicit),
                 ("mode_count", len(budget.explicit_rows))]
    out = []
    for k, v in rows:
        if v is None:
            out.append(k if not out else "\n" + k)
        else:
            out.append(f"{k} = {v:.6g}")
    return "\n".join(out) + "\n"


def write_mode_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pol", "n", "l", "m", "beta_i", "quotient", "eta_i"])
        for r in rows:
            i = r.mode_id
            w.writerow([i.polarization, i.n, i.l, i.m, f"{r.beta_i:.9e}",
                        f"{r.quotient:.9e}", f"{r.eta_i:.9e}"])
