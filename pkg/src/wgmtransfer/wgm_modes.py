"""Whispering-gallery resonances of a dielectric sphere in air.

Resonance positions come from the real-branch characteristic equation, in
which the exterior field is the Neumann-type Riccati function chi. The
diffraction-limited Q comes from a separate complex root of the
outgoing-wave equation (chi replaced by xi = psi - i chi), seeded from the
real root.

Mode intensity is modelled as separable and scalar:
``|E|^2 ~ radial(r) * |Y_l^m(theta)|^2``, with radial(r) = j_l(N k r)^2
inside and the matched y_l(k r)^2 tail outside.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ai_zeros

from .numerics import (ConvergenceError, find_root_bracketed, integrate_adaptive,
                       polar_maximum, riccati_scaled, sph_scaled)

POLARIZATIONS = ("TE", "TM")
# root residual contract: |f| below this fraction of the local term scale
ROOT_RESIDUAL_TOL = 1e-9
# scan step in size-parameter units, as a fraction of one FSR (1/N)
SCAN_STEPS_PER_FSR = 50
# effective-index acceptance (1/e half-width) of the prism detection path
DEFAULT_COUPLER_APERTURE = 0.02


class AmbiguityError(ValueError):
    """Two peak labelings fit the measured spectrum about equally well."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sphere:
    """Dielectric sphere in air. Lengths in meters."""

    radius: float
    index_real: float
    index_imag: float = 0.0
    ambient_index: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.ambient_index != 1.0:
            raise ValueError("only an air ambient (index 1.0) is supported")
        if not self.index_real > self.ambient_index:
            raise ValueError("sphere index must exceed the ambient index for guided modes")
        if self.index_imag < 0:
            raise ValueError("index_imag must be non-negative")

    @classmethod
    def from_diameter(cls, diameter, index_real, index_imag=0.0):
        return cls(diameter / 2.0, index_real, index_imag)

    @property
    def index(self):
        return complex(self.index_real, self.index_imag)

    def size_parameter(self, wavelength):
        return 2 * math.pi * self.radius / wavelength

    def wavelength(self, size_parameter):
        return 2 * math.pi * self.radius / size_parameter


@dataclass(frozen=True, order=True)
class ModeId:
    polarization: str
    n: int
    l: int
    m: int

    def __post_init__(self):
        if self.polarization not in POLARIZATIONS:
            raise ValueError(f"polarization must be TE or TM, got {self.polarization!r}")
        if self.n < 1 or self.l < 1:
            raise ValueError(f"need n >= 1 and l >= 1, got n={self.n}, l={self.l}")
        if abs(self.m) > self.l:
            raise ValueError(f"need |m| <= l, got l={self.l}, m={self.m}")

    @property
    def fundamental(self):
        return self.n == 1 and abs(self.m) == self.l

    @property
    def polar_order(self):
        """l - |m|; the mode has polar_order + 1 lobes across the equator."""
        return self.l - abs(self.m)


@dataclass(frozen=True)
class Mode:
    id: ModeId
    lambda_res: float
    size_parameter: float
    q_radiative: float
    mode_volume: float
    surface_intensity_rel: float
    decay_length: float
    q_loaded: float | None = None

    @property
    def q_total(self):
        if self.q_loaded is None:
            return self.q_radiative
        return 1.0 / (1.0 / self.q_loaded + 1.0 / self.q_radiative)

    def with_q_loaded(self, q_loaded):
        if q_loaded is not None and not q_loaded > 0:
            raise ValueError("q_loaded must be positive")
        return replace(self, q_loaded=q_loaded)


@dataclass(frozen=True)
class Peak:
    wavelength: float
    polarization: str = "unknown"
    height: float = 1.0
    mode_id: ModeId | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.polarization not in ("TE", "TM", "unknown"):
            raise ValueError(f"bad polarization {self.polarization!r}")


@dataclass(frozen=True)
class PeakList:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        w = [p.wavelength for p in self.entries]
        if any(b <= a for a, b in zip(w, w[1:])):
            raise ValueError("peak wavelengths must be strictly increasing")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def wavelengths(self):
        return np.array([p.wavelength for p in self.entries])


# ---------------------------------------------------------------------------
# Characteristic equation
# ---------------------------------------------------------------------------

def _char_terms(N, pol, l, x, outgoing):
    """Both terms of the characteristic function in a shared log scale, plus
    the Riccati values they were built from."""
    a, da, la = riccati_scaled("psi", l, N * x)
    if outgoing:
        p, dp, lp = riccati_scaled("psi", l, x)
        c, dc, lc = riccati_scaled("chi", l, x)
        r = np.exp(lp - lc)
        b, db, lb = p * r - 1j * c, dp * r - 1j * dc, lc
    else:
        b, db, lb = riccati_scaled("chi", l, x)
    if pol == "TE":
        t1 = N * da * b
    elif pol == "TM":
        t1 = da * b / N
    else:
        raise ValueError(f"polarization must be TE or TM, got {pol!r}")
    return t1, a * db, la + lb, (a, da, b, db)


def characteristic_fn(sphere, pol, l, x, normalized=False):
    """WGM characteristic function; its zeros are the resonances.

    TE: ``N psi_l'(Nx) chi_l(x) - psi_l(Nx) chi_l'(x)``
    TM: ``psi_l'(Nx) chi_l(x) / N - psi_l(Nx) chi_l'(x)``

    A real ``x`` selects the real branch (real index, chi); a complex ``x``
    selects the outgoing branch (complex index, xi = psi - i chi).

    With ``normalized=True`` the value is divided by
    ``|(psi, psi')| * |(chi, chi')|``, which is positive and smooth, so the
    zeros are unchanged while the magnitude stays O(1) for any l.
    """
    outgoing = np.iscomplexobj(x)
    N = sphere.index if outgoing else sphere.index_real
    t1, t2, logs, (a, da, b, db) = _char_terms(N, pol, l, x, outgoing)
    if normalized:
        return (t1 - t2) / (np.sqrt(np.abs(a) ** 2 + np.abs(da) ** 2)
                            * np.sqrt(np.abs(b) ** 2 + np.abs(db) ** 2))
    return (t1 - t2) * np.exp(logs)


def characteristic_residual(sphere, pol, l, x):
    """``|f| / (|term1| + |term2|)``: scale-free residual used by the root contract."""
    outgoing = np.iscomplexobj(x)
    N = sphere.index if outgoing else sphere.index_real
    t1, t2, _, _ = _char_terms(N, pol, l, x, outgoing)
    return np.abs(t1 - t2) / (np.abs(t1) + np.abs(t2))


def _char_derivative(N, pol, l, x, terms):
    # psi'' = (l(l+1)/z^2 - 1) psi removes all second derivatives.
    a, da, b, db = terms
    if pol == "TE":
        return (1 - N * N) * a * b
    return a * b * l * (l + 1) / (x * x) * (1 / (N * N) - 1) + (1 / N - N) * da * db


# ---------------------------------------------------------------------------
# Asymptotics (seeds and coarse search only)
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _airy_zeros(count):
    return ai_zeros(count)[0]


def asymptotic_size_parameter(N, pol, l, n):
    """Large-l expansion of the n-th resonance of order l.

    Accurate to ~1e-3 in x for low n at l of a few hundred; used to seed
    brackets, never as a final answer.
    """
    a = _airy_zeros(max(int(n), 1) + 1)[int(n) - 1]
    nu = np.asarray(l, dtype=float) + 0.5
    h = nu / 2
    P = 1.0 if pol == "TE" else 1.0 / N ** 2
    T = (nu - a * h ** (1 / 3) + 0.15 * a ** 2 * h ** (-1 / 3)
         + (a ** 3 + 10) / 1400 * h ** -1 - a * (479 * a ** 3 - 40) / 504000 * h ** (-5 / 3))
    s = N * N - 1
    t = (T - N * P / math.sqrt(s)
         + a * (3 - 2 * P ** 2) * P * N ** 3 * h ** (-2 / 3) / (6 * s ** 1.5)
         - N ** 2 * P * (P - 1) * (P ** 2 * N ** 2 + P * N ** 2 - 1) * h ** -1 / (4 * s ** 2))
    return t / N


# ---------------------------------------------------------------------------
# Radial field
# ---------------------------------------------------------------------------

def count_radial_maxima(N, l, x, points=10_000):
    """Number of interior local maxima of j_l(N k r)^2 on a uniform radial grid.

    j_l is monotone below its turning point, so the grid starts at 0.9 l.
    """
    rho_hi = N * x
    rho_lo = min(0.9 * l, 0.5 * rho_hi)
    rho = np.linspace(rho_lo, rho_hi, points + 1)[1:-1]
    f, _, logs = sph_scaled("j", l, rho)
    with np.errstate(divide="ignore"):
        v = np.log(np.abs(f)) + logs
    inner = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])
    return int(np.count_nonzero(inner))


class RadialField:
    """Scalar radial intensity of one resonance, normalized to its global maximum.

    Interior: j_l(N k r)^2. Exterior: the interior surface value continued with
    (y_l(k r) / y_l(k R))^2; TM modes carry an extra N^4 across the surface
    from continuity of the normal displacement.
    """

    def __init__(self, radius, index, pol, l, x):
        self.radius = float(radius)
        self.index = float(index)
        self.pol = pol
        self.l = int(l)
        self.x = float(x)
        self.k = self.x / self.radius
        N = self.index
        self._log_in_surface = self._log_interior(np.array([self.radius]))[0]
        fR, _, lR = sph_scaled("y", self.l, self.x)
        self._log_yR = 2 * math.log(abs(fR)) + 2 * lR
        self._log_jump = 4 * math.log(N) if pol == "TM" else 0.0
        log_peak, self.r_peak = self._interior_peak()
        log_surface_out = self._log_in_surface + self._log_jump
        self._log_max = max(log_peak, log_surface_out)
        self.interior_max_rel = math.exp(log_peak - self._log_max)

    def _log_interior(self, r):
        f, _, logs = sph_scaled("j", self.l, self.index * self.k * r)
        with np.errstate(divide="ignore"):
            return 2 * (np.log(np.abs(f)) + logs)

    def _log_exterior(self, r):
        f, _, logs = sph_scaled("y", self.l, self.k * r)
        return 2 * (np.log(np.abs(f)) + logs) - self._log_yR + self._log_in_surface + self._log_jump

    def _interior_peak(self):
        N, l = self.index, self.l
        rho_hi = N * self.x
        rho = np.linspace(min(0.95 * l, 0.9 * rho_hi), rho_hi, 4001)
        v = self._log_interior(rho / (N * self.k))
        i = int(np.argmax(v))
        a = rho[max(i - 1, 0)] / (N * self.k)
        b = rho[min(i + 1, rho.size - 1)] / (N * self.k)
        res = minimize_scalar(lambda r: -self._log_interior(np.array([r]))[0],
                              bounds=(a, b), method="bounded", options={"xatol": 1e-12 * b})
        if -res.fun >= v[i]:
            return float(-res.fun), float(res.x)
        return float(v[i]), float(rho[i] / (N * self.k))

    def log_intensity(self, r):
        """Natural log of the normalized intensity (``-inf`` at nodes)."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("radial position must be positive")
        out = np.empty(r.shape)
        inside = r < self.radius
        if inside.any():
            out[inside] = self._log_interior(r[inside])
        if (~inside).any():
            out[~inside] = self._log_exterior(r[~inside])
        return out - self._log_max

    def __call__(self, r):
        return np.exp(self.log_intensity(r))

    @property
    def surface_rel(self):
        return math.exp(self._log_in_surface + self._log_jump - self._log_max)

    def decay_length(self, span=200e-9, points=41):
        """Field 1/e length L from a log-linear fit, intensity ~ exp(-2 d / L)."""
        d = np.linspace(0.0, span, points)
        v = self.log_intensity(self.radius + d)
        slope = np.polyfit(d, v, 1)[0]
        return float(-2.0 / slope)

    def outer_limit(self, decays=40.0):
        # stay inside the outer turning point r = l/k where the tail turns radiative
        return min(self.radius + decays * self.decay_length(), 0.999 * self.l / self.k)


@functools.lru_cache(maxsize=256)
def cached_radial_field(radius, index, pol, l, x):
    return RadialField(radius, index, pol, l, x)


def radial_field(sphere, mode):
    return cached_radial_field(sphere.radius, sphere.index_real, mode.id.polarization,
                         mode.id.l, mode.size_parameter)


def radial_profile(sphere, mode, r):
    """Relative intensity at radius ``r`` (meters), 1 at the global maximum.

    At ``r = R`` the exterior-side value is returned.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("radial position must be positive")
    return radial_field(sphere, mode)(r)


# ---------------------------------------------------------------------------
# Mode volume
# ---------------------------------------------------------------------------

def effective_volume(intensity, radius, index, r_max, polar_max, peak=None, tol_rel=1e-8):
    """``int eps |E|^2 dV / max(eps |E|^2)`` for a separable intensity.

    ``intensity`` is the (arbitrarily scaled) radial part, ``polar_max`` the
    maximum of the unit-normalized polar factor. ``peak`` is max(eps * I) if
    known; otherwise it is taken from a dense grid.
    """
    N2 = index * index
    inner = integrate_adaptive(lambda r: N2 * intensity(r) * r * r, 0.0, radius, tol_rel)
    outer = integrate_adaptive(lambda r: intensity(r) * r * r, radius, r_max, tol_rel)
    if peak is None:
        grid = np.linspace(radius * 1e-3, r_max, 200_001)
        eps = np.where(grid < radius, N2, 1.0)
        peak = float(np.max(eps * intensity(grid)))
    return (inner + outer) / (peak * polar_max)


def volume_from_field(field_, polar_max):
    """Mode volume from a :class:`RadialField` and the polar-factor maximum."""
    N2 = field_.index ** 2
    peak = max(N2 * field_.interior_max_rel, field_.surface_rel)
    return effective_volume(field_, field_.radius, field_.index, field_.outer_limit(),
                            polar_max, peak=peak)


def _volume_for(field_, m_abs):
    return volume_from_field(field_, polar_maximum(field_.l, m_abs)[0])


def mode_volume(sphere, mode):
    """Effective mode volume in cubic meters (depends on ``mode.id.m``)."""
    return _volume_for(radial_field(sphere, mode), abs(mode.id.m))


# ---------------------------------------------------------------------------
# Complex roots and Q
# ---------------------------------------------------------------------------

def complex_root(sphere, pol, l, x_seed, max_iter=50):
    """Newton iteration for the outgoing-wave root near a real resonance."""
    N = sphere.index
    x = complex(x_seed)
    for it in range(max_iter):
        t1, t2, _, terms = _char_terms(N, pol, l, x, True)
        d = _char_derivative(N, pol, l, x, terms)
        step = (t1 - t2) / d
        x -= step
        if it >= 1 and abs(step) <= 1e-15 * abs(x) and abs(step.imag) <= 1e-10 * abs(x.imag):
            return x
    raise ConvergenceError(f"complex resonance search did not converge (l={l}, {pol})",
                           best_estimate=x)


def q_from_root(x):
    if not x.imag < 0:
        raise ConvergenceError(f"complex root {x} is not a decaying resonance")
    return x.real / (-2.0 * x.imag)


def real_root_table(sphere, pol, l):
    """All real-branch resonances of order l with x in (l/N, l), ascending.

    Entry i is radial order i + 1 because the scan starts below the first one.
    """
    N = sphere.index_real
    return [r for r in scan_roots(sphere, pol, l, l / N + 1e-6, float(l))]


def radiative_q(sphere, pol, l, n):
    """Diffraction-limited Q of the (pol, n, l) resonance.

    A nonzero ``sphere.index_imag`` folds material absorption into the result.
    """
    roots = real_root_table(sphere, pol, l)
    if n > len(roots):
        raise ValueError(f"order l={l} supports only {len(roots)} confined radial orders")
    return q_from_root(complex_root(sphere, pol, l, roots[n - 1]))


# ---------------------------------------------------------------------------
# Resonance search
# ---------------------------------------------------------------------------

def scan_roots(sphere, pol, l, x_lo, x_hi):
    N = sphere.index_real
    if not x_lo < x_hi:
        return []
    step = 1.0 / (SCAN_STEPS_PER_FSR * N)
    xs = np.linspace(x_lo, x_hi, max(int(math.ceil((x_hi - x_lo) / step)), 1) + 1)
    g = characteristic_fn(sphere, pol, l, xs, normalized=True)

    def scalar_g(x):
        return float(characteristic_fn(sphere, pol, l, float(x), normalized=True))

    roots = []
    for i in np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) <= 0):
        if g[i] == 0:
            root = float(xs[i])
        elif g[i + 1] == 0:
            continue
        else:
            root = find_root_bracketed(scalar_g, xs[i], xs[i + 1], tol_x=1e-12).root
        res = float(characteristic_residual(sphere, pol, l, root))
        if res > ROOT_RESIDUAL_TOL:
            raise ConvergenceError(f"resonance residual {res:.2e} exceeds contract "
                                   f"(l={l}, {pol}, x={root})", best_estimate=root)
        roots.append(root)
    return roots


def describe_mode(sphere, pol, l, x, n=None, m=None, q_loaded=None):
    """Build a :class:`Mode` from a real-branch root ``x``."""
    N = sphere.index_real
    if n is None:
        n = count_radial_maxima(N, l, x)
    m = l if m is None else m
    fld = cached_radial_field(sphere.radius, N, pol, l, float(x))
    q_rad = q_from_root(complex_root(sphere, pol, l, x))
    return Mode(
        id=ModeId(pol, n, l, m),
        lambda_res=sphere.wavelength(x),
        size_parameter=float(x),
        q_radiative=q_rad,
        mode_volume=_volume_for(fld, abs(m)),
        surface_intensity_rel=fld.surface_rel,
        decay_length=fld.decay_length(),
        q_loaded=q_loaded,
    )


def find_resonances(sphere, pol, l, n_max, lambda_window, q_loaded=None):
    """Resonances of order ``l`` with radial order <= ``n_max`` inside the
    wavelength window, sorted by wavelength.

    The radial order of each root is the number of interior intensity maxima.
    """
    lam_min, lam_max = lambda_window
    if not 0 < lam_min < lam_max:
        raise ValueError("lambda_window must satisfy 0 < min < max")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    N = sphere.index_real
    x_lo = max(sphere.size_parameter(lam_max), l / N + 1e-6)
    x_hi = min(sphere.size_parameter(lam_min), float(l))
    modes = []
    for x in scan_roots(sphere, pol, l, x_lo, x_hi):
        n = count_radial_maxima(N, l, x)
        if n <= n_max:
            modes.append(describe_mode(sphere, pol, l, x, n=n, q_loaded=q_loaded))
    return sorted(modes, key=lambda md: md.lambda_res)


def fsr_analytic(sphere, wavelength):
    """Free spectral range in wavelength, lambda^2 / (2 pi R N)."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    return wavelength ** 2 / (2 * math.pi * sphere.radius * sphere.index_real)


def orders_in_window(sphere, x_lo, x_hi, n_max, margin=3):
    N = sphere.index_real
    ls = np.arange(max(int(x_lo) - 10, 1), int(N * x_hi) + 10)
    lo_x = np.minimum(asymptotic_size_parameter(N, "TE", ls, 1),
                      asymptotic_size_parameter(N, "TM", ls, 1))
    hi_x = np.maximum(asymptotic_size_parameter(N, "TE", ls, n_max),
                      asymptotic_size_parameter(N, "TM", ls, n_max))
    ok = (hi_x >= x_lo - 1.0) & (lo_x <= x_hi + 1.0)
    if not ok.any():
        return range(0)
    return range(max(int(ls[ok].min()) - margin, 1), int(ls[ok].max()) + margin + 1)


def fundamental_l(sphere, wavelength, pol="TE"):
    """Order l whose n = 1 resonance lies closest to ``wavelength``."""
    N = sphere.index_real
    x = sphere.size_parameter(wavelength)
    ls = np.arange(max(int(x) - 5, 1), int(N * x) + 5)
    xs = asymptotic_size_parameter(N, pol, ls, 1)
    return int(ls[np.argmin(np.abs(xs - x))])


def fundamental_mode(sphere, wavelength, pol="TE", q_loaded=None, m=None):
    """The n = 1 resonance nearest ``wavelength`` (|m| = l unless ``m`` given)."""
    l = fundamental_l(sphere, wavelength, pol)
    N = sphere.index_real
    seed = float(asymptotic_size_parameter(N, pol, l, 1))
    fsr = 1.0 / N
    roots = scan_roots(sphere, pol, l, seed - 0.4 * fsr, seed + 0.4 * fsr)
    if not roots:
        raise ConvergenceError(f"no n=1 resonance found near l={l}")
    return describe_mode(sphere, pol, l, roots[0], n=1, m=m, q_loaded=q_loaded)


def synthesize_spectrum(sphere, lambda_window, n_max, coupler_aperture=DEFAULT_COUPLER_APERTURE):
    """Labeled theoretical spectrum: every TE/TM resonance with n <= n_max and
    |m| = l inside the window.

    Peak heights model detection through an evanescent prism coupler: the
    per-photon surface intensity (surface_intensity_rel / V_eff) times a
    Gaussian phase-matching acceptance in effective index, centred on the
    most confined family present. Heights are scaled to a maximum of 1.
    """
    lam_min, lam_max = lambda_window
    x_lo, x_hi = sphere.size_parameter(lam_max), sphere.size_parameter(lam_min)
    modes = []
    for l in orders_in_window(sphere, x_lo, x_hi, n_max):
        for pol in POLARIZATIONS:
            modes.extend(find_resonances(sphere, pol, l, n_max, lambda_window))
    if not modes:
        return PeakList(())
    modes.sort(key=lambda md: md.lambda_res)
    n_eff = np.array([md.id.l / md.size_parameter for md in modes])
    ref = n_eff.max()
    h = np.array([md.surface_intensity_rel / md.mode_volume for md in modes])
    h *= np.exp(-((n_eff - ref) / coupler_aperture) ** 2)
    h /= h.max()
    return PeakList(Peak(md.lambda_res, md.id.polarization, float(hh), md.id)
                    for md, hh in zip(modes, h))


def mode_family_spacing(modes):
    """Mean wavelength spacing between consecutive-l members of each
    (polarization, n) family in ``modes``; keyed by (pol, n)."""
    fam = {}
    for md in modes:
        fam.setdefault((md.id.polarization, md.id.n), []).append(md)
    out = {}
    for key, ms in fam.items():
        ms.sort(key=lambda md: md.id.l)
        d = [a.lambda_res - b.lambda_res for a, b in zip(ms, ms[1:]) if b.id.l == a.id.l + 1]
        if d:
            out[key] = float(np.mean(d))
    return out


# ---------------------------------------------------------------------------
# Peak assignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Assignment:
    sphere: Sphere
    labels: tuple
    rms: float
    runner_up_rms: float


class _Table:
    """Asymptotic resonance size parameters x(pol, n, l) at fixed index."""

    def __init__(self, N, n_max, l_lo, l_hi):
        ids, xs = [], []
        ls = np.arange(l_lo, l_hi + 1)
        for pol in POLARIZATIONS:
            for n in range(1, n_max + 1):
                ids += [ModeId(pol, n, int(l), int(l)) for l in ls]
                xs.append(asymptotic_size_parameter(N, pol, ls, n))
        self.ids = ids
        self.x = np.concatenate(xs)
        self.pol = np.array([i.polarization for i in ids])


def _fit_labels(table, lam, pol, r_lo, r_hi, iterations=6):
    """Distinct labelings reachable from every choice of label for the first
    peak, each with its closed-form radius and rms; keyed by label tuple."""
    two_pi = 2 * math.pi
    masks = {p: np.flatnonzero(table.pol == p) for p in POLARIZATIONS}
    everything = np.arange(table.x.size)
    candidates = [masks.get(p, everything) for p in pol]
    results = {}
    for j in candidates[0]:
        R = lam[0] * table.x[j] / two_pi
        if not r_lo <= R <= r_hi:
            continue
        labels = None
        for _ in range(iterations):
            synth = two_pi * R / table.x
            new = np.array([idx[np.argmin(np.abs(synth[idx] - w))]
                            for idx, w in zip(candidates, lam)])
            a = two_pi / table.x[new]
            R = float(np.dot(lam, a) / np.dot(a, a))
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
        if np.unique(labels).size < lam.size:
            continue
        rms = float(np.sqrt(np.mean((two_pi * R / table.x[labels] - lam) ** 2)))
        key = tuple(table.ids[i] for i in labels)
        if rms < results.get(key, (np.inf,))[0]:
            results[key] = (rms, R)
    return results


def _exact_x(N, mid):
    probe = Sphere(1.0, N)
    seed = float(asymptotic_size_parameter(N, mid.polarization, mid.l, mid.n))
    roots = scan_roots(probe, mid.polarization, mid.l, seed - 0.3, seed + 0.3)
    if len(roots) != 1:
        raise ConvergenceError(f"could not isolate resonance {mid}")
    return roots[0]


def _refine(lam, labels, N0, n_lo, n_hi):
    """Exact-root least squares over index (bounded scalar search), radius in
    closed form at each index."""
    two_pi = 2 * math.pi

    def solve(N):
        a = two_pi / np.array([_exact_x(N, mid) for mid in labels])
        R = float(np.dot(lam, a) / np.dot(a, a))
        return float(np.sqrt(np.mean((R * a - lam) ** 2))), R

    res = minimize_scalar(lambda N: solve(N)[0], bounds=(n_lo, n_hi), method="bounded",
                          options={"xatol": 1e-7 * N0})
    rms, R = solve(res.x)
    return rms, float(res.x), R


def assign_peaks(measured, radius_guess, index_guess, n_max=2, index_span=0.02,
                 radius_span=0.10, candidates=3):
    """Fit sphere radius and index to measured peaks and label every peak.

    A coarse search over an index grid uses the asymptotic resonance
    expansion: for each label hypothesis of the first peak the radius is
    solved in closed form and labels are reassigned to the nearest synthetic
    peak until stable. The best few distinct labelings are then refined with
    exact roots.

    Returns an :class:`Assignment`. Raises :class:`AmbiguityError` when the
    runner-up labeling fits within 10% of the best rms.
    """
    peaks = list(measured)
    if len(peaks) < 4:
        raise ValueError("peak assignment needs at least 4 measured peaks")
    lam = np.array([p.wavelength for p in peaks])
    pol = [p.polarization for p in peaks]
    guess = Sphere(radius_guess, index_guess)
    span_fsr = (lam[-1] - lam[0]) / fsr_analytic(guess, lam.mean())
    if span_fsr < 2.0 - 1e-9:
        raise ValueError(f"peaks span only {span_fsr:.2f} FSR; need at least 2")
    r_lo, r_hi = radius_guess * (1 - radius_span), radius_guess * (1 + radius_span)
    n_lo = max(index_guess * (1 - index_span), 1.0 + 1e-3)
    n_hi = index_guess * (1 + index_span)

    labelings = {}
    for N in np.linspace(n_lo, n_hi, 81):
        x_lo = 2 * math.pi * r_lo / lam[-1]
        x_hi = 2 * math.pi * r_hi / lam[0]
        table = _Table(N, n_max, max(int(x_lo) - 2, 1), int(N * x_hi) + 2)
        for key, (rms, _) in _fit_labels(table, lam, pol, r_lo, r_hi).items():
            if rms < labelings.get(key, (np.inf,))[0]:
                labelings[key] = (rms, N)
    if not labelings:
        raise ConvergenceError("no consistent labeling found within the search ranges")
    step = (n_hi - n_lo) / 80
    refined = []
    for key in sorted(labelings, key=lambda k: labelings[k][0])[:candidates]:
        N0 = labelings[key][1]
        rms, N, R = _refine(lam, key, N0, max(N0 - 15 * step, n_lo), min(N0 + 15 * step, n_hi))
        refined.append((rms, key, N, R))
    refined.sort(key=lambda t: t[0])
    rms, key, N, R = refined[0]
    runner = refined[1][0] if len(refined) > 1 else np.inf
    if runner < 1.1 * rms:
        raise AmbiguityError(f"labelings are ambiguous: best rms {rms:.3e} m, "
                             f"runner-up {runner:.3e} m")
    return Assignment(Sphere(R, N), key, rms, runner)


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

MODE_TABLE_HEADER = ["pol", "n", "l", "m", "lambda_nm", "q_rad", "v_eff_um3",
                     "surface_rel", "decay_nm"]


def write_mode_table(path, modes):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MODE_TABLE_HEADER)
        for md in modes:
            i = md.id
            w.writerow([i.polarization, i.n, i.l, i.m, f"{md.lambda_res * 1e9:.6f}",
                        f"{md.q_radiative:.6e}", f"{md.mode_volume * 1e18:.6f}",
                        f"{md.surface_intensity_rel:.6f}", f"{md.decay_length * 1e9:.4f}"])


def read_peaks(path):
    """Read a ``wavelength_nm,polarization,height`` CSV into a :class:`PeakList`."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"wavelength_nm", "polarization", "height"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'wavelength_nm,polarization,height'")
        rows = sorted(reader, key=lambda r: float(r["wavelength_nm"]))
    return PeakList(Peak(float(r["wavelength_nm"]) * 1e-9, r["polarization"].strip(),
                         float(r["height"])) for r in rows)


def write_peaks(path, peaks, labels=False):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["wavelength_nm", "polarization", "height"] + (["n", "l", "m"] if labels else []))
        for p in peaks:
            row = [f"{p.wavelength * 1e9:.6f}", p.polarization, f"{p.height:.6f}"]
            if labels:
                i = p.mode_id
                row += [i.n, i.l, i.m] if i is not None else ["", "", ""]
            w.writerow(row)
