"""Run configuration: an INI document in boundary units (nm, um, cm^2)."""
from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import dataclass

from .emitter_coupling import Emitter
from .wgm_modes import Sphere

OUTPUT_DIR_ENV = "WGMT_OUTPUT_DIR"

DEFAULT_CONFIG = """\
# Donor bead near a 35 um silica sphere, acceptor bead on its surface.
[sphere]
diameter_um = 35
index = 1.45724
index_imag = 0

[cavity]
q_loaded = 3e7
# quoted cavity linewidth; leave empty to use lambda / Q
gamma_cav_nm = 6e-5

[donor]
lambda_nm = 610
linewidth_nm = 20
sigma_cm2 = 1e-16
molecule_count = 1
gap_nm = 50
polar_angle_deg = 0

[acceptor]
lambda_nm = 650
linewidth_nm = 20
sigma_cm2 = 1e-16
molecule_count = 1
gap_nm = 0
polar_angle_deg = 0

[window]
lambda_min_nm = 606
lambda_max_nm = 612

[aggregation]
n_cutoff = 10
lm_cutoff = 40
n_gain = 10
lm_gain = 40
polarizations = 2
span_nm = 46
# set to override the count derived from span_nm
fsr_count =
baseline_distance_um = 35
fret_r0_nm = 10

[run]
seed = 20240611
output_dir =
"""

_SECTIONS = {
    "sphere": ["diameter_um", "index", "index_imag"],
    "cavity": ["q_loaded", "gamma_cav_nm"],
    "donor": ["lambda_nm", "linewidth_nm", "sigma_cm2", "molecule_count", "gap_nm",
              "polar_angle_deg"],
    "acceptor": ["lambda_nm", "linewidth_nm", "sigma_cm2", "molecule_count", "gap_nm",
                 "polar_angle_deg"],
    "window": ["lambda_min_nm", "lambda_max_nm"],
    "aggregation": ["n_cutoff", "lm_cutoff", "n_gain", "lm_gain", "polarizations", "span_nm",
                    "fsr_count", "baseline_distance_um", "fret_r0_nm"],
    "run": ["seed", "output_dir"],
}


@dataclass(frozen=True)
class RunConfig:
    sphere: Sphere
    donor: Emitter
    acceptor: Emitter
    q_loaded: float
    gamma_cav: float | None
    wavelength_window: tuple
    n_cutoff: int
    lm_cutoff: int
    n_gain: float
    lm_gain: float
    polarizations: int
    span: float | None
    fsr_count: int | None
    baseline_distance: float
    fret_r0: float
    seed: int
    output_dir: str | None

    def __post_init__(self):
        lo, hi = self.wavelength_window
        if not 0 < lo < hi:
            raise ValueError("wavelength window must satisfy 0 < min < max")
        if not self.q_loaded > 0:
            raise ValueError("q_loaded must be positive")
        if self.gamma_cav is not None and not self.gamma_cav > 0:
            raise ValueError("gamma_cav must be positive")
        if self.n_cutoff < 1 or self.lm_cutoff < 1:
            raise ValueError("cutoffs must be >= 1")
        if self.polarizations not in (1, 2):
            raise ValueError("polarizations must be 1 or 2")
        if self.fsr_count is not None and self.fsr_count < 1:
            raise ValueError("fsr_count must be >= 1")
        if not self.baseline_distance > 0 or not self.fret_r0 > 0:
            raise ValueError("baseline distance and r0 must be positive")


def _opt_float(text):
    text = text.strip()
    return float(text) if text else None


def _emitter(sec, role):
    return Emitter(
        role=role,
        lambda_center=sec.getfloat("lambda_nm") * 1e-9,
        linewidth=sec.getfloat("linewidth_nm") * 1e-9,
        sigma_abs_molecule=sec.getfloat("sigma_cm2") * 1e-4,
        molecule_count=sec.getint("molecule_count"),
        gap=sec.getfloat("gap_nm") * 1e-9,
        polar_angle=math.radians(sec.getfloat("polar_angle_deg")),
    )


def parse_config(text):
    """Parse an INI document; unspecified keys take the default scenario values."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(DEFAULT_CONFIG)
    user = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    user.read_string(text)
    for section in user.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        for key, value in user[section].items():
            if key not in _SECTIONS[section]:
                raise ValueError(f"unknown key '{key}' in [{section}]")
            cp[section][key] = value
    try:
        s, c, a, w, r = cp["sphere"], cp["cavity"], cp["aggregation"], cp["window"], cp["run"]
        fsr = _opt_float(a["fsr_count"])
        span = _opt_float(a["span_nm"])
        gamma = _opt_float(c["gamma_cav_nm"])
        return RunConfig(
            sphere=Sphere.from_diameter(s.getfloat("diameter_um") * 1e-6, s.getfloat("index"),
                                        s.getfloat("index_imag")),
            donor=_emitter(cp["donor"], "donor"),
            acceptor=_emitter(cp["acceptor"], "acceptor"),
            q_loaded=c.getfloat("q_loaded"),
            gamma_cav=None if gamma is None else gamma * 1e-9,
            wavelength_window=(w.getfloat("lambda_min_nm") * 1e-9,
                               w.getfloat("lambda_max_nm") * 1e-9),
            n_cutoff=a.getint("n_cutoff"),
            lm_cutoff=a.getint("lm_cutoff"),
            n_gain=a.getfloat("n_gain"),
            lm_gain=a.getfloat("lm_gain"),
            polarizations=a.getint("polarizations"),
            span=None if span is None else span * 1e-9,
            fsr_count=None if fsr is None else int(fsr),
            baseline_distance=a.getfloat("baseline_distance_um") * 1e-6,
            fret_r0=a.getfloat("fret_r0_nm") * 1e-9,
            seed=r.getint("seed"),
            output_dir=r["output_dir"].strip() or None,
        )
    except configparser.Error as exc:
        raise ValueError(f"bad config: {exc}") from exc


def load_config(path=None):
    if path is None:
        return parse_config("")
    with open(path) as fh:
        return parse_config(fh.read())


def _g(x):
    # 12 significant digits absorb the unit-conversion rounding
    return format(float(x), ".12g")


def serialize_config(cfg):
    """Write ``cfg`` back as an INI document accepted by :func:`parse_config`."""
    def emitter(e):
        return {
            "lambda_nm": _g(e.lambda_center * 1e9), "linewidth_nm": _g(e.linewidth * 1e9),
            "sigma_cm2": _g(e.sigma_abs_molecule * 1e4), "molecule_count": str(e.molecule_count),
            "gap_nm": _g(e.gap * 1e9), "polar_angle_deg": _g(math.degrees(e.polar_angle)),
        }

    data = {
        "sphere": {"diameter_um": _g(cfg.sphere.radius * 2e6), "index": _g(cfg.sphere.index_real),
                   "index_imag": _g(cfg.sphere.index_imag)},
        "cavity": {"q_loaded": _g(cfg.q_loaded),
                   "gamma_cav_nm": "" if cfg.gamma_cav is None else _g(cfg.gamma_cav * 1e9)},
        "donor": emitter(cfg.donor),
        "acceptor": emitter(cfg.acceptor),
        "window": {"lambda_min_nm": _g(cfg.wavelength_window[0] * 1e9),
                   "lambda_max_nm": _g(cfg.wavelength_window[1] * 1e9)},
        "aggregation": {
            "n_cutoff": str(cfg.n_cutoff), "lm_cutoff": str(cfg.lm_cutoff),
            "n_gain": _g(cfg.n_gain), "lm_gain": _g(cfg.lm_gain),
            "polarizations": str(cfg.polarizations),
            "span_nm": "" if cfg.span is None else _g(cfg.span * 1e9),
            "fsr_count": "" if cfg.fsr_count is None else str(cfg.fsr_count),
            "baseline_distance_um": _g(cfg.baseline_distance * 1e6),
            "fret_r0_nm": _g(cfg.fret_r0 * 1e9),
        },
        "run": {"seed": str(cfg.seed), "output_dir": cfg.output_dir or ""},
    }
    cp = configparser.ConfigParser()
    cp.read_dict(data)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def resolve_output_dir(flag_value, cfg=None):
    """Flag, then environment variable, then config, then the working directory."""
    for candidate in (flag_value, os.environ.get(OUTPUT_DIR_ENV),
                      cfg.output_dir if cfg is not None else None):
        if candidate:
            return candidate
    return "."
