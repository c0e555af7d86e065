"""Command-line front end.

Exit codes: 0 success, 2 input or validation error, 3 numerical
non-convergence. Files written by a failing run are removed.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import emitter_coupling as ec
from . import transfer as tr
from .config import DEFAULT_CONFIG, load_config, resolve_output_dir
from .numerics import BesselRangeError, BracketError, ConvergenceError
from .wgm_modes import (POLARIZATIONS, Sphere, find_resonances,
                        fundamental_mode, mode_family_spacing, read_peaks,
                        assign_peaks, synthesize_spectrum, write_mode_table, write_peaks,
                        orders_in_window)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class _Outputs:
    """Tracks files written by one run so a failure can remove them."""

    def __init__(self, directory):
        self.directory = directory
        self.written = []

    def path(self, name):
        os.makedirs(self.directory, exist_ok=True)
        p = os.path.join(self.directory, name)
        self.written.append(p)
        return p

    def discard(self):
        for p in self.written:
            if os.path.exists(p):
                os.remove(p)


def _sphere(args, cfg):
    if getattr(args, "diameter_um", None) is not None:
        idx = args.index if args.index is not None else cfg.sphere.index_real
        return Sphere.from_diameter(args.diameter_um * 1e-6, idx)
    return cfg.sphere


def _window(args, cfg):
    lo = args.lmin_nm * 1e-9 if getattr(args, "lmin_nm", None) is not None else cfg.wavelength_window[0]
    hi = args.lmax_nm * 1e-9 if getattr(args, "lmax_nm", None) is not None else cfg.wavelength_window[1]
    return lo, hi


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def cmd_modes(args, cfg, out):
    sphere, window = _sphere(args, cfg), _window(args, cfg)
    lo, hi = sphere.size_parameter(window[1]), sphere.size_parameter(window[0])
    modes = []
    for l in orders_in_window(sphere, lo, hi, args.nmax):
        for pol in POLARIZATIONS:
            modes.extend(find_resonances(sphere, pol, l, args.nmax, window, cfg.q_loaded))
    modes.sort(key=lambda md: md.lambda_res)
    write_mode_table(out.path("modes.csv"), modes)
    spacing = mode_family_spacing(modes)
    fsr = ", ".join(f"{p} n={n}: {v * 1e9:.4f} nm" for (p, n), v in sorted(spacing.items()))
    print(f"{len(modes)} modes; same-family spacing {fsr or 'n/a'}")


def cmd_spectrum(args, cfg, out):
    sphere, window = _sphere(args, cfg), _window(args, cfg)
    peaks = synthesize_spectrum(sphere, window, args.nmax, args.coupler_aperture)
    write_peaks(out.path("fig1b.csv"), peaks, labels=True)
    fams = {(p.mode_id.polarization, p.mode_id.n) for p in peaks}
    print(f"{len(peaks)} peaks in {len(fams)} families")


def cmd_assign(args, cfg, out):
    peaks = read_peaks(args.peaks)
    res = assign_peaks(peaks, args.radius_guess_um * 1e-6, args.index_guess, n_max=args.nmax)
    rows = [[f"{p.wavelength * 1e9:.6f}", i.polarization, i.n, i.l, i.m]
            for p, i in zip(peaks, res.labels)]
    _write_csv(out.path("assignment.csv"), ["wavelength_nm", "pol", "n", "l", "m"], rows)
    print(f"R = {res.sphere.radius * 1e6:.5f} um, N = {res.sphere.index_real:.6f}, "
          f"rms = {res.rms * 1e12:.3f} pm")


def _fund(args, cfg, wavelength=None):
    sphere = _sphere(args, cfg)
    lam = wavelength or cfg.donor.lambda_center
    return sphere, fundamental_mode(sphere, lam, "TE", q_loaded=cfg.q_loaded)


def cmd_beta0(args, cfg, out):
    sphere, mode = _fund(args, cfg)
    gaps = np.linspace(0.0, args.max_gap_nm, args.points) * 1e-9
    b = ec.beta0(sphere, mode, gaps)
    _write_csv(out.path("fig3d.csv"), ["gap_nm", "beta0"],
               [[f"{g * 1e9:.3f}", f"{v:.9e}"] for g, v in zip(gaps, b)])
    at = ec.beta0(sphere, mode, cfg.donor.gap)
    print(f"beta0({cfg.donor.gap * 1e9:g} nm) = {at:.4g} for {mode.id.polarization} "
          f"n={mode.id.n} l={mode.id.l}")


def cmd_distance_scan(args, cfg, out):
    sphere, mode = _fund(args, cfg)
    gaps = np.linspace(0.0, args.max_gap_nm, args.points) * 1e-9
    scan = ec.distance_scan(sphere, mode, gaps)
    _write_csv(out.path("fig2a.csv"), ["gap_nm", "signal_rel"],
               [[f"{g * 1e9:.3f}", f"{s:.9e}"] for g, s in scan])
    print(f"decay length {mode.decay_length * 1e9:.2f} nm")


def cmd_angular_fit(args, cfg, out):
    sphere = _sphere(args, cfg)
    lam = args.lambda_nm * 1e-9
    l = args.l if args.l is not None else fundamental_mode(sphere, lam).id.l
    if args.scan:
        scan = ec.read_angular_scan(args.scan)
    else:
        rng = np.random.default_rng(cfg.seed)
        th = np.radians(np.linspace(-args.span_deg, args.span_deg, 121))
        w = 0.5 ** np.arange(args.K)
        clean = ec.angular_curve(l, w, th)
        scan = ec.AngularScan(th, np.clip(clean * (1 + args.noise * rng.standard_normal(th.size)),
                                          0, None))
    fit = ec.fit_angular_scan(scan, sphere, l, args.K)
    arc = sphere.radius * fit.fitted_thetas * 1e6
    _write_csv(out.path("fig2b.csv"), ["theta_deg", "arc_um", "intensity_fit"],
               [[f"{t:.5f}", f"{a:.5f}", f"{v:.9e}"]
                for t, a, v in zip(np.degrees(fit.fitted_thetas), arc, fit.fitted_curve)])
    _write_csv(out.path("angular_weights.csv"), ["p", "weight"],
               [[p, f"{w:.9e}"] for p, w in enumerate(fit.weights)])
    hw = ec.half_width(l, fit.weights)
    print(f"l = {l}, half width {math.degrees(hw):.3f} deg "
          f"({sphere.radius * hw * 1e6:.3f} um), residual rms {fit.residual_rms:.3g}")


def cmd_transfer(args, cfg, out):
    b = tr.aggregate_eta(
        cfg.sphere, cfg.donor, cfg.acceptor, cfg.q_loaded, gamma_cav=cfg.gamma_cav,
        span=cfg.span, fsr_count=cfg.fsr_count, n_gain=cfg.n_gain, lm_gain=cfg.lm_gain,
        polarizations=cfg.polarizations, baseline_distance=cfg.baseline_distance,
        fret_r0=cfg.fret_r0, explicit=args.explicit, n_max=cfg.n_cutoff,
        lm_count=cfg.lm_cutoff)
    with open(out.path("transfer_report.txt"), "w") as fh:
        fh.write(tr.report_lines(b))
    tr.write_mode_rows(out.path("transfer_modes.csv"), b.per_mode + b.explicit_rows)
    print(f"eta_total = {b.eta_total:.3g}, enhancement = {b.enhancement:.3g}")


def cmd_baseline(args, cfg, out):
    sigma = args.sigma_cm2 * tr.CM2
    r = args.r_um * 1e-6
    p = tr.free_space_absorption(sigma, r)
    f = tr.fret_efficiency(r, cfg.fret_r0)
    _write_csv(out.path("baseline.csv"), ["r_um", "sigma_cm2", "free_space", "fret"],
               [[f"{args.r_um:g}", f"{args.sigma_cm2:g}", f"{p:.6e}", f"{f:.6e}"]])
    print(f"free-space absorption = {p:.3g}")


def cmd_mc_check(args, cfg, out):
    sigma_a = (args.sigma_a_cm2 * tr.CM2 if args.sigma_a_cm2 is not None
               else cfg.acceptor.sigma_abs_total)
    if args.sigma_q_cm2 is not None:
        sigma_q = args.sigma_q_cm2 * tr.CM2
    else:
        sphere, mode = _fund(args, cfg)
        sigma_q = tr.sigma_q(sphere, mode)
    budget = tr.LossBudget(sigma_a, sigma_q)
    seed = args.seed if args.seed is not None else cfg.seed
    est, se = tr.monte_carlo_quotient(budget, args.trials, seed)
    exact = tr.quotient(budget)
    z = (est - exact) / se if se > 0 else 0.0
    with open(out.path("mc_check.txt"), "w") as fh:
        fh.write(f"[mc_check]\ntrials = {args.trials}\nseed = {seed}\n"
                 f"estimate = {est:.9e}\nstandard_error = {se:.9e}\n"
                 f"analytic = {exact:.9e}\nz_score = {z:.4f}\n")
    print(f"quotient MC {est:.4g} +- {se:.2g}, analytic {exact:.4g}")


def build_parser():
    p = argparse.ArgumentParser(prog="wgmtransfer",
                                description="Whispering-gallery-mode photon transfer toolkit")
    p.add_argument("--print-default-config", action="store_true",
                   help="print the default scenario config and exit")
    sub = p.add_subparsers(dest="command")

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--output-dir", help="directory for output files")
        sp.set_defaults(func=func)
        return sp

    def sphere_flags(sp):
        sp.add_argument("--diameter-um", type=float)
        sp.add_argument("--index", type=float)

    sp = add("modes", cmd_modes, "resonance table in a wavelength window")
    sphere_flags(sp)
    sp.add_argument("--lmin-nm", type=float)
    sp.add_argument("--lmax-nm", type=float)
    sp.add_argument("--nmax", type=int, default=2)

    sp = add("spectrum", cmd_spectrum, "labeled theoretical spectrum")
    sphere_flags(sp)
    sp.add_argument("--lmin-nm", type=float)
    sp.add_argument("--lmax-nm", type=float)
    sp.add_argument("--nmax", type=int, default=2)
    sp.add_argument("--coupler-aperture", type=float, default=0.02)

    sp = add("assign", cmd_assign, "fit sphere parameters to measured peaks")
    sp.add_argument("--peaks", required=True, help="CSV wavelength_nm,polarization,height")
    sp.add_argument("--radius-guess-um", type=float, required=True)
    sp.add_argument("--index-guess", type=float, required=True)
    sp.add_argument("--nmax", type=int, default=2)

    sp = add("beta0", cmd_beta0, "single-mode emission fraction versus gap")
    sphere_flags(sp)
    sp.add_argument("--max-gap-nm", type=float, default=500.0)
    sp.add_argument("--points", type=int, default=101)

    sp = add("distance-scan", cmd_distance_scan, "collected signal versus gap")
    sphere_flags(sp)
    sp.add_argument("--max-gap-nm", type=float, default=300.0)
    sp.add_argument("--points", type=int, default=61)

    sp = add("angular-fit", cmd_angular_fit, "NNLS fit of an angular scan")
    sphere_flags(sp)
    sp.add_argument("--scan", help="CSV theta_deg,intensity; synthetic if omitted")
    sp.add_argument("--lambda-nm", type=float, default=610.0)
    sp.add_argument("--l", type=int)
    sp.add_argument("--K", type=int, default=10)
    sp.add_argument("--span-deg", type=float, default=15.0)
    sp.add_argument("--noise", type=float, default=0.02)

    sp = add("transfer", cmd_transfer, "aggregate transfer efficiency report")
    sp.add_argument("--explicit", action="store_true", help="also run the enumerated-mode sum")

    sp = add("baseline", cmd_baseline, "free-space and FRET baselines")
    sp.add_argument("--sigma-cm2", type=float, default=1e-16)
    sp.add_argument("--r-um", type=float, default=50.0)

    sp = add("mc-check", cmd_mc_check, "Monte Carlo check of the absorption quotient")
    sp.add_argument("--sigma-a-cm2", type=float)
    sp.add_argument("--sigma-q-cm2", type=float)
    sp.add_argument("--trials", type=int, default=10_000_000)
    sp.add_argument("--seed", type=int)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.print_default_config:
        sys.stdout.write(DEFAULT_CONFIG)
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    out = None
    try:
        cfg = load_config(args.config)
        out = _Outputs(resolve_output_dir(args.output_dir, cfg))
        args.func(args, cfg, out)
    except (ConvergenceError, BracketError, BesselRangeError) as exc:
        if out is not None:
            out.discard()
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        if out is not None:
            out.discard()
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
