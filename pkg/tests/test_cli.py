import os

import pytest

from wgmtransfer import cli
from wgmtransfer import transfer as tr
from wgmtransfer.config import (DEFAULT_CONFIG, OUTPUT_DIR_ENV, load_config, parse_config,
                                serialize_config)
from wgmtransfer.numerics import ConvergenceError


def run(argv, out=None):
    return cli.main(argv + (["--output-dir", str(out)] if out is not None else []))


def test_default_config_parses_and_round_trips(capsys):
    assert run(["--print-default-config"]) == 0
    text = capsys.readouterr().out
    assert text == DEFAULT_CONFIG
    cfg = parse_config(text)
    assert cfg.sphere.radius == pytest.approx(17.5e-6)
    assert cfg.q_loaded == 3e7
    once = serialize_config(cfg)
    assert serialize_config(parse_config(once)) == once
    assert parse_config(once) == cfg


def test_bad_config_is_input_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("[sphere]\nradius_furlongs = 3\n")
    assert run(["baseline", "--config", str(path)], tmp_path / "o") == 2
    path.write_text("[sphere]\ndiameter_um = -4\n")
    assert run(["baseline", "--config", str(path)], tmp_path / "o") == 2


def test_usage_errors():
    assert run([]) == 2
    assert run(["no-such-command"]) == 2
    assert run(["baseline", "--no-such-flag"]) == 2


def test_baseline(tmp_path, capsys):
    assert run(["baseline", "--sigma-cm2", "1e-16", "--r-um", "50"], tmp_path) == 0
    assert "3.18e-13" in capsys.readouterr().out
    rows = (tmp_path / "baseline.csv").read_text().splitlines()
    assert rows[0] == "r_um,sigma_cm2,free_space,fret"


def test_modes_table_spacing(tmp_path):
    assert run(["modes", "--diameter-um", "96", "--index", "1.45724", "--lmin-nm", "608",
                "--lmax-nm", "610", "--nmax", "1"], tmp_path) == 0
    lines = (tmp_path / "modes.csv").read_text().splitlines()
    te = [float(l.split(",")[4]) for l in lines[1:] if l.startswith("TE,1,")]
    assert len(te) >= 2
    assert te[1] - te[0] == pytest.approx(0.85, rel=0.05)


def test_figure_outputs(tmp_path):
    assert run(["beta0", "--points", "11"], tmp_path) == 0
    assert run(["distance-scan", "--points", "11"], tmp_path) == 0
    assert run(["angular-fit", "--diameter-um", "96", "--l", "400"], tmp_path) == 0
    heads = {name: (tmp_path / name).read_text().splitlines()[0]
             for name in ("fig3d.csv", "fig2a.csv", "fig2b.csv")}
    assert heads == {"fig3d.csv": "gap_nm,beta0", "fig2a.csv": "gap_nm,signal_rel",
                     "fig2b.csv": "theta_deg,arc_um,intensity_fit"}


def test_transfer_report(tmp_path):
    assert run(["transfer"], tmp_path) == 0
    report = (tmp_path / "transfer_report.txt").read_text()
    values = dict(l.split(" = ") for l in report.splitlines() if " = " in l)
    assert float(values["enhancement"]) > 1e6
    assert float(values["multimode_factor"]) == 16000


def test_failure_removes_partial_outputs(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise ConvergenceError("synthetic failure")

    monkeypatch.setattr(tr, "write_mode_rows", boom)
    assert run(["transfer"], tmp_path) == 3
    assert not (tmp_path / "transfer_report.txt").exists()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
    assert run(["baseline"]) == 0
    assert (tmp_path / "env" / "baseline.csv").exists()


def test_mc_check_reproducible(tmp_path):
    argv = ["mc-check", "--trials", "50000", "--seed", "3", "--sigma-q-cm2", "2e-12"]
    assert run(argv, tmp_path / "a") == 0
    assert run(argv, tmp_path / "b") == 0
    a = (tmp_path / "a" / "mc_check.txt").read_bytes()
    assert a == (tmp_path / "b" / "mc_check.txt").read_bytes()


def test_assign_round_trip(tmp_path, sphere96):
    from wgmtransfer.wgm_modes import Peak, PeakList, synthesize_spectrum, write_peaks
    peaks = synthesize_spectrum(sphere96, (606e-9, 608.5e-9), 2)
    write_peaks(tmp_path / "peaks.csv", PeakList(Peak(p.wavelength, p.polarization) for p in peaks))
    assert run(["assign", "--peaks", str(tmp_path / "peaks.csv"), "--radius-guess-um", "47",
                "--index-guess", "1.46"], tmp_path) == 0
    rows = (tmp_path / "assignment.csv").read_text().splitlines()
    assert len(rows) == len(peaks) + 1


def test_load_config_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("[donor]\ngap_nm = 80\n")
    assert load_config(str(path)).donor.gap == pytest.approx(80e-9)
    assert os.path.exists(path)
