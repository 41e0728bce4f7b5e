import hashlib
from pathlib import Path

import numpy as np
import pytest

from wormhole_lab import cli
from wormhole_lab.harmonic import load_csv
from wormhole_lab.spectral import read_spectral_table
from wormhole_lab.tables import read_table, write_table

GOLDEN = Path(__file__).parent / "golden"

BUMP = """\
# small bump about Q_1
[evolve]
degree = 1
L = 60
h = 0.1
T = 40
amplitude = 0.1   # inline comment
snapshot_every = 1
"""

STATIC = """\
[evolve]
degree = 1
L = 30
h = 0.1
T = 10
amplitude = 0.0
"""


def run(*argv):
    return cli.main([str(a) for a in argv])


def manifest_entries(path, section="outputs"):
    return cli.read_manifest(path).get(section, {})


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------- configuration

def test_unknown_key_names_file_and_line(tmp_path, capsys):
    cfg = write(tmp_path, "c.cfg", "[evolve]\nL = 3\n\nfoo = 1\n")
    assert run("evolve", "--config", cfg, "--out-dir", tmp_path) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:4:" in err and "foo" in err


def test_bad_value_names_line(tmp_path, capsys):
    cfg = write(tmp_path, "c.cfg", "# header\n[evolve]\nh = fast\n")
    assert run("evolve", "--config", cfg) == 2
    assert f"{cfg}:3:" in capsys.readouterr().err


def test_foreign_section_rejected(tmp_path, capsys):
    cfg = write(tmp_path, "c.cfg", "[spectral]\nn = 1\n")
    assert run("harmonic", "--config", cfg) == 2
    assert "does not apply to 'harmonic'" in capsys.readouterr().err


def test_repeated_key_and_orphan_line(tmp_path, capsys):
    cfg = write(tmp_path, "c.cfg", "[harmonic]\nn = 1\nn = 2\n")
    assert run("harmonic", "--config", cfg) == 2
    assert "first set on line 2" in capsys.readouterr().err
    cfg = write(tmp_path, "d.cfg", "n = 1\n")
    assert run("harmonic", "--config", cfg) == 2
    assert f"{cfg}:1:" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert run("evolve", "--config", tmp_path / "nope.cfg") == 2
    assert "cannot read" in capsys.readouterr().err


def test_flags_override_config_and_defaults_are_echoed(tmp_path):
    cfg = write(tmp_path, "c.cfg", "[harmonic]\nn = 2\n")
    assert run("harmonic", "--config", cfg, "--n", 0, "--out-dir", tmp_path) == 0
    echo = cli.read_config(tmp_path / "harmonic_n0_manifest.txt", "harmonic")
    got = cli.resolve_section(echo, "harmonic", {})
    assert got["n"] == 0
    assert set(echo.values["harmonic"]) == set(cli.SCHEMAS["harmonic"])


def test_parse_ints_ranges():
    assert cli._parse_ints("1-3, 7") == (1, 2, 3, 7)
    assert cli._parse_ints("10") == (10,)


# ---------------------------------------------------------------- harmonic

def test_negative_degree_is_usage_error(tmp_path, capsys):
    assert run("harmonic", "--n", -1, "--out-dir", tmp_path) == 2
    assert "nonnegative" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_missing_degree_is_usage_error(capsys):
    assert run("harmonic") == 2
    assert "--n" in capsys.readouterr().err


def test_zero_map(tmp_path):
    assert run("harmonic", "--n", 0, "--out-dir", tmp_path) == 0
    data = load_csv(tmp_path / "harmonic_n0.csv")
    assert data["alpha_star"] == 0.0
    assert np.all(data["Q"] == 0.0) and np.all(data["Qprime"] == 0.0)
    assert (tmp_path / "harmonic_n0.dat").exists()


def test_harmonic_manifest_hashes(tmp_path):
    assert run("harmonic", "--n", 1, "--out-dir", tmp_path) == 0
    out = manifest_entries(tmp_path / "harmonic_n1_manifest.txt")
    assert set(out) == {"harmonic_n1.csv", "harmonic_n1.dat", "harmonic_n1_summary.txt"}
    for name, digest in out.items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest
    data = load_csv(tmp_path / "harmonic_n1.csv")
    assert data["alpha_star"] == pytest.approx(1.7971492931605, abs=1e-10)


# ---------------------------------------------------------------- spectral

def test_spectral_without_map_explains(tmp_path, capsys):
    assert run("spectral", "--n", 1, "--out-dir", tmp_path) == 2
    err = capsys.readouterr().err
    assert "harmonic --n 1" in err and "first" in err


def test_spectral_rejects_tampered_map(tmp_path, capsys):
    assert run("harmonic", "--n", 1, "--out-dir", tmp_path) == 0
    p = tmp_path / "harmonic_n1.csv"
    lines = p.read_text().splitlines()
    lines[1] = lines[1].replace("alpha_star=1.79", "alpha_star=1.80")
    p.write_text("\n".join(lines) + "\n")
    assert run("spectral", "--n", 1, "--quick", "--out-dir", tmp_path) == 2
    assert "disagrees" in capsys.readouterr().err


def test_spectral_zero_matches_golden(tmp_path):
    assert run("spectral", "--zero", "--quick", "--out-dir", tmp_path) == 0
    got = read_spectral_table(tmp_path / "spectral_zero.csv")
    ref = read_spectral_table(GOLDEN / "spectral_zero.csv")
    np.testing.assert_array_equal(got["lambda"], ref["lambda"])
    for key in ("W", "omega1", "omega2"):
        np.testing.assert_allclose(got[key], ref[key], rtol=1e-12, atol=1e-18)
    audit = read_table(tmp_path / "spectral_zero_plancherel.csv", "plancherel")
    assert audit["plancherel_defect"].max() < 1e-6
    assert not (tmp_path / "spectral_zero_resonance.txt").exists()


def test_spectral_linearized_outputs(tmp_path):
    assert run("harmonic", "--n", 1, "--out-dir", tmp_path) == 0
    assert run("spectral", "--n", 1, "--quick", "--out-dir", tmp_path) == 0
    text = (tmp_path / "spectral_n1_resonance.txt").read_text()
    assert "negative" in text.lower()
    man = tmp_path / "spectral_n1_manifest.txt"
    assert "harmonic_n1.csv" in manifest_entries(man, "inputs")
    assert "harmonic_n1.csv" not in manifest_entries(man)
    table = read_spectral_table(tmp_path / "spectral_n1.csv")
    assert np.all(table["omega1"] > 0) and np.all(table["omega2"] > 0)


# ---------------------------------------------------------------- evolve / resolve

def test_evolve_requires_config(capsys):
    assert run("evolve") == 2
    assert "--config" in capsys.readouterr().err


def test_static_config_gives_flat_diagnostics(tmp_path):
    cfg = write(tmp_path, "static.cfg", STATIC)
    out = tmp_path / "s"
    assert run("evolve", "--config", cfg, "--out-dir", out) == 0
    en = read_table(out / "evolve_energy.csv", "energy")
    assert en["drift"].max() < 1e-6
    assert run("resolve", "--config", out / "evolve_manifest.txt", "--out-dir", out) == 0
    le = read_table(out / "resolve_local_energy.csv", "local-energy")
    assert le["energy"].max() < 1e-6          # nothing to radiate
    assert "FAIL local_energy_decay_factor" in (out / "resolve_report.txt").read_text()


def test_bump_config_gives_resolution_report(tmp_path):
    cfg = write(tmp_path, "bump.cfg", BUMP)
    out = tmp_path / "b"
    assert run("evolve", "--config", cfg, "--out-dir", out) == 0
    assert run("resolve", "--config", out / "evolve_manifest.txt", "--out-dir", out) == 0
    report = (out / "resolve_report.txt").read_text().splitlines()
    assert report[0] == "# wormhole-lab resolution v1"
    assert all(line.startswith("PASS") for line in report[1:])
    rad = read_table(out / "resolve_radiation.csv", "radiation")
    np.testing.assert_allclose(np.unique(rad["T_match"]), [20.0, 30.0], rtol=1e-12)


def test_resolve_without_series_explains(tmp_path, capsys):
    cfg = write(tmp_path, "bump.cfg", BUMP)
    assert run("resolve", "--config", cfg, "--out-dir", tmp_path) == 2
    assert "run the evolve command" in capsys.readouterr().err


def test_resolve_failure_writes_nothing(tmp_path, capsys):
    cfg = write(tmp_path, "c.cfg", BUMP.replace("L = 60", "L = 30").replace("T = 40", "T = 20"))
    assert run("evolve", "--config", cfg, "--out-dir", tmp_path) == 0
    before = set(tmp_path.iterdir())
    assert run("resolve", "--config", cfg, "--out-dir", tmp_path) == 2
    assert "enlarge L" in capsys.readouterr().err
    assert set(tmp_path.iterdir()) == before


def test_manifest_rerun_is_bit_identical(tmp_path):
    cfg = write(tmp_path, "bump.cfg", BUMP.replace("degree = 1", "degree = 1\nseed = 5"))
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("evolve", "--config", cfg, "--out-dir", a) == 0
    assert run("evolve", "--config", a / "evolve_manifest.txt", "--out-dir", b) == 0
    ma, mb = manifest_entries(a / "evolve_manifest.txt"), manifest_entries(b / "evolve_manifest.txt")
    assert ma == mb
    for name in ma:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_every_output_in_exactly_one_manifest(tmp_path):
    cfg = write(tmp_path, "bump.cfg", BUMP)
    assert run("harmonic", "--n", 0, "--out-dir", tmp_path) == 0
    assert run("spectral", "--zero", "--quick", "--out-dir", tmp_path) == 0
    assert run("evolve", "--config", cfg, "--out-dir", tmp_path) == 0
    assert run("resolve", "--config", tmp_path / "evolve_manifest.txt", "--out-dir", tmp_path) == 0
    manifests = sorted(tmp_path.glob("*_manifest.txt"))
    owners = {}
    for m in manifests:
        for name in manifest_entries(m):
            owners.setdefault(name, []).append(m.name)
    produced = {p.name for p in tmp_path.iterdir()} - {m.name for m in manifests} - {"bump.cfg"}
    assert produced == set(owners)
    assert all(len(v) == 1 for v in owners.values())


# ---------------------------------------------------------------- dispersive

def test_dispersive_exponent_file(tmp_path):
    assert run("dispersive", "--dim", 3, "--j", -1, "--quick", "--out-dir", tmp_path) == 0
    lines = (tmp_path / "dispersive_d3_j-1_exponent.txt").read_text().splitlines()
    vals = dict(line.split(" = ", 1) for line in lines[1:])
    assert abs(float(vals["exponent"]) - 1.5) <= 0.2
    assert float(vals["expected"]) == 1.5
    assert float(vals["decades"]) >= 0.5 - 1e-9
    table = read_table(tmp_path / "dispersive_d3_j-1.csv", "dispersive")
    assert table["_meta"] == {"d": "3", "j": "-1"}


def test_dispersive_bad_dimension(tmp_path, capsys):
    assert run("dispersive", "--dim", 1, "--out-dir", tmp_path) == 2
    assert "at least 2" in capsys.readouterr().err


# ---------------------------------------------------------------- tables

def test_table_reader_rejects_unknown_version(tmp_path):
    write_table(tmp_path / "t", "energy", {"t": [0.0, 1.0], "energy": [1.0, 1.0]})
    p = tmp_path / "t.csv"
    assert read_table(p, "energy")["energy"].tolist() == [1.0, 1.0]
    p.write_text(p.read_text().replace(" v1", " v2", 1))
    with pytest.raises(ValueError, match="line 1"):
        read_table(p, "energy")


def test_table_reader_reports_ragged_line(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("# wormhole-lab energy v1\nt,energy\n0,1\n1\n")
    with pytest.raises(ValueError, match="line 4"):
        read_table(p, "energy")


# ---------------------------------------------------------------- accept

def test_accept_unknown_criterion(tmp_path, capsys):
    assert run("accept", "--criteria", "11", "--out-dir", tmp_path) == 2
    assert "unknown criteria" in capsys.readouterr().err


def test_corrupted_harmonic_csv_fails_criterion_one(tmp_path, capsys):
    assert run("harmonic", "--n", 1, "--out-dir", tmp_path) == 0
    p = tmp_path / "harmonic_n1.csv"
    lines = p.read_text().splitlines()
    lines[500] = lines[500].split(",")[0] + ",99,1"
    p.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert run("accept", "--criteria", 1, "--silent", "--out-dir", tmp_path) == 1
    out = capsys.readouterr().out
    assert "FAIL  criterion 1: harmonic maps" in out
    assert "stored_map_n1" in out


def test_accept_quick_uses_short_window(tmp_path, capsys):
    assert run("accept", "--criteria", 6, "--quick", "--silent", "--out-dir", tmp_path) == 0
    assert "PASS  criterion 6" in capsys.readouterr().out
    echo = cli.resolve_section(cli.read_config(tmp_path / "accept_manifest.txt", "accept"), "accept", {})
    assert echo["quick"] is True and echo["criteria"] == (6,)
    table = read_table(tmp_path / "accept_dispersive_d3.csv", "dispersive")
    assert table["t"].size > 0
