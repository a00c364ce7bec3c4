import json

import pytest

from nbody_index import cli

KEPLER = """
preset = "kepler1d"

[orbit]
h0 = -1.0
"""

SPIRAL = """
[synthetic]
b = 1.0
spectrum = [-0.5]

[orbit]
h0 = 0.0
r0 = 1.0

[index]
horizons = [20, 40, 60, 80]

[galerkin]
tau = [3.0, 6.0, 9.0]
"""


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def kepler_toml(tmp_path):
    p = tmp_path / "orbit.toml"
    p.write_text(KEPLER)
    return p


def test_cc_find_and_classify_round_trip(tmp_path, capsys):
    out = tmp_path / "cc.json"
    assert run("cc", "find", "--preset", "lagrange_equal", "--out", out) == 0
    rec = json.loads(out.read_text())
    assert rec["classification"]["tag"] == "NonSpiralStrict"
    assert len(rec["spectrum"]) == 3
    cc = cli.cc_from_record(rec)
    assert list(cc.spectrum) == [float(x) for x in rec["spectrum"]]
    capsys.readouterr()
    assert run("cc", "classify", "--cc", out) == 0
    assert "NonSpiralStrict" in capsys.readouterr().out
    again = tmp_path / "again.json"
    cli.write_json(cli.cc_to_record(cc), again)
    assert again.read_bytes() == out.read_bytes()


def test_cc_kepler_empty_spectrum(tmp_path):
    out = tmp_path / "cc.json"
    assert run("cc", "find", "--preset", "kepler1d", "--out", out) == 0
    rec = json.loads(out.read_text())
    assert rec["spectrum"] == []
    assert rec["classification"]["tag"] == "NonSpiralStrict"


def test_cc_from_system_files(tmp_path):
    (tmp_path / "sys.toml").write_text("masses = [1.0, 1.0, 1.0]\ndim = 2\n")
    (tmp_path / "guess.json").write_text(json.dumps({"n": 3, "d": 2, "coords": [1, 0, -0.5, 0.8, -0.5, -0.9]}))
    assert run("cc", "find", "--system", tmp_path / "sys.toml", "--guess", tmp_path / "guess.json",
               "--out", tmp_path / "cc.json") == 0


def test_malformed_masses_exit_2(tmp_path, capsys):
    (tmp_path / "sys.toml").write_text('masses = [1.0, "x"\ndim = 2\n')
    (tmp_path / "guess.json").write_text(json.dumps({"coords": [[0, 0], [1, 0]]}))
    assert run("cc", "find", "--system", tmp_path / "sys.toml", "--guess", tmp_path / "guess.json") == 2
    assert "error" in capsys.readouterr().err


def test_verify_kepler(kepler_toml, tmp_path):
    out = tmp_path / "rep.json"
    assert run("verify", "theorem-a", "--orbit", kepler_toml, "--out", out) == 0
    rep = json.loads(out.read_text())
    assert rep["verdict"] == "MorseZero"
    assert rep["mu_total"] == [1, 1, 1, 1]
    assert all(row["pass"] for row in rep["identity_check"])


def test_verify_lagrange_positive_energy(tmp_path):
    p = tmp_path / "orbit.toml"
    p.write_text('preset = "lagrange_equal"\n[orbit]\nh0 = 1.0\n[galerkin]\ntau = [1.0, 2.0, 4.0]\n')
    assert run("verify", "theorem-a", "--orbit", p) == 0


def test_verify_spiral(tmp_path):
    p = tmp_path / "orbit.toml"
    p.write_text(SPIRAL)
    out = tmp_path / "rep.json"
    assert run("verify", "theorem-a", "--orbit", p, "--out", out) == 0
    assert json.loads(out.read_text())["verdict"] == "MorseInfinite"


def test_mismatch_exit_1(tmp_path):
    # horizons too short to see the oscillation: looks stable, contradicting the spiral class
    p = tmp_path / "orbit.toml"
    p.write_text(SPIRAL.replace("[20, 40, 60, 80]", "[0.5, 1.0, 1.5, 2.0]").replace("[3.0, 6.0, 9.0]", "[1.0]"))
    assert run("verify", "theorem-a", "--orbit", p) == 1


def test_inconclusive_exit_2(tmp_path, capsys):
    p = tmp_path / "orbit.toml"
    p.write_text(SPIRAL.replace("[20, 40, 60, 80]", "[4, 6, 8, 10]").replace("[3.0, 6.0, 9.0]", "[1.0]"))
    assert run("verify", "theorem-a", "--orbit", p) == 2
    assert "Inconclusive" in capsys.readouterr().out


def test_index_output_is_deterministic(kepler_toml, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("index", "compute", "--orbit", kepler_toml, "--horizons", "5,10,20,50", "--out", a) == 0
    assert run("index", "compute", "--orbit", kepler_toml, "--horizons", "5,10,20,50", "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert "e+00" in a.read_text()


def test_bad_horizons_exit_2(tmp_path):
    p = tmp_path / "orbit.toml"
    p.write_text(KEPLER + "[index]\nhorizons = []\n")
    assert run("index", "compute", "--orbit", p) == 2
    p.write_text(KEPLER + "[index]\nhorizons = [10, 5]\n")
    assert run("index", "compute", "--orbit", p) == 2


def test_plotdata(kepler_toml, tmp_path):
    rep = tmp_path / "rep.json"
    assert run("index", "compute", "--orbit", kepler_toml, "--out", rep) == 0
    assert run("plotdata", "--report", rep, "--outdir", tmp_path / "plots", "--samples", 51) == 0
    heads = {f.name: f.read_text().splitlines()[0] for f in (tmp_path / "plots").glob("*.csv")}
    assert heads == {
        "reduced_path.csv": "tau,v,r,t_phys,energy_residual",
        "det_c.csv": "tau,c_B1",
        "mu_series.csv": "horizon,mu_total",
    }


def test_plotdata_spiral_series_increases(tmp_path):
    p = tmp_path / "orbit.toml"
    p.write_text(SPIRAL)
    rep = tmp_path / "rep.json"
    assert run("index", "compute", "--orbit", p, "--out", rep) == 0
    assert run("plotdata", "--report", rep, "--outdir", tmp_path / "plots", "--samples", 41) == 0
    rows = (tmp_path / "plots" / "mu_series.csv").read_text().splitlines()[1:]
    mu = [int(r.split(",")[1]) for r in rows]
    assert all(b > a for a, b in zip(mu, mu[1:]))


def test_plotdata_refuses_empty_horizons(tmp_path, capsys):
    rep = tmp_path / "rep.json"
    rep.write_text(json.dumps({"horizons": [], "mu_total": [], "spectrum": [],
                               "orbit": {"h0": -1.0, "r0": 1.0, "v0": 0.0, "b": 1.0}}))
    assert run("plotdata", "--report", rep, "--outdir", tmp_path / "p") == 2
    assert "empty horizons" in capsys.readouterr().err
    assert run("plotdata", "--report", tmp_path / "missing.json", "--outdir", tmp_path / "p") == 1


def test_sweep(tmp_path):
    out = tmp_path / "sweep.json"
    assert run("sweep", "--family", "collinear3", "--grid", "0.5:2:3", "--out", out) == 0
    rows = json.loads(out.read_text())["rows"]
    assert len(rows) == 3 and all(r["converged"] for r in rows)
    assert run("sweep", "--family", "nope", "--grid", "1") == 2
