import csv
import json
import subprocess
import sys

import pytest

from metadiag import cli, simulation
from metadiag.data import dataset_to_csv
from metadiag.inference.laplace import LaplaceError


def run(args, capsys=None):
    code = cli.main([str(a) for a in args])
    err = capsys.readouterr().err if capsys is not None else ""
    return code, err


@pytest.fixture(scope="module")
def fit_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert cli.main(["fit", "--data", "telomerase", "--out", str(out)]) == 0
    return out


def test_fit_outputs(fit_dir):
    doc = json.loads((fit_dir / "summary.json").read_text())
    for key in ("fixed_effects", "hyperparameters", "accuracy", "mlik", "timings", "config_echo"):
        assert key in doc
    assert doc["accuracy"]["mean(Se)"]["mean"] == pytest.approx(0.766, abs=0.01)
    assert doc["config_echo"]["prior_cor"] == "pc1"
    assert "timestamp" not in json.dumps(doc["config_echo"])
    with open(fit_dir / "marginals.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["quantity"] for r in rows} >= {"mu", "nu", "Se", "Sp", "var_phi", "var_psi", "cor"}
    assert (fit_dir / "metadata.json").exists()


def test_fit_from_csv_file(tmp_path, telomerase, fit_dir):
    path = tmp_path / "tel.csv"
    path.write_text(dataset_to_csv(telomerase))
    out = tmp_path / "o"
    assert cli.main(["fit", "--data", str(path), "--out", str(out)]) == 0
    a = json.loads((out / "summary.json").read_text())
    b = json.loads((fit_dir / "summary.json").read_text())
    assert a["accuracy"] == b["accuracy"]


def test_fit_identical_seeds_identical_bytes(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["fit", "--data", "telomerase", "--engine", "both", "--mcmc-iters", "4000",
                         "--seed", "3", "--out", str(out)]) == 0
        outs.append(out)
    for fname in ("marginals.csv", "comparison.csv"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


def test_fixed_correlation(tmp_path, capsys):
    out = tmp_path / "fx"
    code, _ = run(["fit", "--data", "telomerase", "--prior-cor", "fixed(rho=-0.2)", "--out", out], capsys)
    assert code == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["hyperparameters"]["cor"] == {"fixed": -0.2}
    with open(out / "marginals.csv") as fh:
        assert "cor" not in {r["quantity"] for r in csv.DictReader(fh)}


@pytest.mark.parametrize("spec, token", [
    ("pc-cor(strategy=1, rho0=-0.2, omega1=0.4, umin=-0.95, alfa1=0.05)", "alfa1"),
    ("pc-kor(rho0=0)", "pc-kor"),
    ("pc-cor(strategy=1, rho0=abc)", "abc"),
])
def test_malformed_prior_names_token(tmp_path, capsys, spec, token):
    code, err = run(["fit", "--data", "telomerase", "--prior-cor", spec, "--out", tmp_path], capsys)
    assert code == 2
    assert token in err


def test_missing_data_file(tmp_path, capsys):
    code, err = run(["fit", "--data", tmp_path / "none.csv", "--out", tmp_path], capsys)
    assert code == 2 and "none.csv" in err


def test_bad_csv(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("study,TP,FP,FN\nA,1,2,3\n")
    code, err = run(["fit", "--data", path, "--out", tmp_path / "o"], capsys)
    assert code == 2 and "TN" in err.upper()


def test_argparse_errors_exit_2(capsys):
    assert run(["fit"], capsys)[0] == 2
    assert run(["nonsense"], capsys)[0] == 2
    assert run(["fit", "--data", "telomerase", "--engine", "gibbs"], capsys)[0] == 2


def test_inference_failure_exit_3(tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise LaplaceError("inner optimisation diverged")
    monkeypatch.setattr(cli, "posterior_marginals", boom)
    code, err = run(["fit", "--data", "telomerase", "--out", tmp_path], capsys)
    assert code == 3 and "diverged" in err
    code, _ = run(["sroc", "--data", "telomerase", "--out", tmp_path / "s"], capsys)
    assert code == 3


def test_priors_command(tmp_path, capsys):
    code, _ = run(["priors", "--prior-cor", "pc-cor(strategy=1, rho0=-0.2, omega1=0.4, umin=-0.95, alpha1=0.05)",
                   "--prior-cor", "pc0", "--prior-cor", "paul", "--out", tmp_path], capsys)
    assert code == 0
    params = json.loads((tmp_path / "prior_parameters.json").read_text())
    pc1 = params["pc-cor(strategy=1, rho0=-0.2, omega1=0.4, umin=-0.95, alpha1=0.05)"]
    assert pc1["omega1"] == 0.4
    assert pc1["P(rho<=rho0)"] == pytest.approx(0.4, abs=1e-6)
    assert pc1["P(rho<=umin)"] == pytest.approx(0.05, abs=1e-6)
    assert {"pc0", "paul", "pcvar", "invgamma"} <= set(params)
    for name in ("cor_prior_density.csv", "cor_priors.svg", "var_prior_density.csv", "var_priors.svg"):
        assert (tmp_path / name).stat().st_size > 0
    svg = (tmp_path / "cor_priors.svg").read_text()
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_priors_bad_spec(tmp_path, capsys):
    code, err = run(["priors", "--prior-var", "pc-var(u=-3, a=0.05)", "--out", tmp_path], capsys)
    assert code == 2 and err


def test_simulate_single(tmp_path, capsys):
    code, _ = run(["simulate", "--scenarios", "1", "--replicates", "1", "--priors", "pc0", "--out", tmp_path],
                  capsys)
    assert code == 0
    with open(tmp_path / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(simulation.PARAMETERS)
    assert {r["scenario"] for r in rows} == {"1"}
    assert all(float(r["coverage95"]) in (0.0, 1.0) for r in rows)
    for kind in ("metrics.csv", "records.csv", "errors.svg", "bias.svg", "mse.svg", "coverage.svg"):
        assert (tmp_path / f"block01_{kind}").exists()


def test_simulate_block_layout(tmp_path, capsys):
    code, _ = run(["simulate", "--scenarios", "1-18", "--replicates", "2", "--priors", "pc0,paul",
                   "--engine", "oracle", "--out", tmp_path], capsys)
    assert code == 0
    for block in ("block01", "block02"):
        assert len(list(tmp_path.glob(f"{block}_*.csv"))) == 2
        assert len(list(tmp_path.glob(f"{block}_*.svg"))) == 4


def test_simulate_deterministic(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["simulate", "--scenarios", "2", "--replicates", "2", "--priors", "pc0",
                         "--seed", "5", "--out", str(tmp_path / name)]) == 0
    for fname in ("metrics.csv", "block01_records.csv"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()


def test_simulate_unknown_scenario(tmp_path, capsys):
    code, err = run(["simulate", "--scenarios", "99", "--out", tmp_path], capsys)
    assert code == 2 and "99" in err
    assert run(["simulate", "--priors", "flat", "--out", tmp_path], capsys)[0] == 2
    assert run(["simulate", "--replicates", "0", "--out", tmp_path], capsys)[0] == 2


def test_simulate_all_failures_exit_3(tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise LaplaceError("no mode")
    monkeypatch.setattr(simulation, "_summaries", boom)
    code, _ = run(["simulate", "--scenarios", "1", "--replicates", "2", "--priors", "pc0", "--out", tmp_path],
                  capsys)
    assert code == 3


def test_sroc_command(tmp_path, capsys):
    code, _ = run(["sroc", "--data", "telomerase", "--out", tmp_path], capsys)
    assert code == 0
    info = json.loads((tmp_path / "sroc_summary.json").read_text())
    assert info["nesting_ok"] is True
    assert info["credible_mass"] == pytest.approx(0.95, abs=0.01)
    assert info["slope_logit"] < 0
    svg = (tmp_path / "sroc.svg").read_text()
    assert svg.count("<circle") >= 10
    assert (tmp_path / "sroc.csv").read_text().startswith("element,index,fpr,tpr")


def test_sroc_bad_level(tmp_path, capsys):
    assert run(["sroc", "--data", "telomerase", "--level", "1.5", "--out", tmp_path], capsys)[0] == 2


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "metadiag.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for cmd in ("fit", "priors", "simulate", "sroc"):
        assert cmd in proc.stdout
