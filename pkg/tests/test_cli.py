"""CLI behavior: the distribution/config parsers, exit codes for every
subcommand, flag-over-file precedence, and the module entry point."""

import json
import subprocess
import sys
import warnings

import numpy as np
import pytest

import diluteu as d
from diluteu.cli import load_config_file, main, parse_dist


def run_main(argv):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return main(argv)


# ---------------------------------------------------------------- parse_dist


def test_parse_dist_builtin_names():
    r = parse_dist("rademacher")
    assert r.kind == "rademacher"
    assert r.support == (-1.0, 1.0)

    assert parse_dist("normal").kind == "normal"
    assert parse_dist("standard_normal").kind == "normal"

    u = parse_dist("uniform:-2,2")
    assert u.kind == "uniform"
    assert u.variance == pytest.approx(4.0 / 3.0)


def test_parse_dist_inline_table_with_fractions():
    t = parse_dist("table:-1=5/6,5=1/6")
    assert t.support == (-1.0, 5.0)
    assert t.probs == pytest.approx((5.0 / 6.0, 1.0 / 6.0))
    assert t.sign_mean == pytest.approx(-2.0 / 3.0)
    assert abs(t.mean) < 1e-15


def test_parse_dist_table_file(tmp_path):
    path = tmp_path / "law.txt"
    path.write_text("# two-point fair law\n-1 0.5\n1 0.5\n")
    t = parse_dist("table:%s" % path)
    assert t.support == (-1.0, 1.0)
    assert t.probs == pytest.approx((0.5, 0.5))


def test_parse_dist_rejects_malformed():
    with pytest.raises(d.ConfigurationError):
        parse_dist("uniform:3")
    with pytest.raises(d.ConfigurationError):
        parse_dist("table:-1=0.5,1")
    with pytest.raises(d.ConfigurationError):
        parse_dist("triangle")


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# experiment setup\n"
        "kernel = product\n"
        "p=0.5  # overridden below\n"
        "p=1\n"
        "\n"
        "R=100\n"
    )
    opts = load_config_file(str(path))
    assert opts == {"kernel": "product", "p": "1", "R": "100"}

    bad = tmp_path / "bad.cfg"
    bad.write_text("kernel product\n")
    with pytest.raises(d.ConfigurationError):
        load_config_file(str(bad))


# ------------------------------------------------------------------ moments


def test_moments_closed_form_stdout_csv(capsys):
    code = run_main(
        ["moments", "--kernel", "product", "--dist", "normal", "--n", "10", "--p", "1"]
    )
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert "seed=6" in lines[0]
    assert lines[1] == "n,p,beta2,gamma2,theta2,var_u_exact,provenance"
    fields = lines[2].split(",")
    assert fields[0] == "10"
    assert float(fields[2]) == pytest.approx(1.0)  # beta2 = p E[h^2]
    assert float(fields[4]) == 0.5  # theta2, exact for this pair
    assert fields[6] == "closed_form"


def test_moments_mc_provenance(capsys):
    code = run_main(
        [
            "moments", "--method", "mc", "--m", "500",
            "--kernel", "sign", "--dist", "rademacher",
            "--n", "40", "--p", "0.5",
        ]
    )
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    row = lines[2].split(",")
    assert row[6] == "mc"
    assert float(row[2]) == pytest.approx(0.5, abs=0.15)  # beta2 near p


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "m.cfg"
    cfg.write_text(
        "kernel=product\n"
        "dist=normal\n"
        "n_grid=8\n"
        "p=0.5\n"
        "p=1   # later key wins\n"
        "seed=11\n"
        "format=json\n"
    )
    assert run_main(["moments", "--config", str(cfg)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["seed"] == 11
    assert payload["reports"][0]["n"] == 8
    assert float(payload["reports"][0]["p"]) == 1.0

    assert run_main(["moments", "--config", str(cfg), "--seed", "5"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["seed"] == 5  # flag beats file


# ----------------------------------------------------------------- simulate


def test_simulate_writes_sample_csv(tmp_path):
    out = tmp_path / "samples.csv"
    code = run_main(
        [
            "simulate", "--kernel", "sign", "--dist", "rademacher",
            "--n", "30", "--p", "0.5", "--R", "150", "--out", str(out),
        ]
    )
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "sample"
    vals = np.array([float(v) for v in lines[2:]])
    assert vals.shape == (150,)
    assert np.all(np.isfinite(vals))


# ----------------------------------------------------------------- clt-test


def test_clt_test_passes_for_linear_normal_case(capsys):
    # additive kernel on normal rows: the statistic is exactly Gaussian,
    # so only KS sampling noise is left and the test must pass.
    code = run_main(
        [
            "clt-test", "--kernel", "additive", "--dist", "normal",
            "--n", "30", "--p", "1", "--R", "1200",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    assert ",pass," in out


def test_clt_test_fails_for_degenerate_case(capsys):
    # undiluted product kernel: the limit is a shifted square, not normal
    code = run_main(
        [
            "clt-test", "--kernel", "product", "--dist", "normal",
            "--n", "100", "--p", "1", "--R", "400",
        ]
    )
    out = capsys.readouterr().out
    assert code == 1
    assert ",fail," in out


# ------------------------------------------------------------ counterexample


def test_counterexample_small_n_exits_1(capsys):
    # at n=100 the square-law fit is still too loose for the KS gate, and
    # the command says so on stderr while still emitting both reports
    code = run_main(["counterexample", "--n", "100", "--R", "400"])
    captured = capsys.readouterr()
    assert code == 1
    assert "counterexample expectations not met" in captured.err
    assert "normal," in captured.out
    assert "chi1_shifted," in captured.out
    # far from normal even at this size
    ks_normal = float(captured.out.strip().splitlines()[2].split(",")[3])
    assert ks_normal > 0.15


# --------------------------------------------------------------- conditions


CONDITIONS_C3 = [
    "conditions", "--kernel", "sign", "--dist", "rademacher",
    "--p", "0.5", "--n", "10,50", "--eps", "0.2",
    "--conditions", "C3", "--m", "128",
]
# sign kernel on fair signs has a constant diagonal, so the C3 integrand
# is deterministic: exactly 2.0 at n=10 and 0.0 at n=50 for eps=0.2.


def test_conditions_expect_match_exits_0(capsys):
    code = run_main(CONDITIONS_C3 + ["--expect", "C3=decreasing-toward-0"])
    out = capsys.readouterr().out
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[1] == "condition_id,n,eps,estimate,se,verdict"
    assert any(line.startswith("C3,10,0.2,2.0,0.0") for line in lines)
    assert any(line.startswith("C3,50,0.2,0.0,0.0") for line in lines)


def test_conditions_expect_mismatch_exits_1(capsys):
    code = run_main(CONDITIONS_C3 + ["--expect", "C3=stagnant"])
    captured = capsys.readouterr()
    assert code == 1
    assert "verdict mismatch for C3" in captured.err


def test_conditions_expect_from_config_file(tmp_path, capsys):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("expect.C3=stagnant\n")
    assert run_main(CONDITIONS_C3 + ["--config", str(cfg)]) == 1
    capsys.readouterr()
    # an explicit flag overrides the file entry for the same condition
    code = run_main(
        CONDITIONS_C3
        + ["--config", str(cfg), "--expect", "C3=decreasing-toward-0"]
    )
    capsys.readouterr()
    assert code == 0


# ------------------------------------------------------------------- oracle


def test_oracle_json_payload(capsys):
    code = run_main(
        ["oracle", "--kernel", "sign", "--dist", "rademacher", "--n", "4", "--p", "0.5"]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert float(payload["e_h2"]) == 1.0
    assert float(payload["e_g2"]) == 0.0
    assert float(payload["e_htilde2"]) == 1.0
    assert float(payload["moment_set"]["theta2"]) == 0.25
    products = payload["products"]
    assert float(products["Phi(0,1) Phi(0,1)"]) == 0.5  # p * E[h^2]
    assert "PhiTilde(0,1) PhiTilde(0,1)" in products


def test_oracle_too_large_exits_3(capsys):
    code = run_main(
        ["oracle", "--kernel", "sign", "--dist", "rademacher", "--n", "12", "--p", "0.5"]
    )
    assert code == 3
    assert "resource budget" in capsys.readouterr().err


# -------------------------------------------------------------- exit code 2


@pytest.mark.parametrize(
    "argv",
    [
        ["moments", "--kernel", "wavelet", "--dist", "normal", "--n", "8", "--p", "1"],
        ["moments", "--kernel", "sign", "--dist", "triangle", "--n", "8", "--p", "1"],
        ["simulate", "--n", "10", "--p", "0.05", "--R", "50"],  # n*p < 1
        CONDITIONS_C3 + ["--expect", "C3"],  # missing =verdict
    ],
)
def test_configuration_errors_exit_2(argv, capsys):
    code = run_main(argv)
    captured = capsys.readouterr()
    assert code == 2
    assert "configuration error" in captured.err


# -------------------------------------------------------------- entry point


def test_module_entry_point():
    proc = subprocess.run(
        [
            sys.executable, "-m", "diluteu", "moments",
            "--kernel", "product", "--dist", "normal", "--n", "6", "--p", "1",
        ],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert "theta2" in proc.stdout
    row = proc.stdout.strip().splitlines()[2].split(",")
    assert float(row[4]) == 0.5
