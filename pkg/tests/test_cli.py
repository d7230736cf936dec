import json
import subprocess

import pytest

from hcgb import cli

TRIANGLE = "0 1\n1 2\n0 2\n"


def run_cli(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(argv, capsys):
    code, out, err = run_cli(argv, capsys)
    assert out, err
    return code, json.loads(out)


def test_check_preset_passes(capsys):
    code, rep = run_json(["check", "--preset", "heisenberg"], capsys)
    assert code == 0
    assert rep["schema"] == 1 and rep["command"] == "check"
    assert rep["seed"] == 0 and "timestamp" in rep
    assert rep["passes"] and rep["symmetry"]["passes"]
    assert max(rep["identities"]["residuals"].values()) < 1e-12
    assert rep["torsion"] == {"rank": 1, "m": 1, "surjective": True}


def test_check_perturbed_fails(capsys):
    code, rep = run_json(
        ["check", "--preset", "heisenberg", "--perturb", "T_cov_h=0.1"], capsys)
    assert code == 1
    assert not rep["passes"] and not rep["symmetry"]["passes"]
    assert rep["symmetry"]["residual"] >= 0.1 - 1e-12


def test_check_flat_torus_not_bracket_generating(capsys):
    # identities hold but the torsion map cannot reach the vertical space
    code, rep = run_json(["check", "--preset", "flat-torus-product"], capsys)
    assert code == 1
    assert rep["symmetry"]["passes"] and rep["identities"]["passes"]
    assert rep["torsion"] == {"rank": 0, "m": 2, "surjective": False}


def test_check_epsilon_kappa_interplay(capsys):
    code, rep = run_json(["check", "--preset", "htype-m2", "--kappa", "2"], capsys)
    assert code == 0 and rep["epsilon"] == 0.5
    code, rep = run_json(
        ["check", "--preset", "htype-m2", "--kappa", "2", "--epsilon", "1.0"], capsys)
    assert code == 1
    assert rep["symmetry"]["residual"] >= 1.0 - 1e-12  # kappa/2 at epsilon = 2/kappa


def test_check_model_file(tmp_path, capsys):
    good = tmp_path / "model.toml"
    good.write_text('n = 2\nm = 1\nepsilon = 1.0\nvolume = 1.0\n'
                    'T = [[1, 2, 1, -1.0]]\n')
    code, rep = run_json(["check", "--model", str(good)], capsys)
    assert code == 0 and rep["passes"]

    bad = tmp_path / "bad_antisym.toml"
    bad.write_text('n = 2\nm = 1\nT = [[1, 1, 1, 0.5]]\n')
    code, out, err = run_cli(["check", "--model", str(bad)], capsys)
    assert code == 2 and "error" in err

    broken = tmp_path / "broken.toml"
    broken.write_text("n = [\n")
    code, out, err = run_cli(["check", "--model", str(broken)], capsys)
    assert code == 2

    code, out, err = run_cli(["check", "--model", str(tmp_path / "nope.toml")], capsys)
    assert code == 2


def test_kappa_rejected_for_model_files(tmp_path, capsys):
    good = tmp_path / "model.toml"
    good.write_text('n = 2\nm = 1\nT = [[1, 2, 1, -1.0]]\n')
    code, out, err = run_cli(
        ["check", "--model", str(good), "--kappa", "2"], capsys)
    assert code == 2 and "presets" in err


def test_bad_perturb_argument(capsys):
    code, out, err = run_cli(
        ["check", "--preset", "heisenberg", "--perturb", "T=0.1"], capsys)
    assert code == 2 and "T_cov_h" in err


def test_euler_closed_heisenberg(capsys):
    code, rep = run_json(["euler", "--preset", "heisenberg"], capsys)
    assert code == 0 and rep["mode"] == "closed"
    assert rep["closed"]["parity_shortcut"]
    assert rep["closed"]["chi_rounded"] == 0
    assert rep["mc"] is None and rep["z_score"] is None


def test_euler_both_htype(capsys):
    code, rep = run_json(["euler", "--preset", "htype-m2", "--mode", "both",
                          "--samples", "2048", "--seed", "7"], capsys)
    assert code == 0
    assert abs(rep["closed"]["integrand"] - 0.3101454368233435) < 1e-9
    assert rep["mc"]["samples"] == 2048 and rep["mc"]["seed"] == 7
    assert abs(rep["z_score"]) < 4.0


def test_euler_mc_flat_torus_zero_report(capsys):
    code, rep = run_json(["euler", "--preset", "flat-torus-product",
                          "--mode", "mc", "--samples", "1000"], capsys)
    assert code == 0
    assert rep["mc"]["estimate"] == 0.0 and rep["mc"]["j_const"] is None
    assert rep["mc"]["reason"] == "torsion does not span the vertical space"


def test_euler_error_exit_codes(capsys):
    code, out, err = run_cli(["euler", "--preset", "htype-m2", "--mode", "mc",
                              "--samples", "10"], capsys)
    assert code == 2  # too few samples is an input problem
    code, out, err = run_cli(["euler", "--preset", "htype-m2",
                              "--perturb", "T_cov_h=0.1"], capsys)
    assert code == 1  # symmetry gate failure is a state problem


def test_levy_sweep_and_reference(capsys):
    code, rep = run_json(["levy", "--lambda", "0.5,1", "--samples", "20000",
                          "--seed", "1"], capsys)
    assert code == 0 and len(rep["rows"]) == 2
    row = rep["rows"][1]
    assert abs(row["reference"] - 1.1883951057781212) < 1e-12
    assert row["stderr"] > 0 and abs(row["z"]) < 4.0


def test_levy_lambda_out_of_range(capsys):
    code, out, err = run_cli(["levy", "--lambda", "3.2", "--samples", "20000"], capsys)
    assert code == 2


def test_levy_csv(capsys):
    code, out, err = run_cli(["levy", "--lambda", "0.5,1", "--samples", "20000",
                              "--seed", "1", "--format", "csv"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "lambda,estimate,stderr,reference,z"
    assert len(lines) == 3


def test_density_quick(capsys):
    code, rep = run_json(["density", "--preset", "heisenberg", "--t", "1",
                          "--samples", "10000", "--seed", "2"], capsys)
    assert code == 0
    row = rep["rows"][0]
    assert row["estimate"] > 0 and row["stderr"] > 0
    assert len(row["bandwidth"]) == 3
    assert abs(row["dilation_scaled"] - 4.0 * row["estimate"]) < 1e-12


def test_jconst_heisenberg(capsys):
    code, rep = run_json(["jconst", "--preset", "heisenberg"], capsys)
    assert code == 0 and rep["h_type"]
    assert abs(rep["j_const"] - 0.25) < 1e-8
    assert abs(rep["radial"] - 0.25) < 1e-10


def test_jconst_flat_torus_diverges(capsys):
    code, out, err = run_cli(["jconst", "--preset", "flat-torus-product"], capsys)
    assert code == 1 and "span" in err


def test_ms_triangle(tmp_path, capsys):
    path = tmp_path / "tri.txt"
    path.write_text(TRIANGLE)
    code, rep = run_json(["ms", "--complex", str(path), "--t", "0.1,1,10"], capsys)
    assert code == 0 and rep["chi"] == 0 and rep["counts"] == [3, 3]
    assert len(rep["rows"]) == 3
    assert max(abs(r["supertrace"]) for r in rep["rows"]) < 1e-10


def test_ms_input_errors(tmp_path, capsys):
    code, out, err = run_cli(["ms", "--complex", str(tmp_path / "nope.txt")], capsys)
    assert code == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("0 zero\n")
    code, out, err = run_cli(["ms", "--complex", str(bad)], capsys)
    assert code == 2


def test_worker_independence(capsys):
    argv = ["levy", "--lambda", "1", "--samples", "20000", "--seed", "3"]
    _, rep1 = run_json(argv + ["--workers", "1"], capsys)
    _, rep2 = run_json(argv + ["--workers", "2"], capsys)
    rep1.pop("timestamp"), rep2.pop("timestamp")
    assert json.dumps(rep1, sort_keys=True) == json.dumps(rep2, sort_keys=True)


def test_repeat_run_byte_identical(capsys):
    argv = ["euler", "--preset", "htype-m2", "--mode", "both",
            "--samples", "1024", "--seed", "5"]
    code1, out1, _ = run_cli(argv, capsys)
    code2, out2, _ = run_cli(argv, capsys)
    assert code1 == code2 == 0
    strip = lambda s: "\n".join(l for l in s.splitlines() if "timestamp" not in l)
    assert strip(out1) == strip(out2)


def test_output_file_and_csv_flat_row(tmp_path, capsys):
    target = tmp_path / "report.json"
    code, out, err = run_cli(["check", "--preset", "heisenberg",
                              "--output", str(target)], capsys)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["passes"]

    code, out, err = run_cli(["check", "--preset", "heisenberg",
                              "--format", "csv"], capsys)
    lines = out.strip().splitlines()
    assert len(lines) == 2 and "passes" in lines[0]
    assert "timestamp" not in lines[0]


def test_help_and_missing_command(capsys):
    assert cli.main(["--help"]) == 0
    capsys.readouterr()
    assert cli.main([]) == 2
    capsys.readouterr()
    assert cli.main(["euler"]) == 2  # model source required
    capsys.readouterr()


def test_console_script_installed():
    proc = subprocess.run(["hcgb", "check", "--preset", "heisenberg"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passes"]
