import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from planefit.cli import main

STARS_CSV = Path(__file__).parent / "data" / "stars.csv"


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_fit_stars_sum_l1(tmp_path, capsys):
    out_path = tmp_path / "fit.json"
    code, _, _ = run_cli([
        "fit", "--input", str(STARS_CSV), "--criterion", "SUM", "--residual", "l1",
        "--output", str(out_path),
    ], capsys)
    assert code == 0
    record = json.loads(out_path.read_text())
    assert record["schema"] == "1"
    assert record["gcod"] == pytest.approx(0.6505853, abs=1e-6)
    slope = -record["beta_regression"][1] / record["beta_regression"][2]
    assert slope == pytest.approx(7.0, abs=1e-6)


def test_fit_collinear_gcod_one(tmp_path, capsys):
    csv = tmp_path / "line.csv"
    x = np.arange(3.0)
    csv.write_text("x1,y\n" + "\n".join(f"{a},{2 * a + 1}" for a in x) + "\n")
    code, out, _ = run_cli([
        "fit", "--input", str(csv), "--criterion", "SUM", "--residual", "vertical",
    ], capsys)
    assert code == 0
    record = json.loads(out)
    assert record["gcod"] == pytest.approx(1.0, abs=1e-9)


def test_malformed_row_reports_line(tmp_path, capsys):
    csv = tmp_path / "bad.csv"
    csv.write_text("x1,y\na,b\n")
    code, _, err = run_cli([
        "fit", "--input", str(csv), "--criterion", "SUM", "--residual", "l1",
    ], capsys)
    assert code == 2
    assert "line 2" in err


def test_field_count_mismatch(tmp_path, capsys):
    csv = tmp_path / "bad2.csv"
    csv.write_text("x1,y\n1.0,2.0\n3.0\n")
    code, _, err = run_cli([
        "fit", "--input", str(csv), "--criterion", "SUM", "--residual", "vertical",
    ], capsys)
    assert code == 2
    assert "line 3" in err


def test_unknown_residual_is_input_error(capsys):
    code, _, err = run_cli([
        "fit", "--input", str(STARS_CSV), "--criterion", "SUM", "--residual", "l7",
    ], capsys)
    assert code == 2
    assert "residual" in err


def test_gen_fit_round_trip(tmp_path, capsys):
    csv = tmp_path / "synthetic.csv"
    code, _, _ = run_cli(["gen", "--n", "40", "--d", "2", "--corruption", "Y",
                          "--seed", "1", "--output", str(csv)], capsys)
    assert code == 0
    header = csv.read_text().splitlines()[0]
    assert header == "x1,y"
    assert len(csv.read_text().splitlines()) == 41
    code, out, _ = run_cli([
        "fit", "--input", str(csv), "--criterion", "LTS", "--param", "0.5",
        "--residual", "vertical", "--multistart", "40",
    ], capsys)
    assert code == 0
    record = json.loads(out)
    slope = record["beta_regression"][1]
    assert slope == pytest.approx(-1.0, abs=0.1)


def test_gen_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli(["gen", "--n", "25", "--d", "3", "--corruption", "X", "--seed", "9",
             "--output", str(a)], capsys)
    run_cli(["gen", "--n", "25", "--d", "3", "--corruption", "X", "--seed", "9",
             "--output", str(b)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_dependent_col_reordering(tmp_path, capsys):
    csv = tmp_path / "cols.csv"
    # response stored first; --dependent-col moves it to the last slot
    csv.write_text("y,x1\n1.0,0.0\n3.0,1.0\n5.0,2.0\n")
    code, out, _ = run_cli([
        "fit", "--input", str(csv), "--criterion", "SUM", "--residual", "vertical",
        "--dependent-col", "y",
    ], capsys)
    assert code == 0
    record = json.loads(out)
    assert record["beta_regression"][1] == pytest.approx(2.0, abs=1e-9)


def test_verify_round_trip(tmp_path, capsys):
    out_path = tmp_path / "record.json"
    run_cli(["fit", "--input", str(STARS_CSV), "--criterion", "kC", "--param", "35",
             "--residual", "linf", "--output", str(out_path)], capsys)
    code, out, _ = run_cli(["verify", "--record", str(out_path)], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["match"] is True

    # tampering with phi_star must fail verification
    record = json.loads(out_path.read_text())
    record["phi_star"] *= 1.05
    out_path.write_text(json.dumps(record))
    code, out, _ = run_cli(["verify", "--record", str(out_path)], capsys)
    assert code == 1


def test_emit_lp(tmp_path, capsys):
    lp_path = tmp_path / "model.lp"
    code, _, _ = run_cli([
        "fit", "--input", str(STARS_CSV), "--criterion", "MAX", "--residual", "l1",
        "--emit-lp", str(lp_path), "--output", str(tmp_path / "r.json"),
    ], capsys)
    assert code == 0
    text = lp_path.read_text()
    assert text.startswith("Minimize")
    from planefit.lp import parse_lp_file

    model = parse_lp_file(lp_path)
    assert model.n_vars > 47


def test_block_file_symmetry_completion(tmp_path, capsys):
    blockfile = tmp_path / "ball.txt"
    blockfile.write_text("1 0\n0 1\n")  # mirrors added with a warning
    code, out, err = run_cli([
        "fit", "--input", str(STARS_CSV), "--criterion", "SUM",
        "--residual", f"block:{blockfile}",
    ], capsys)
    assert code == 0
    assert "mirrored" in err
    record = json.loads(out)
    assert record["gcod"] == pytest.approx(0.6505853, abs=1e-6)


def test_cv_output_shape(tmp_path, capsys):
    code, out, _ = run_cli([
        "cv", "--input", str(STARS_CSV), "--criterion", "SUM", "--residual", "vertical",
        "--cv", "5", "--seed", "3", "--format", "json",
    ], capsys)
    assert code == 0
    record = json.loads(out)
    stats = record["eps90"]
    assert stats["min"] <= stats["median"] <= stats["max"]
    assert len(stats["folds"]) == 5


def test_cv_deterministic(tmp_path, capsys):
    args = ["cv", "--input", str(STARS_CSV), "--criterion", "SUM",
            "--residual", "l1", "--cv", "4", "--seed", "5"]
    _, out1, _ = run_cli(args, capsys)
    _, out2, _ = run_cli(args, capsys)
    assert out1 == out2


def test_batch_grid_small(tmp_path, capsys):
    csv = tmp_path / "mini.csv"
    run_cli(["gen", "--n", "12", "--d", "2", "--corruption", "Y", "--seed", "2",
             "--output", str(csv)], capsys)
    out_path = tmp_path / "grid.csv"
    code, _, _ = run_cli(["batch", "--input", str(csv), "--seed", "1",
                          "--N", "16", "--output", str(out_path)], capsys)
    assert code == 0
    lines = out_path.read_text().splitlines()
    assert len(lines) == 43  # header + 7 criteria x 6 residuals
    assert lines[0].startswith("criterion,residual,")
    # no cell errors on clean input
    assert all(ln.endswith(",") or ln.split(",")[-1] == "" for ln in lines[1:])


def test_batch_deterministic(tmp_path, capsys):
    csv = tmp_path / "mini.csv"
    run_cli(["gen", "--n", "10", "--d", "2", "--corruption", "X", "--seed", "4",
             "--output", str(csv)], capsys)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli(["batch", "--input", str(csv), "--seed", "6", "--N", "8",
             "--output", str(a)], capsys)
    run_cli(["batch", "--input", str(csv), "--seed", "6", "--N", "8",
             "--output", str(b)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_csv_round_trip_bit_exact(tmp_path, capsys):
    from planefit.cli import read_csv_dataset
    from planefit.evaluation import synthetic_generate

    csv = tmp_path / "exact.csv"
    run_cli(["gen", "--n", "35", "--d", "3", "--corruption", "X", "--seed", "13",
             "--output", str(csv)], capsys)
    data, _ = read_csv_dataset(str(csv))
    want = synthetic_generate(35, 3, "X", seed=13)
    assert np.array_equal(data.matrix, want.matrix)


def test_tau_flag_equivalent_to_spec_string(tmp_path, capsys):
    args_colon = ["fit", "--input", str(STARS_CSV), "--criterion", "SUM",
                  "--residual", "ltau:3/2", "--N", "16"]
    args_flag = ["fit", "--input", str(STARS_CSV), "--criterion", "SUM",
                 "--residual", "ltau", "--tau", "3/2", "--N", "16"]
    _, out1, _ = run_cli(args_colon, capsys)
    _, out2, _ = run_cli(args_flag, capsys)
    a, b = json.loads(out1), json.loads(out2)
    assert a["phi_star"] == b["phi_star"]


def test_strip_norm_override(capsys):
    base = ["fit", "--input", str(STARS_CSV), "--criterion", "SUM",
            "--residual", "l1", "--strip-eps", "0.3"]
    _, out1, _ = run_cli(base, capsys)
    _, out2, _ = run_cli(base + ["--strip-norm", "vertical"], capsys)
    a, b = json.loads(out1), json.loads(out2)
    assert a["phi_star"] == b["phi_star"]
    assert a["strip"]["eps90"] != b["strip"]["eps90"]


def test_console_script_entry_point():
    exe = shutil.which("planefit")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run([exe, "gen", "--n", "5", "--d", "2", "--corruption", "Y",
                           "--seed", "0"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("x1,y")
