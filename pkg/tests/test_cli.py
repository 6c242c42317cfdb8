import json
import os
import subprocess
import sys

import numpy as np
import pytest

from noisyplr.cli import main, parse_args
from noisyplr.experiments import SyntheticSpec, gen_synthetic
from noisyplr.io import read_csv, write_libsvm
from noisyplr.labels import read_counts
from noisyplr.model import Coefficients

FAST = ["--grid-size", "5", "--max-iter", "500"]


def run(tmp_path, *argv):
    out = tmp_path / "out"
    code = main([*argv, "--out", str(out)])
    return code, out


def artifacts(out):
    return sorted(os.listdir(out))


@pytest.fixture
def svm_file(tmp_path):
    X, y = gen_synthetic(SyntheticSpec(300, seed=1))
    path = tmp_path / "data.svm"
    write_libsvm(path, X, y)
    return path


def test_fit_synthetic(tmp_path):
    code, out = run(tmp_path, "fit", "--n", "300", "--noise", "dm", "--m", "5", "--alpha0", "10",
                    *FAST)
    assert code == 0
    assert {"coefficients.json", "trace.csv", "trace.png", "path.csv",
            "manifest.json"} <= set(artifacts(out))
    coef = Coefficients.from_json((out / "coefficients.json").read_text())
    assert len(coef) == 9 and "lambda" in coef.meta and "FP" in coef.meta
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "fit" and man["seeds"] == {"seed": 0}
    assert man["config"]["m"] == 5 and man["config"]["noise"] == "dm"


def test_fit_libsvm_with_intercept_and_shards(tmp_path, svm_file):
    code, out = run(tmp_path, "fit", "--data", str(svm_file), "--intercept", "--G", "3",
                    "--noise", "multinomial", "--m", "3", *FAST)
    assert code == 0
    coef = Coefficients.from_json((out / "coefficients.json").read_text())
    assert len(coef) == 10 and coef.meta["G"] == 3
    assert read_csv(out / "trace.csv")[0]["G"] == "3"


def test_fit_fixed_lambda(tmp_path):
    code, out = run(tmp_path, "fit", "--n", "200", "--lambda", "5.0")
    assert code == 0 and "path.csv" not in artifacts(out)
    assert Coefficients.from_json((out / "coefficients.json").read_text()).meta["lambda"] == 5.0


def test_fit_is_reproducible(tmp_path):
    a = main(["fit", "--n", "200", *FAST, "--seed", "3", "--out", str(tmp_path / "a")])
    b = main(["fit", "--n", "200", *FAST, "--seed", "3", "--out", str(tmp_path / "b")])
    assert a == b == 0
    assert (tmp_path / "a/coefficients.json").read_text() == \
        (tmp_path / "b/coefficients.json").read_text()


def test_labels(tmp_path):
    code, out = run(tmp_path, "labels", "--n", "500", "--noise", "dm", "--m", "4",
                    "--alpha0", "2")
    assert code == 0
    S = read_counts(out / "counts.txt")
    assert S.m == 4 and len(S) == 500
    hist = read_csv(out / "counts_hist.csv")
    assert sum(int(r["rows"]) for r in hist) == 500
    assert (out / "counts_hist.png").exists()


def test_labels_with_coefficients_file(tmp_path):
    beta = tmp_path / "b.json"
    beta.write_text(Coefficients(np.zeros(3)).to_json())
    code, _ = run(tmp_path, "labels", "--n", "50", "--noise", "dm", "--m", "2",
                  "--beta", str(beta))
    assert code == 2  # synthetic data has d = 9


def test_tune(tmp_path):
    code, out = run(tmp_path, "tune", "--n", "300", *FAST)
    assert code == 0
    rows = read_csv(out / "path.csv")
    assert len(rows) == 5 and list(rows[0]) == ["lambda", "score", "support_size", "converged"]
    assert (out / "path.png").exists()
    assert len(json.loads((out / "manifest.json").read_text())["lambdas"]) == 5


def test_are(tmp_path):
    code, out = run(tmp_path, "are", "--m", "3", "--alpha0", "1", "--n", "200", "--reps", "2",
                    "--n-eval", "1000", *FAST)
    assert code == 0
    (row,) = read_csv(out / "are.csv")
    assert float(row["theoretical"]) == pytest.approx(1.5)
    assert len(read_csv(out / "are_reps.csv")) == 2 and (out / "are.png").exists()


def test_table1(tmp_path):
    code, out = run(tmp_path, "table1", "--m", "1,2", "--alpha0", "1", "--n", "200",
                    "--reps", "2", "--n-eval", "1000", *FAST)
    assert code == 0
    assert len(read_csv(out / "table1.csv")) == 2 and (out / "table1.png").exists()


def test_table4(tmp_path, svm_file):
    code, out = run(tmp_path, "table4", "--data", str(svm_file), "--n-train", "200",
                    "--m", "5", "--alpha0", "1,10", "--reps", "2", *FAST)
    assert code == 0
    assert len(read_csv(out / "table4.csv")) == 2 and (out / "table4.png").exists()


def test_bench_parallel(tmp_path):
    code, out = run(tmp_path, "bench-parallel", "--n", "1000", "--G", "1,2,4", "--reps", "1",
                    *FAST)
    assert code == 0
    rows = read_csv(out / "bench.csv")
    assert [r["G"] for r in rows] == ["1", "2", "4"]
    assert len({r["Ite"] for r in rows}) == 1 and len({r["FP"] for r in rows}) == 1
    assert (out / "bench.png").exists()


def test_curves(tmp_path):
    code, out = run(tmp_path, "curves", "--vary", "alpha0", "--values", "1,10", "--fixed", "3",
                    "--n", "200", "--reps", "1", *FAST)
    assert code == 0
    rows = read_csv(out / "curves.csv")
    assert [(r["m"], r["alpha0"]) for r in rows] == [("3", "1.0"), ("3", "10.0")]


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"m": 5, "alpha0": 2, "reps": 7, "grid-size": 4}))
    args = parse_args(["are", "--config", str(cfg), "--reps", "3"])
    assert (args.m, args.alpha0, args.reps, args.grid_size) == (5, 2.0, 3, 4)


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(SystemExit) as exc:
        parse_args(["fit", "--config", str(cfg)])
    assert exc.value.code == 2 and "bogus" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["are", "--m", "5"],
    ["table4"],
    ["fit", "--no-such-flag"],
    ["nothing"],
    [],
])
def test_usage_errors_exit_two(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_missing_data_file_exits_two(tmp_path):
    code, _ = run(tmp_path, "fit", "--data", str(tmp_path / "nope.svm"))
    assert code == 2
    code, _ = run(tmp_path, "fit", "--n", "100", "--m", "3")  # truth noise needs m = 1
    assert code == 2


def test_output_dir_from_env(tmp_path):
    env = {**os.environ, "NOISYPLR_OUTPUT_DIR": str(tmp_path / "envout")}
    res = subprocess.run([sys.executable, "-m", "noisyplr.cli", "labels", "--n", "20"],
                         env=env, capture_output=True, text=True, cwd=tmp_path)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "envout" / "counts.txt").exists()
