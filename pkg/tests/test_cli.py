import json

import numpy as np
import pytest

from kuht.cli import InputError, RunConfig, load_csv, main, parse_args


@pytest.fixture
def data(tmp_path):
    rng = np.random.default_rng(0)
    paths = {}
    for name, arr in {"a": rng.normal(size=(40, 2)), "b": rng.normal(1, 1, size=(40, 2)),
                      "y": rng.normal(size=(60, 1)),
                      "z": np.r_[rng.normal(size=(60, 1)), rng.normal(4, 1, size=(60, 1))]}.items():
        p = tmp_path / f"{name}.csv"
        np.savetxt(p, arr, delimiter=",")
        paths[name] = str(p)
    return paths


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_defaults(data):
    cfg = parse_args(["two-sample", "--x", data["a"], "--y", data["b"]])
    assert isinstance(cfg, RunConfig)
    assert cfg.alpha == 0.05 and cfg.kernel == "median" and cfg.threshold == "min:B=500"
    assert cfg.seed == 0


def test_kernel_flag_round_trip(data):
    cfg = parse_args(["two-sample", "--x", data["a"], "--y", data["b"], "--kernel", "imq:c=1,eta=-0.5"])
    assert cfg.kernel == "imq:c=1.0,eta=-0.5"


def test_two_sample_report(data, capsys):
    code, out, _ = run(["two-sample", "--x", data["a"], "--y", data["b"]], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == 1
    assert doc["decision"] in ("accept_h0", "reject_h0")
    assert doc["details"]["kernel"].startswith("gaussian:gamma=")
    assert doc["config"]["threshold"] == "min:B=500"


def test_accept_is_exit_zero(data, capsys):
    code, out, _ = run(["two-sample", "--x", data["a"], "--y", data["a"]], capsys)
    assert code == 0
    assert '"decision": "accept_h0"' in out


@pytest.mark.parametrize("argv", [
    ["one-sample-mmd", "--target", "gauss:d=1"],
    ["one-sample-draw", "--n-draws", "300"],
    ["ksd", "--kernel", "gaussian:gamma=2"],
    ["ksd", "--variant", "u", "--hp", "1"],
])
def test_one_sample_commands(data, capsys, argv):
    code, out, _ = run(argv + ["--y", data["y"]], capsys)
    assert code == 0
    assert json.loads(out)["decision"] in ("accept_h0", "reject_h0")


def test_changepoint_command(data, capsys):
    code, out, _ = run(["changepoint", "--z", data["z"], "--kernel", "gaussian:gamma=2",
                        "--window", "60", "--step", "30"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert [c["index"] for c in doc["curve"]] == list(range(doc["a_n"], doc["b_n"] + 1))
    assert len(doc["windows"]) == 3


def test_exponent_curve_and_summary(tmp_path, capsys):
    out = tmp_path / "curve.csv"
    summary = tmp_path / "s.json"
    code, _, _ = run(["exponent", "--test", "one-mmd", "--p", "bern:p=0.5", "--q", "bern:p=0.6",
                      "--kernel", "gaussian:gamma=0.1", "--trials", "2000", "--out", str(out),
                      "--summary", str(summary), "--bits"], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "size,beta_hat,se,minus_log_beta_over_size"
    assert [int(line.split(",")[0]) for line in lines[1:]] == [100, 200, 300, 400]
    s = json.loads(summary.read_text())
    assert s["unit"] == "bits" and s["fit_sizes"] == [200, 300, 400]


def test_blobs_curve_sorted(tmp_path, capsys):
    out = tmp_path / "blobs.csv"
    code, _, _ = run(["experiment", "blobs", "--n", "50", "--trials", "1", "--perm", "100",
                      "--bandwidths", "100,1,10", "--out", str(out)], capsys)
    assert code == 0
    gammas = [float(line.split(",")[0]) for line in out.read_text().splitlines()[1:]]
    assert gammas == [1.0, 10.0, 100.0]


@pytest.mark.parametrize("argv", [
    ["two-sample", "--x", "a.csv"],
    ["two-sample", "--x", "a.csv", "--y", "b.csv", "--alpha", "1.5"],
    ["two-sample", "--x", "a.csv", "--y", "b.csv", "--kernel", "cauchy:gamma=1"],
    ["two-sample", "--x", "a.csv", "--y", "b.csv", "--threshold", "perm:B=10"],
    ["changepoint", "--z", "z.csv", "--u", "0.8", "--v", "0.2"],
    ["exponent", "--test", "one-mmd", "--p", "bern:p=0.5", "--q", "bern:p=0.6", "--trials", "10"],
    ["experiment", "blobs", "--eps", "1"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == 2
    assert json.loads(err)["error"] == "usage"
    assert out == ""


def test_io_errors(data, tmp_path, capsys):
    code, _, err = run(["two-sample", "--x", data["a"], "--y", str(tmp_path / "missing.csv")], capsys)
    assert code == 3 and json.loads(err)["error"] == "io"
    code, _, err = run(["two-sample", "--x", data["a"], "--y", data["b"],
                        "--out", str(tmp_path / "no" / "dir.json")], capsys)
    assert code == 3


@pytest.mark.parametrize("text,where", [("1,2\n3\n", "row 2"), ("1,2\nx,3\n", "column 1"),
                                        ("1,2\ninf,3\n", "non-finite"), ("", "no data")])
def test_ingestion_errors(tmp_path, capsys, data, text, where):
    bad = tmp_path / "bad.csv"
    bad.write_text(text)
    with pytest.raises(InputError, match=where):
        load_csv(str(bad))
    code, _, err = run(["two-sample", "--x", str(bad), "--y", data["b"]], capsys)
    assert code == 2 and json.loads(err)["error"] == "input"


def test_load_csv_shapes(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("u,v\n1,2\n3,4\n5,6\n")
    assert load_csv(str(p), header=True).shape == (3, 2)
    with pytest.raises(InputError):
        load_csv(str(p))


def test_dimension_mismatch(data, capsys):
    code, _, err = run(["two-sample", "--x", data["a"], "--y", data["y"]], capsys)
    assert code == 2 and "dimension" in json.loads(err)["message"]


def test_byte_identical_reports(data, tmp_path, capsys):
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        assert main(["two-sample", "--x", data["a"], "--y", data["b"], "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
