import argparse
import csv
import io
import json

import pytest

from lgi_randomness.cli import (
    EXIT_FAILED,
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    main,
    parse_dist,
    parse_grid,
    parse_int_grid,
    parse_target,
)
from lgi_randomness.export import file_sha256, read_trials
from lgi_randomness.errors import InvalidParameterError


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def csv_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_parse_grid():
    assert parse_grid("0:0.5:0.05") == pytest.approx([0.05 * k for k in range(11)])
    assert parse_grid("0.1,0.2") == [0.1, 0.2]
    assert parse_int_grid("1000:3000:1000") == [1000, 2000, 3000]
    for bad in ("0:1", "1:0:0.1", "a,b", "", "0:1:-1"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_grid(bad)
    with pytest.raises(argparse.ArgumentTypeError):
        parse_int_grid("0.5,2")


def test_parse_target():
    assert parse_target("13:+-") == ((1, 3), 1, -1)
    assert parse_target("23:--") == ((2, 3), -1, -1)
    for bad in ("31:+-", "13:+", "13:+x", "13"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_target(bad)


def test_parse_dist():
    assert parse_dist("uniform").q == pytest.approx(1 / 3)
    assert parse_dist("biased:1/6,5/12,5/12").q == pytest.approx(1 / 6)
    assert parse_dist("uniform", audit_mass=0.1).p((0, 2)) == pytest.approx(0.05)
    for bad in ("biased:1,2", "biased:a,b,c", "normal"):
        with pytest.raises(InvalidParameterError):
            parse_dist(bad)


def test_bound_single_alpha(capsys):
    code, out = run(capsys, "bound", "--alpha", "0.5", "--mode", "joint")
    assert code == EXIT_OK
    (row,) = csv_rows(out)
    assert float(row["bits"]) == pytest.approx(1.415, abs=0.005)
    assert row["mode"] == "joint"
    _, out = run(capsys, "bound", "--alpha", "0.5", "--mode", "conditional")
    assert float(csv_rows(out)[0]["bits"]) == pytest.approx(0.415, abs=0.005)


def test_bound_grid(capsys):
    code, out = run(capsys, "bound", "--grid", "0.0:0.5:0.05", "--mode", "joint")
    assert code == EXIT_OK
    assert out.splitlines()[0] == "alpha,bits,mode"
    rows = csv_rows(out)
    assert len(rows) == 11
    bits = [float(row["bits"]) for row in rows]
    assert bits[0] == 1.0
    assert all(b > a for a, b in zip(bits, bits[1:]))


def test_bound_json_output(capsys):
    code, out = run(capsys, "bound", "--alpha", "0.5", "--format", "json")
    assert code == EXIT_OK
    document = json.loads(out)
    assert document["command"] == "bound"
    assert document["columns"] == ["alpha", "bits", "mode"]
    assert document["rows"][0][1] == pytest.approx(1.415, abs=0.005)


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bound"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["bound", "--alpha", "0.3", "--mode", "average"])
    assert exc.value.code == EXIT_USAGE
    code, _ = run(capsys, "bound", "--alpha", "0.7")
    assert code == EXIT_USAGE


def test_certify_headline_numbers(capsys):
    code, out = run(capsys, "certify", "--I", "1.31", "--n", "100000", "--delta", "0.01")
    assert code == EXIT_OK
    report = json.loads(out)
    assert abs(report["total_bits"] - 3673) <= 2
    assert report["mode"] == "conditional"

    _, out = run(capsys, "certify", "--I", "1.31", "--n", "100000",
                 "--dist", "biased:1/6,5/12,5/12")
    assert abs(json.loads(out)["total_bits"] - 2777) <= 2

    _, out = run(capsys, "certify", "--I", "1.31", "--n", "100000", "--no-memory")
    assert abs(json.loads(out)["total_bits"] - 5406) <= 1


def test_certify_without_violation_fails(capsys):
    code, out = run(capsys, "certify", "--I", "1.0", "--n", "100000")
    assert code == EXIT_FAILED
    assert json.loads(out)["total_bits"] == 0


def test_certify_needs_an_input(capsys):
    code, _ = run(capsys, "certify", "--I", "1.31")
    assert code == EXIT_USAGE


def test_memory_curve(capsys):
    code, out = run(capsys, "memory-curve", "--I", "1.31", "--n-grid", "1000,100000")
    assert code == EXIT_OK
    rows = csv_rows(out)
    assert [int(row["total_bits"]) for row in rows][0] == 0
    assert abs(int(rows[1]["total_bits"]) - 3673) <= 2


def test_nsit_audit_radii(capsys):
    code, out = run(capsys, "nsit-audit", "--n-grid", "100000", "--delta", "0.01")
    assert code == EXIT_OK
    (row,) = csv_rows(out)
    for key in ("eps1", "eps2", "eps3"):
        assert float(row[key]) == pytest.approx(0.0144, abs=1e-4)


def test_simulate_is_reproducible(capsys, tmp_path):
    outputs = []
    for name in ("first", "second"):
        out = tmp_path / f"{name}.jsonl"
        code, _ = run(
            capsys, "simulate", "--canonical-alpha", "0.31", "--n", "5000", "--seed", "7",
            "--audit", "--out", str(out), "--bits-dir", str(tmp_path / f"{name}_bits"),
        )
        assert code == EXIT_OK
        outputs.append(out)

    assert file_sha256(str(outputs[0])) == file_sha256(str(outputs[1]))
    manifest = json.loads((tmp_path / "first.jsonl.manifest.json").read_text())
    assert manifest["sha256"] == file_sha256(str(outputs[0]))
    assert manifest["n"] == 5000
    assert sum(manifest["setting_counts"].values()) == 5000

    bits_manifest = json.loads((tmp_path / "first_bits" / "manifest.json").read_text())
    assert bits_manifest["total_length"] == 5000
    assert len(bits_manifest["groups"]) == 8
    assert (tmp_path / "first_bits" / "bits_x1_y3_a1.txt").exists()

    trials = read_trials(str(outputs[0]))
    n_pairs = int((trials.x != 0).sum())
    code, out = run(capsys, "certify", "--trials", str(outputs[0]), "--audit")
    report = json.loads(out)
    assert code in (EXIT_OK, EXIT_FAILED)
    assert report["n"] == n_pairs
    assert report["nsit_hat"] is not None

    code, out = run(capsys, "nsit-audit", "--trials", str(outputs[0]))
    assert code == EXIT_OK
    (row,) = csv_rows(out)
    assert int(row["n"]) == 5000
    for j in (1, 2, 3):
        assert abs(float(row[f"nsit{j}"])) <= float(row[f"tol{j}"])


def write_trials(path, rows):
    lines = [
        json.dumps({"i": i, "x": x, "y": y, "a": a, "b": b}, separators=(",", ":"))
        for i, (x, y, a, b) in enumerate(rows)
    ]
    path.write_text("\n".join(lines) + "\n")


def test_nsit_audit_flags_signalling_trials(capsys, tmp_path):
    path = tmp_path / "signalling.jsonl"
    rows = [(0, 2, None, 1), (0, 3, None, 1)]
    rows += [(x, y, 1, -1) for x, y in ((1, 2), (1, 3), (2, 3))]
    write_trials(path, rows * 200)
    code, out = run(capsys, "nsit-audit", "--trials", str(path))
    assert code == EXIT_FAILED
    (row,) = csv_rows(out)
    assert float(row["nsit1"]) == pytest.approx(1.0)
    assert float(row["nsit1"]) > float(row["tol1"])


def test_certify_trials_reads_manifest_distribution(capsys, tmp_path):
    out = tmp_path / "biased.jsonl"
    code, _ = run(
        capsys, "simulate", "--canonical-alpha", "0.31", "--n", "3000", "--seed", "5",
        "--dist", "biased:1/6,5/12,5/12", "--out", str(out),
    )
    assert code == EXIT_OK

    _, report = run(capsys, "certify", "--trials", str(out))
    assert json.loads(report)["q"] == pytest.approx(1 / 6)

    main(["certify", "--trials", str(out), "--dist", "uniform"])
    captured = capsys.readouterr()
    assert json.loads(captured.out)["q"] == pytest.approx(1 / 3)
    assert "Warning" in captured.err


def test_simulate_needs_exactly_one_strategy(capsys, tmp_path):
    code, _ = run(capsys, "simulate", "--n", "10", "--out", str(tmp_path / "t.jsonl"))
    assert code == EXIT_USAGE


def test_malformed_trial_file_is_an_io_error(capsys, tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"i":0,"x":1,"y":2,"a":1,"b":1}\n{"i":1,"x":1,"y":2,"a":null,"b":1}\n')
    code = main(["certify", "--trials", str(path)])
    assert code == EXIT_IO
    assert "line 2" in capsys.readouterr().err
    code, _ = run(capsys, "certify", "--trials", str(tmp_path / "missing.jsonl"))
    assert code == EXIT_IO


def test_optimize_single_target(capsys):
    code, out = run(
        capsys, "optimize", "--alpha", "0.5", "--target", "13:+-", "--restarts", "1",
        "--format", "json",
    )
    assert code == EXIT_OK
    result = json.loads(out)
    assert result["converged"] is True
    assert result["best_value"] == pytest.approx(0.375, abs=2e-3)
    assert result["target"] == [[1, 3], 1, -1]


def test_repro_paper_without_optimizer(capsys, tmp_path):
    summary = tmp_path / "repro.csv"
    code, out = run(capsys, "repro-paper", "--skip-optimizer", "--out", str(summary))
    assert code == EXIT_OK
    rows = csv_rows(out[out.index("quantity,"):])
    assert len(rows) == 7
    assert all(row["ok"] == "true" for row in rows)
    assert summary.exists()
