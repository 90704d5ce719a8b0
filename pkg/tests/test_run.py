import csv
import json
from pathlib import Path

import pytest

from birkhoff.run import main


@pytest.fixture
def cyclic_file(tmp_path: Path) -> Path:
    path = tmp_path / "cyclic.txt"
    path.write_text("a b\nb c\nc a\n", encoding="utf-8")
    return path


def test_votes(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["votes", "--n", "3", "--r", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6
    assert lines[0] == "1 2"


def test_matrix(tmp_path: Path) -> None:
    out = tmp_path / "a.txt"
    assert main(["matrix", "--n", "3", "--r", "2", "--out", str(out)]) == 0
    rows = out.read_text(encoding="utf-8").splitlines()
    assert len(rows) == 6
    assert all(len(row.split()) == 6 for row in rows)


def test_stat(cyclic_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["stat", "--data", str(cyclic_file)]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj == {"n": 3, "r": 2, "N": 3, "t": [[1, 1, 1], [1, 1, 1]]}


def test_fiber_from_data(cyclic_file: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["fiber", "--data", str(cyclic_file)]) == 0
    lines = capsys.readouterr().out.splitlines()
    summary = json.loads(lines[-1])
    assert summary["size"] == 2
    assert summary["N_M"] == 2
    assert len(lines) == 3


@pytest.mark.parametrize(
    "args, expected",
    [
        (["--n", "4", "--r", "3", "--degree", "3"], "160"),
        (["--n", "6", "--r", "2", "--degree", "2", "--formula"], "90"),
        (["--n", "4", "--r", "2", "--degree", "2", "--brute"], "6"),
        (["--n", "5", "--r", "2", "--degree", "3", "--brute"], "10"),
        (["--n", "4", "--r", "5", "--degree", "2"], "0"),
        (["--n", "4", "--r", "5", "--degree", "2", "--brute"], "0"),
    ],
)
def test_count(args: list[str], expected: str, capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["count", *args]) == 0
    assert capsys.readouterr().out.strip() == expected


def test_verify_tables_appends_results(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    results = tmp_path / "results" / "results.csv"
    assert main(["verify-tables", "--r", "2", "--max-n", "5", "--degree", "2", "--results", str(results)]) == 0
    assert "PASS" in capsys.readouterr().out
    with results.open(newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 5
    assert {row["status"] for row in rows} == {"PASS"}
    assert rows[3]["published"] == "6"

    assert main(["verify-tables", "--r", "2", "--max-n", "2", "--degree", "2", "--results", str(results)]) == 0
    with results.open(newline="", encoding="utf-8") as f:
        assert len(list(csv.DictReader(f))) == 7


def test_connect(cyclic_file: Path, tmp_path: Path) -> None:
    goal = tmp_path / "goal.txt"
    goal.write_text("a c\nc b\nb a\n", encoding="utf-8")
    out = tmp_path / "path.json"
    assert main(["connect", "--data", str(cyclic_file), "--goal", str(goal), "--out", str(out)]) == 0
    path = json.loads(out.read_text(encoding="utf-8"))
    assert len(path["segments"]) == 1
    assert path["segments"][0]["touched"] == [1, 2, 3]


def test_sample(cyclic_file: Path, tmp_path: Path) -> None:
    out = tmp_path / "samples.txt"
    argv = ["sample", "--data", str(cyclic_file), "--steps", "20", "--emit-every", "5", "--out", str(out)]
    assert main(argv) == 0
    text = out.read_text(encoding="utf-8")
    assert text.count("# chain 1 sample") == 4
    assert "# chain 1 sample 4" in text


def test_sample_extended_walk(cyclic_file: Path, tmp_path: Path) -> None:
    out = tmp_path / "samples.txt"
    argv = ["sample", "--data", str(cyclic_file), "--steps", "50", "--walk", "extended", "--out", str(out)]
    assert main(argv) == 0
    assert "+" not in out.read_text(encoding="utf-8")


def test_goodness_of_fit(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    data = tmp_path / "data.txt"
    data.write_text("1 2\n2 3\n3 1\n1 2\n", encoding="utf-8")
    assert main(["test", "--data", str(data), "--steps", "300", "--chains", "2", "--exact"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"p", "se", "statistic_observed", "samples", "p_exact"}
    assert report["samples"] == 600
    assert 0 < report["p"] <= 1
    assert 0 < report["p_exact"] <= 1


def test_usage_error_exits_two() -> None:
    with pytest.raises(SystemExit) as exc:
        main(["count", "--n", "4"])
    assert exc.value.code == 2


def test_count_rejects_empty_shapes(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["count", "--n", "0", "--r", "2", "--degree", "2"]) == 1
    assert "error:" in capsys.readouterr().err


def test_domain_error_returns_one(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["votes", "--n", "2", "--r", "3"]) == 1
    assert "error:" in capsys.readouterr().err


def test_malformed_data_returns_one(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2\n1 ?\n", encoding="utf-8")
    assert main(["stat", "--data", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_chain_settings_from_environment(
    cyclic_file: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    monkeypatch.setenv("BIRKHOFF_CHAIN_STEPS", "12")
    monkeypatch.setenv("BIRKHOFF_CHAIN_THIN", "4")
    out = tmp_path / "samples.txt"
    assert main(["sample", "--data", str(cyclic_file), "--out", str(out)]) == 0
    assert out.read_text(encoding="utf-8").count("# chain 1 sample") == 3
