import json

import pytest

from conftest import FIXTURES
from fwdflat import cli

RUNNING = str(FIXTURES / "running.sys")
ACADEMIC = str(FIXTURES / "academic.sys")
NONFLAT = str(FIXTURES / "nonflat.sys")


class TestAnalyze:
    def test_flat_exit_zero(self, capsys):
        assert cli.run(["analyze", RUNNING]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "ForwardFlat" in out
        assert "dims: [3, 2, 0]" in out

    def test_nonflat_exit_one(self, capsys):
        assert cli.run(["analyze", NONFLAT]) == cli.EXIT_NEGATIVE
        out = capsys.readouterr().out
        assert "NotForwardFlat" in out
        assert "obstruction" in out

    def test_missing_file_exit_two(self, capsys):
        assert cli.run(["analyze", "/no/such/file.sys"]) == cli.EXIT_INPUT

    def test_bad_usage_exit_two(self, capsys):
        assert cli.run(["analyze"]) == cli.EXIT_INPUT

    def test_json_schema(self, capsys):
        assert cli.run(["analyze", RUNNING, "--json"]) == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["system"] == "running"
        assert payload["verdict"] == "ForwardFlat"
        assert payload["k_bar"] == 3
        assert payload["dims"] == [3, 2, 0]
        assert payload["decomposition_dims"] == [1, 2]
        assert payload["obstruction"] is None
        assert payload["warnings"] == []
        steps = payload["steps"]
        assert [s["k"] for s in steps] == [1, 2, 3]
        assert steps[0]["intersection_dim"] == 1
        assert steps[0]["step2_trivial"] is False
        assert steps[1]["basis"] == ["dx1 - dx3", "dx2"]

    def test_json_nonflat(self, capsys):
        assert cli.run(["analyze", NONFLAT, "--json"]) == cli.EXIT_NEGATIVE
        payload = json.loads(capsys.readouterr().out)
        assert payload["verdict"] == "NotForwardFlat"
        assert payload["obstruction"] == ["dx1", "dx2"]
        assert payload["decomposition_dims"] is None

    def test_trace(self, capsys):
        assert cli.run(["analyze", RUNNING, "--trace"]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "k = 1" in out

    def test_seed_flag_consistent_output(self, capsys):
        cli.run(["analyze", RUNNING, "--json", "--seed", "7"])
        a = capsys.readouterr().out
        cli.run(["analyze", RUNNING, "--json", "--seed", "99"])
        b = capsys.readouterr().out
        assert a == b


class TestVerifyFlatOutput:
    def test_positive(self, capsys):
        assert cli.run(["verify-flat-output", RUNNING]) == cli.EXIT_OK
        assert "flat output verified: True" in capsys.readouterr().out

    def test_json(self, capsys):
        assert cli.run(["verify-flat-output", RUNNING, "--json"]) == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["verified"] is True
        assert payload["failing_components"] == []
        assert set(payload["residuals"]) == {"x", "u", "consistency"}

    def test_not_declared(self, capsys):
        assert cli.run(["verify-flat-output", NONFLAT]) == cli.EXIT_INPUT
        assert "no flat output" in capsys.readouterr().err

    def test_wrong_candidate(self, tmp_path, capsys):
        text = (FIXTURES / "running.sys").read_text()
        bad = tmp_path / "bad.sys"
        bad.write_text(text.replace("Fx: y2\n", "Fx: y2 + 1\n"))
        assert cli.run(["verify-flat-output", str(bad)]) == cli.EXIT_NEGATIVE
        out = capsys.readouterr().out
        assert "flat output verified: False" in out
        assert "x2" in out


class TestVerifyDecomposition:
    def test_positive(self, capsys):
        assert cli.run(["verify-decomposition", RUNNING]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "decomposition verified: True" in out
        assert "[3, 2, 0]" in out and "[2, 0]" in out

    def test_json(self, capsys):
        assert cli.run(["verify-decomposition", ACADEMIC, "--json"]) == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["verified"] is True
        assert payload["split"] == [1, 4, 1, 1]
        assert payload["sequence_dims"] == [5, 4, 2, 0]
        assert payload["subsystem_sequence_dims"] == [4, 2, 0]

    def test_not_declared(self, capsys):
        assert cli.run(["verify-decomposition", NONFLAT]) == cli.EXIT_INPUT

    def test_invalid_split(self, tmp_path, capsys):
        text = (FIXTURES / "running.sys").read_text()
        bad = tmp_path / "bad.sys"
        bad.write_text(text.replace("split: 1 2 1 1", "split: 2 1 1 1"))
        assert cli.run(["verify-decomposition", str(bad)]) == cli.EXIT_NEGATIVE
        assert "decomposition verified: False" in capsys.readouterr().out


class TestErrorMapping:
    def test_inversion_failure_exit_three(self, tmp_path, capsys):
        bad = tmp_path / "quintic.sys"
        bad.write_text(
            "states: x1\ninputs: u1\n"
            "f: x1 + u1 + (x1 + u1)^5\nx0: 0\nu0: 0\n")
        assert cli.run(["analyze", str(bad)]) == cli.EXIT_INVERSION
        assert "inversion failed" in capsys.readouterr().err

    def test_main_raises_systemexit(self):
        with pytest.raises(SystemExit) as exc:
            import sys
            old = sys.argv
            sys.argv = ["fwdflat", "analyze", NONFLAT]
            try:
                cli.main()
            finally:
                sys.argv = old
        assert exc.value.code == cli.EXIT_NEGATIVE
