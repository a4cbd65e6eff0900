import json

import pytest

from fairalloc.cli import main
from fairalloc.experiments import persist_records, run_study1

SPECIALISTS = ["--member0", "0.9,0.1,0.5,0.5", "--member1", "0.1,0.9,0.5,0.5"]
TWINS = ["--member0", "0.5,0.5,0.5,0.5", "--member1", "0.5,0.5,0.5,0.5"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestSolve:
    def test_specialists(self, capsys):
        code, out, _ = run(capsys, "solve", "--kits", "1,1", "--algorithm", "efficient", "--json", *SPECIALISTS)
        assert code == 0
        payload = json.loads(out)
        assert payload["goal_reward"] == pytest.approx(0.9, abs=1e-12)
        assert payload["actions"] == [[0, 1]]

    def test_twins_fair(self, capsys):
        code, out, _ = run(capsys, "solve", "--kits", "2,2", "--algorithm", "fair", "--json", *TWINS)
        assert code == 0
        assert json.loads(out)["goal_reward"] == pytest.approx(1.0, abs=1e-12)

    def test_bad_coefficient(self, capsys):
        code, _, err = run(capsys, "solve", "--kits", "2,2", "--member0", "1.2,0.5,0.5,0.5",
                           "--member1", "0.5,0.5,0.5,0.5")
        assert code != 0
        assert "member0[0]" in err

    def test_human_readable(self, capsys):
        code, out, _ = run(capsys, "solve", "--kits", "1,1", *SPECIALISTS)
        assert code == 0
        assert "goal reward    0.900000" in out

    def test_rollout(self, capsys):
        code, out, _ = run(capsys, "rollout", "--kits", "4,4", "--algorithm", "fea", *SPECIALISTS)
        assert code == 0
        assert out.count("round ") == 4

    def test_config_file_and_override(self, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"kits": [1, 1], "algorithm": "fair"}))
        code, out, _ = run(capsys, "solve", "--config", str(cfg), "--algorithm", "efficient", "--json", *SPECIALISTS)
        assert code == 0
        payload = json.loads(out)
        assert payload["algorithm"] == "efficient"
        assert payload["kits"] == [1, 1]

    def test_config_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        code, _, err = run(capsys, "solve", "--config", str(cfg), *SPECIALISTS)
        assert code == 2
        assert "bogus" in err

    def test_bad_lambda(self, capsys):
        code, _, err = run(capsys, "solve", "--lambda", "1.5", "--algorithm", "fea", *SPECIALISTS)
        assert code == 2
        assert "lambda" in err


class TestStudies:
    def test_study1_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            code, out, _ = run(capsys, "study1", "--teams", "300", "--seed", "7", "--out", str(d))
            assert code == 0
        for name in ("records.csv", "filtered.csv", "histogram.json", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        assert "[0.60, 0.70)" in out and "%" in out

    def test_study1_filter_le_total(self, capsys, tmp_path):
        run(capsys, "study1", "--teams", "200", "--threshold", "0.60", "--out", str(tmp_path))
        hist = json.loads((tmp_path / "histogram.json").read_text())
        assert hist["summary"]["num_filtered"] <= hist["summary"]["num_teams"] == 200

    def test_study1_requires_out(self, capsys):
        code, _, err = run(capsys, "study1", "--teams", "5")
        assert code == 2 and "out" in err

    def test_study2_grid(self, capsys, tmp_path):
        code, out, _ = run(capsys, "study2", "--teams", "40", "--team-type", "mixed",
                           "--algorithms", "efficient,fea", "--out", str(tmp_path))
        assert code == 0
        stats = json.loads((tmp_path / "mean_stats.json").read_text())
        grid = stats["means"]["most_capable_first"]
        assert set(grid) == {"efficient", "fea"}
        for alg in grid.values():
            assert set(alg) == {"H0", "H1"}
            for cell in alg.values():
                assert set(cell) == {"capable", "preferred"}

    def test_study2_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert run(capsys, "study2", "--teams", "30", "--team-type", "twins", "--out", str(d))[0] == 0
        for name in ("teams.csv", "mean_stats.json", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_study2_lambda_one(self, capsys, tmp_path):
        run(capsys, "study2", "--teams", "30", "--lambda", "1.0", "--out", str(tmp_path))
        grid = json.loads((tmp_path / "mean_stats.json").read_text())["means"]["most_capable_first"]
        assert grid["fea"] == grid["efficient"]

    def test_study2_rejects_other_algorithms(self, capsys, tmp_path):
        code, _, _ = run(capsys, "study2", "--teams", "5", "--algorithms", "fair", "--out", str(tmp_path))
        assert code == 2


class TestMatch:
    def test_exact(self, capsys, tmp_path):
        res = run_study1(40, master_seed=1, threshold=-1.0)
        persist_records(res.filtered, tmp_path / "filtered.csv")
        rec = res.filtered[3]
        y = ",".join(repr(x) for x in rec.profile.member_vector(0))
        code, out, _ = run(capsys, "match", "--participant", y, "--candidates", str(tmp_path / "filtered.csv"))
        assert code == 0
        lines = out.splitlines()
        assert lines[-1] == "L1 0.0000"
        assert lines[0] == "agent " + ",".join(f"{x:.4f}" for x in rec.profile.member_vector(1))

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "match", "--participant", "0.1,0.2,0.3,0.4",
                           "--candidates", str(tmp_path / "none.csv"))
        assert code != 0 and "no such records file" in err

    def test_empty_file(self, capsys, tmp_path):
        persist_records([], tmp_path / "filtered.csv")
        code, _, err = run(capsys, "match", "--participant", "0.1,0.2,0.3,0.4",
                           "--candidates", str(tmp_path / "filtered.csv"))
        assert code != 0 and "no teams" in err


class TestOracleCheck:
    def test_pass(self, capsys):
        code, out, _ = run(capsys, "oracle-check", "--teams", "20", "--kits", "3,3", "--lambdas", "0,0.7,1")
        assert code == 0
        assert out.startswith("PASS")

    def test_guard(self, capsys):
        code, _, err = run(capsys, "oracle-check", "--kits", "10,10")
        assert code != 0 and "brute-force limit" in err
