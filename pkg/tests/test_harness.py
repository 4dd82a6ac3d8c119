"""End-to-end CLI checks on a miniature experiment."""

from __future__ import annotations

import json
import os

import pytest

from depo.cli import main
from depo.env import load_game
from depo.oracle import joint_value_iteration

TINY = {
    "env": {"n_states": 3, "n_agents": 2, "action_counts": [2, 2],
            "gamma": 0.9, "seed": 13, "horizon": 8},
    "train": {"algo": "dpo", "seeds": [1, 2], "iterations": 3,
              "batch_episodes": 2, "epochs": 2, "eval_exact_every": 2},
    "output": {"directory": "runs"},
}


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY))
    return str(path)


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestGenDp:
    def test_gen_writes_game(self, tiny_cfg, tmp_path, capsys):
        out = str(tmp_path / "game.json")
        assert main(["gen", "--config", tiny_cfg, "--out", out]) == 0
        game = load_game(out)
        assert game.n_states == 3
        assert game.action_counts == (2, 2)

    def test_gen_with_dp_prints_matching_jstar(self, tiny_cfg, tmp_path,
                                               capsys):
        out = str(tmp_path / "game.json")
        code = main(["gen", "--config", tiny_cfg, "--out", out,
                     "--with-dp", "--tol", "1e-10"])
        assert code == 0
        printed = capsys.readouterr().out
        line = [l for l in printed.splitlines() if "j_star=" in l][0]
        j_printed = float(line.split("j_star=")[1].split()[0])
        res = joint_value_iteration(load_game(out), tol=1e-10)
        assert abs(j_printed - res.j_star) < 1e-12

    def test_gen_invalid_gamma_exits_2(self, tiny_cfg, tmp_path, capsys):
        code = main(["gen", "--config", tiny_cfg, "--set", "env.gamma=1.0",
                     "--out", str(tmp_path / "x.json")])
        assert code == 2
        assert "gamma" in capsys.readouterr().err

    def test_dp_roundtrip(self, tiny_cfg, tmp_path, capsys):
        game_path = str(tmp_path / "game.json")
        main(["gen", "--config", tiny_cfg, "--out", game_path])
        v_out = str(tmp_path / "v.json")
        code = main(["dp", "--game", game_path, "--tol", "1e-10",
                     "--v-out", v_out])
        assert code == 0
        payload = json.loads(open(v_out).read())
        assert len(payload["v_star"]) == 3
        assert payload["residual"] < 1e-10

    def test_dp_missing_game_exits_2(self, tmp_path):
        assert main(["dp", "--game", str(tmp_path / "nope.json")]) == 2


class TestTrain:
    def test_outputs_and_determinism(self, tiny_cfg, tmp_path):
        d1, d2, d3 = (str(tmp_path / n) for n in ("r1", "r2", "r3"))
        assert main(["train", "--config", tiny_cfg, "--out-dir", d1]) == 0
        assert main(["train", "--config", tiny_cfg, "--out-dir", d2]) == 0
        assert main(["train", "--config", tiny_cfg, "--out-dir", d3,
                     "--jobs", "2"]) == 0
        for name in ("dpo_seed1.csv", "dpo_seed2.csv", "dpo_summary.csv"):
            ref = _read(os.path.join(d1, name))
            assert _read(os.path.join(d2, name)) == ref, name
            assert _read(os.path.join(d3, name)) == ref, name

    def test_row_counts_and_env_steps(self, tiny_cfg, tmp_path):
        d = str(tmp_path / "runs")
        main(["train", "--config", tiny_cfg, "--out-dir", d])
        lines = open(os.path.join(d, "dpo_seed1.csv")).read().splitlines()
        assert len(lines) == 1 + TINY["train"]["iterations"]
        steps = [int(l.split(",")[3]) for l in lines[1:]]
        assert steps == sorted(steps) and len(set(steps)) == len(steps)

    def test_run_meta_written(self, tiny_cfg, tmp_path):
        d = str(tmp_path / "runs")
        main(["train", "--config", tiny_cfg, "--out-dir", d])
        meta = json.loads(open(os.path.join(d, "run_meta.json")).read())
        assert len(meta["config_hash"]) == 16
        assert meta["backend"] in ("cython", "python")
        assert "wall_clock_seconds" in meta

    def test_summary_matches_seed_rows(self, tiny_cfg, tmp_path):
        d = str(tmp_path / "runs")
        main(["train", "--config", tiny_cfg, "--out-dir", d])
        import csv
        rows = {}
        for seed in (1, 2):
            with open(os.path.join(d, f"dpo_seed{seed}.csv")) as fh:
                rows[seed] = list(csv.DictReader(fh))
        with open(os.path.join(d, "dpo_summary.csv")) as fh:
            summary = list(csv.DictReader(fh))
        for k, item in enumerate(summary):
            vals = [float(rows[s][k]["mean_return_undiscounted"])
                    for s in (1, 2)]
            assert abs(float(item["mean_return_undiscounted"])
                       - sum(vals) / 2) < 1e-12
            assert float(item["ci95_lo"]) <= float(item["ci95_hi"])

    def test_uses_saved_game(self, tiny_cfg, tmp_path):
        game_path = str(tmp_path / "game.json")
        main(["gen", "--config", tiny_cfg, "--out", game_path])
        d = str(tmp_path / "runs")
        code = main(["train", "--config", tiny_cfg, "--game", game_path,
                     "--out-dir", d])
        assert code == 0
        # generated from env.seed, so loading it changes nothing
        d2 = str(tmp_path / "runs2")
        main(["train", "--config", tiny_cfg, "--out-dir", d2])
        assert _read(os.path.join(d, "dpo_seed1.csv")) == \
            _read(os.path.join(d2, "dpo_seed1.csv"))

    def test_emit_svg(self, tiny_cfg, tmp_path):
        d = str(tmp_path / "runs")
        code = main(["train", "--config", tiny_cfg,
                     "--set", "output.emit_svg=true", "--out-dir", d])
        assert code == 0
        assert os.path.exists(os.path.join(d, "dpo_curves.svg"))


class TestAblate:
    def test_single_value_degenerate_group(self, tiny_cfg, tmp_path):
        d = str(tmp_path / "ab")
        code = main(["ablate", "--config", tiny_cfg, "--values", "0.05",
                     "--out-dir", d])
        assert code == 0
        lines = open(os.path.join(d, "ablate_dtarget_summary.csv")
                     ).read().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("0.05,")

    def test_detail_sorted_and_deterministic(self, tiny_cfg, tmp_path):
        d1 = str(tmp_path / "a1")
        d2 = str(tmp_path / "a2")
        argv = ["ablate", "--config", tiny_cfg, "--values", "0.01,0.1"]
        assert main(argv + ["--out-dir", d1]) == 0
        assert main(argv + ["--out-dir", d2, "--jobs", "2"]) == 0
        ref = _read(os.path.join(d1, "ablate_dtarget_detail.csv"))
        assert _read(os.path.join(d2, "ablate_dtarget_detail.csv")) == ref

    def test_bad_values_exit_2(self, tiny_cfg, tmp_path):
        assert main(["ablate", "--config", tiny_cfg, "--values", "0.1,zap",
                     "--out-dir", str(tmp_path / "x")]) == 2
        assert main(["ablate", "--config", tiny_cfg, "--values", "-1",
                     "--out-dir", str(tmp_path / "y")]) == 2


class TestVerifyCmd:
    def test_small_run_passes(self, tmp_path, capsys):
        report = str(tmp_path / "verify_report.csv")
        code = main(["verify", "--trials", "12", "--out", report])
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 5
        lines = open(report).read().splitlines()
        assert lines[0] == "suite,case,passed,detail"
        assert len(lines) > 12

    def test_zero_trials_warns(self, tmp_path, capsys):
        code = main(["verify", "--trials", "0",
                     "--out", str(tmp_path / "r.csv")])
        assert code == 0
        assert "warning" in capsys.readouterr().err

    def test_fault_injection_fails(self, capsys):
        code = main(["verify", "--trials", "6", "--inject-c-sign-flip"])
        assert code == 1
        err = capsys.readouterr().err
        assert "FIRST FAILURE" in err
        assert "suite=bound" in err


class TestPlot:
    def _summary(self, tiny_cfg, tmp_path):
        d = str(tmp_path / "runs")
        main(["train", "--config", tiny_cfg, "--out-dir", d])
        return os.path.join(d, "dpo_summary.csv")

    def test_deterministic_svg_with_rule(self, tiny_cfg, tmp_path):
        src = self._summary(tiny_cfg, tmp_path)
        a, b = str(tmp_path / "a.svg"), str(tmp_path / "b.svg")
        assert main(["plot", src, "--out", a, "--jstar", "5.0"]) == 0
        assert main(["plot", src, "--out", b, "--jstar", "5.0"]) == 0
        assert _read(a) == _read(b)
        body = open(a).read()
        assert "stroke-dasharray" in body     # the optimum rule
        assert body.count("<polyline") == 1
        assert body.count("<polygon") == 1     # the CI band

    def test_two_csvs_two_bands(self, tiny_cfg, tmp_path):
        src = self._summary(tiny_cfg, tmp_path)
        other = str(tmp_path / "other_summary.csv")
        with open(src) as fh, open(other, "w") as out:
            out.write(fh.read().replace("dpo", "ippo"))
        dst = str(tmp_path / "two.svg")
        assert main(["plot", src, other, "--out", dst]) == 0
        body = open(dst).read()
        assert body.count("<polyline") == 2
        assert ">dpo<" in body and ">ippo<" in body

    def test_empty_csv_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "empty.csv"
        bad.write_text("algo,env_steps,mean_return_undiscounted\n")
        assert main(["plot", str(bad), "--out",
                     str(tmp_path / "x.svg")]) == 2
        assert "no data rows" in capsys.readouterr().err

    def test_malformed_csv_reports_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("env_steps,mean_return_undiscounted\n10,1.5\n20\n")
        assert main(["plot", str(bad), "--out",
                     str(tmp_path / "x.svg")]) == 2
        assert ":3:" in capsys.readouterr().err

    def test_non_numeric_field_reports_line(self, tmp_path, capsys):
        bad = tmp_path / "bad2.csv"
        bad.write_text("env_steps,mean_return_undiscounted\n10,oops\n")
        assert main(["plot", str(bad), "--out",
                     str(tmp_path / "x.svg")]) == 2
        err = capsys.readouterr().err
        assert ":2:" in err and "mean_return_undiscounted" in err
