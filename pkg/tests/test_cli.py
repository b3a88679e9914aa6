"""End-to-end runs of the batch front end against temp-dir configs.

Every invocation goes through main(argv) so argument parsing, config loading,
dispatch, and exit codes are all on the path. Outcomes of the stochastic
subcommands are pinned: with a fixed seed the whole pipeline is deterministic.
"""
import json

import pytest

from herdmarket.cli import EXIT_BUDGET, EXIT_FLAGGED, EXIT_OK, EXIT_VALIDATION, main

NOISE_AGENT = {"gamma_sq": 1.0, "beta": 1.0, "p": 0.6, "eta": 1.0, "lambda_bar": 1.0}


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def micro_config(**run_overrides):
    run = {"horizon": 0.5, "seed": 3, "replications": 2, "grid_step": 0.25, "initial_excited": 0.5}
    run.update(run_overrides)
    return {
        "run": run,
        "agents": {"kind": "homogeneous", "n": 10, "agent": dict(NOISE_AGENT)},
        "market": {},
    }


class TestMicroCommand:
    def test_writes_trajectories_and_summary(self, tmp_path):
        cfg = write_config(tmp_path, micro_config())
        out = tmp_path / "out"
        assert main(["micro", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert (out / "micro_rep0.csv").exists()
        assert (out / "micro_rep1.csv").exists()
        summary = json.loads((out / "micro_summary.json").read_text())
        assert summary["replications"] == 2
        assert len(summary["event_counts"]) == 2
        assert summary["config"]["run"]["seed"] == 3
        assert 0.0 <= summary["final_q_mean"] <= 1.0

    def test_csv_bodies_identical_across_reruns(self, tmp_path):
        cfg = write_config(tmp_path, micro_config())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["micro", "--config", cfg, "--out", str(out1)]) == EXIT_OK
        assert main(["micro", "--config", cfg, "--out", str(out2)]) == EXIT_OK
        for name in ("micro_rep0.csv", "micro_rep1.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_seed_flag_overrides_config(self, tmp_path):
        cfg = write_config(tmp_path, micro_config())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["micro", "--config", cfg, "--out", str(out1)])
        main(["micro", "--config", cfg, "--out", str(out2), "--seed", "99"])
        assert (out1 / "micro_rep0.csv").read_bytes() != (out2 / "micro_rep0.csv").read_bytes()
        summary = json.loads((out2 / "micro_summary.json").read_text())
        assert summary["config"]["run"]["seed"] == 99

    def test_event_log_opt_in(self, tmp_path):
        cfg = write_config(tmp_path, micro_config(log_events=True, replications=1))
        out = tmp_path / "out"
        assert main(["micro", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert (out / "micro_rep0_events.jsonl").exists()

    def test_bernoulli_initial_condition(self, tmp_path):
        doc = micro_config(initial_excited={"kind": "bernoulli", "fraction": 0.5})
        cfg = write_config(tmp_path, doc)
        assert main(["micro", "--config", cfg, "--out", str(tmp_path / "out")]) == EXIT_OK

    def test_tiny_event_budget_exits_3(self, tmp_path, capsys):
        cfg = write_config(tmp_path, micro_config(horizon=100.0, event_budget=10))
        code = main(["micro", "--config", cfg, "--out", str(tmp_path / "out")])
        assert code == EXIT_BUDGET
        assert "error:" in capsys.readouterr().err


class TestSdeCommand:
    def config(self, **limit_overrides):
        limit = {"beta": 1.0, "gamma": 1.0, "eta": 1.0, "p": 0.6, "q0": 0.6}
        limit.update(limit_overrides)
        return {
            "run": {"horizon": 1.0, "dt": 1e-3, "record_every": 10, "replications": 2},
            "limit": limit,
        }

    def test_excitement_only_run(self, tmp_path):
        cfg = write_config(tmp_path, self.config())
        out = tmp_path / "out"
        assert main(["sde", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert (out / "sde_rep0.csv").exists() and (out / "sde_rep1.csv").exists()
        summary = json.loads((out / "sde_summary.json").read_text())
        assert summary["unstable"] is False
        assert summary["final_x_mean"] is None
        assert 0.0 <= summary["final_q_mean"] <= 1.0

    def test_price_enabled_when_limit_trades(self, tmp_path):
        doc = self.config(lambda_n=1.0, fundamental_value=50.0, x0=50.0)
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["sde", "--config", cfg, "--out", str(out)]) == EXIT_OK
        summary = json.loads((out / "sde_summary.json").read_text())
        assert summary["final_x_mean"] is not None

    def test_unstable_step_exits_4_but_still_writes(self, tmp_path):
        doc = self.config(gamma=10.0)
        doc["run"]["dt"] = 1e-2
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["sde", "--config", cfg, "--out", str(out)]) == EXIT_FLAGGED
        summary = json.loads((out / "sde_summary.json").read_text())
        assert summary["unstable"] is True
        assert (out / "sde_rep0.csv").exists()


class TestCoeffsCommand:
    def config(self, n_list):
        return {
            "agents": {"kind": "homogeneous", "agent": dict(NOISE_AGENT)},
            "analysis": {"n_list": n_list},
        }

    def test_converging_family_exits_0(self, tmp_path, capsys):
        cfg = write_config(tmp_path, self.config([10, 100]))
        out = tmp_path / "out"
        assert main(["coeffs", "--config", cfg, "--out", str(out)]) == EXIT_OK
        assert "converged: True" in capsys.readouterr().out
        report = json.loads((out / "coeffs_report.json").read_text())
        assert report["converged"] is True
        gaps = (out / "coeffs_gaps.csv").read_text().splitlines()
        assert gaps[2] == "n,coefficient,probe,finite,limit,gap"

    def test_increasing_gaps_exit_4(self, tmp_path):
        # sizes in decreasing order make the sup gap grow along the list
        cfg = write_config(tmp_path, self.config([1000, 10]))
        out = tmp_path / "out"
        assert main(["coeffs", "--config", cfg, "--out", str(out)]) == EXIT_FLAGGED
        report = json.loads((out / "coeffs_report.json").read_text())
        assert report["converged"] is False
        assert (out / "coeffs_gaps.csv").exists()

    def test_matching_limit_family(self, tmp_path):
        doc = {
            "limit": {
                "beta": 1.0,
                "gamma": 1.0,
                "eta": 1.0,
                "p": 0.6,
                "lambda_f": 0.2,
                "lambda_n": 0.8,
                "phi": 0.2,
                "c_e": 2.0,
                "fundamental_value": 50.0,
            },
            "agents": {"kind": "matching_limit"},
            "analysis": {"n_list": [10, 100]},
        }
        cfg = write_config(tmp_path, doc)
        code = main(["coeffs", "--config", cfg, "--out", str(tmp_path / "out")])
        assert code in (EXIT_OK, EXIT_FLAGGED)  # exercised for dispatch, not verdict
        assert (tmp_path / "out" / "coeffs_report.json").exists()


class TestConvergeCommand:
    def test_small_study_ks_decreases(self, tmp_path, capsys):
        doc = {
            "run": {"horizon": 0.3, "dt": 1e-3, "seed": 0},
            "limit": {"beta": 0.5, "gamma": 1.0, "eta": 1.0, "p": 0.6, "q0": 0.5},
            "agents": {"kind": "homogeneous", "agent": dict(NOISE_AGENT)},
            "analysis": {"n_list": [10, 80], "paths": 400},
        }
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["converge", "--config", cfg, "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "converge_weakconv.json").read_text())
        assert doc["ks_strictly_decreasing"] is True
        ks = [row["ks_vs_reference"] for row in doc["per_n"]]
        assert ks[1] < ks[0]
        assert "ks strictly decreasing: True" in capsys.readouterr().out

    def test_missing_n_list_exits_2(self, tmp_path):
        doc = {
            "run": {"horizon": 0.3},
            "limit": {"beta": 0.5, "gamma": 1.0, "eta": 1.0, "p": 0.6},
            "agents": {"kind": "homogeneous", "agent": dict(NOISE_AGENT)},
        }
        cfg = write_config(tmp_path, doc)
        assert main(["converge", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


class TestSpikesCommand:
    def test_sde_engine_long_run_passes(self, tmp_path, capsys):
        # seed 1 is a pinned draw whose counts sit inside all three intervals;
        # a 12-seed scan put the joint pass rate at 11/12
        doc = {
            "run": {"horizon": 200.0, "dt": 1e-4, "seed": 1},
            "limit": {"beta": 1.0, "gamma": 10.0, "eta": 1.0, "p": 0.6, "q0": 0.5},
        }
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "out"
        assert main(["spikes", "--config", cfg, "--out", str(out)]) == EXIT_OK
        doc = json.loads((out / "spikes_spikes.json").read_text())
        assert doc["all_passed"] is True
        assert set(doc["passed"]) == {"jump01", "jump10", "spike0>0.5"}
        assert "threshold_sensitivity" in doc
        assert (out / "spikes_heights.csv").exists()
        assert "pass" in capsys.readouterr().out

    def test_unknown_engine_exits_2(self, tmp_path):
        doc = {
            "run": {"horizon": 1.0},
            "limit": {"beta": 1.0, "gamma": 10.0, "eta": 1.0, "p": 0.6},
            "analysis": {"engine": "bogus"},
        }
        cfg = write_config(tmp_path, doc)
        assert main(["spikes", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


class TestValidationExits:
    def test_missing_horizon(self, tmp_path, capsys):
        doc = micro_config()
        del doc["run"]["horizon"]
        cfg = write_config(tmp_path, doc)
        assert main(["micro", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
        assert "horizon" in capsys.readouterr().err

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["micro", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION

    def test_missing_file(self, tmp_path):
        missing = str(tmp_path / "nope.json")
        assert main(["micro", "--config", missing, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION

    def test_unknown_agent_kind(self, tmp_path):
        doc = micro_config()
        doc["agents"]["kind"] = "swarm"
        cfg = write_config(tmp_path, doc)
        assert main(["micro", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION

    def test_unknown_limit_key(self, tmp_path):
        doc = {
            "run": {"horizon": 1.0},
            "limit": {"beta": 1.0, "gamma": 1.0, "eta": 1.0, "p": 0.6, "temperature": 5.0},
        }
        cfg = write_config(tmp_path, doc)
        assert main(["sde", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION

    def test_unknown_market_key(self, tmp_path):
        doc = micro_config()
        doc["market"]["spread"] = 0.01
        cfg = write_config(tmp_path, doc)
        assert main(["micro", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION

    def test_bad_demand_mode(self, tmp_path):
        doc = micro_config()
        doc["market"]["demand_mode"] = "cubic"
        cfg = write_config(tmp_path, doc)
        assert main(["micro", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_VALIDATION

    def test_missing_config_flag_is_argparse_error(self):
        with pytest.raises(SystemExit):
            main(["micro"])

    def test_unknown_command_is_argparse_error(self):
        with pytest.raises(SystemExit):
            main(["frobnicate", "--config", "x.json"])
