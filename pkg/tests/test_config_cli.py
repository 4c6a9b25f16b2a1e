import json

import numpy as np
import pytest

from pushdp.cli import main
from pushdp.config import load_config, parse_sections, to_sections
from pushdp.errors import ConfigurationError

BASE_CONFIG = """
[run]
algorithm = adp-vrsgp
n = 8
T = 30
master_seed = 3

[topology]
kind = static-ring
k = 2

[noise]
form = stepwise
s = 0.2
tau = 5
a1 = 1.0
a2 = 10.0

[lr]
eta = 1.0
xi = 0.5

[clip]
g0 = 0.1
psi = 0.99

[fusion]
theta = 0.5
tau = 5

[privacy]
epsilon = 1.0
delta = 1e-5
sampling_ratio = 0.5

[model]
kind = logistic
features = 4
l2 = 0.01

[data]
kind = blobs
n_samples = 160
test_fraction = 0.25
alpha_conc = 1.0
"""


def write_config(tmp_path, text=BASE_CONFIG, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestConfigParsing:
    def test_load_and_fields(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert cfg.algorithm == "adp-vrsgp" and cfg.n == 8 and cfg.T == 30
        assert cfg.noise.tau == cfg.fusion.tau == 5
        assert cfg.budgets[0].epsilon == 1.0 and len(cfg.budgets) == 8
        assert cfg.lr.eta_base == 1.0

    def test_missing_key_path_in_message(self, tmp_path):
        broken = BASE_CONFIG.replace("kind = static-ring", "")
        with pytest.raises(ConfigurationError, match="topology.kind"):
            load_config(write_config(tmp_path, broken))

    def test_tau_mismatch_names_both_keys(self, tmp_path):
        broken = BASE_CONFIG.replace("theta = 0.5\ntau = 5", "theta = 0.5\ntau = 4")
        with pytest.raises(ConfigurationError, match="fusion.tau") as err:
            load_config(write_config(tmp_path, broken))
        assert "noise.tau" in str(err.value)

    def test_per_node_epsilon_list(self, tmp_path):
        text = BASE_CONFIG.replace(
            "epsilon = 1.0", "epsilon = 1,1,1,1,2,2,2,2"
        )
        cfg = load_config(write_config(tmp_path, text))
        assert [b.epsilon for b in cfg.budgets] == [1, 1, 1, 1, 2, 2, 2, 2]

    def test_wrong_list_length(self, tmp_path):
        text = BASE_CONFIG.replace("epsilon = 1.0", "epsilon = 1,2,3")
        with pytest.raises(ConfigurationError, match="privacy.epsilon"):
            load_config(write_config(tmp_path, text))

    def test_eta_from_exponent(self, tmp_path):
        text = BASE_CONFIG.replace("eta = 1.0", "K = 2.0\np = 0.1")
        cfg = load_config(write_config(tmp_path, text))
        assert cfg.lr.eta_base == pytest.approx(2.0 * np.sqrt(8) / 30**0.1)
        assert cfg.lr.p == 0.1 and cfg.lr_K == 2.0

    def test_round_trip_equality(self, tmp_path):
        cfg = load_config(write_config(tmp_path))
        assert parse_sections(to_sections(cfg)) == cfg

    def test_round_trip_with_exponent_and_lists(self, tmp_path):
        text = BASE_CONFIG.replace("eta = 1.0", "K = 2.0\np = 0.1").replace(
            "epsilon = 1.0", "epsilon = 1,1,1,1,2,2,2,2"
        )
        cfg = load_config(write_config(tmp_path, text))
        assert parse_sections(to_sections(cfg)) == cfg


class TestCliRun:
    def test_run_writes_outputs(self, tmp_path):
        cfg_path = write_config(tmp_path)
        out = tmp_path / "out"
        code = main(["run", "--config", cfg_path, "--seeds", "1,2", "--out", str(out)])
        assert code == 0
        for seed in (1, 2):
            metrics = out / f"seed_{seed}_metrics.jsonl"
            lines = metrics.read_text().strip().splitlines()
            assert len(lines) == 30
            row = json.loads(lines[0])
            assert set(row) == {
                "t", "mean_sq_grad_norm", "consensus_error", "train_loss",
                "test_accuracy", "current_g", "alpha_injected", "eta_t",
                "clip_residual_mean", "empirical_d_tau",
            }
            summary = json.loads((out / f"seed_{seed}_summary.json").read_text())
            assert summary["master_seed"] == seed
            assert (out / f"seed_{seed}_partition.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [1, 2]

    def test_summary_config_echo_reparses(self, tmp_path):
        cfg_path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg_path, "--seeds", "1", "--out", str(out)]) == 0
        summary = json.loads((out / "seed_1_summary.json").read_text())
        parsed = parse_sections(summary["config"])
        assert parsed == load_config(cfg_path)

    def test_overwrite_needs_force(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        out = tmp_path / "out"
        assert main(["run", "--config", cfg_path, "--seeds", "1", "--out", str(out)]) == 0
        assert main(["run", "--config", cfg_path, "--seeds", "1", "--out", str(out)]) == 1
        assert "would overwrite" in capsys.readouterr().err
        assert main(["run", "--config", cfg_path, "--seeds", "1", "--out", str(out), "--force"]) == 0

    def test_invalid_config_exits_nonzero(self, tmp_path, capsys):
        broken = BASE_CONFIG.replace("theta = 0.5\ntau = 5", "theta = 0.5\ntau = 4")
        code = main(["run", "--config", write_config(tmp_path, broken), "--out", str(tmp_path / "o")])
        assert code == 1
        err = capsys.readouterr().err
        assert "fusion.tau" in err and "noise.tau" in err

    def test_env_var_default_out(self, tmp_path, monkeypatch):
        cfg_path = write_config(tmp_path)
        target = tmp_path / "env_out"
        monkeypatch.setenv("PUSHDP_OUT", str(target))
        assert main(["run", "--config", cfg_path, "--seeds", "4"]) == 0
        assert (target / "seed_4_summary.json").exists()


class TestCliVerify:
    def test_schedules_suite_passes(self, capsys):
        assert main(["verify", "schedules"]) == 0
        out = capsys.readouterr().out
        assert "beta-sum dominance" in out and "[pass]" in out

    def test_unknown_suite_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["verify", "nonsense"])
        assert exc.value.code == 2

    def test_noise_factor_small_trials(self, capsys):
        assert main(["verify", "noise-factor", "--trials", "50000"]) == 0
        assert "fused-noise" in capsys.readouterr().out

    def test_all_aggregates_and_fails_on_any_red(self, monkeypatch, capsys):
        import pushdp.verify as verify
        from pushdp.verify import CheckResult

        ok = lambda: [CheckResult("stub-ok", True, 1.0, 1.0)]
        bad = lambda: [CheckResult("stub-bad", False, 0.0, 1.0)]
        monkeypatch.setattr(verify, "SUITES", {"a": ok, "b": ok})
        assert main(["verify", "all"]) == 0
        assert "2/2 checks passed" in capsys.readouterr().out
        monkeypatch.setattr(verify, "SUITES", {"a": ok, "b": bad})
        assert main(["verify", "all"]) == 1
        assert "[FAIL] stub-bad" in capsys.readouterr().out


class TestCliCalc:
    def test_tau_reports_discrepancy(self, capsys):
        assert main(["calc", "tau", "--theta", "0.5"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["tau"] == 5
        assert payload["paper_reported"] == 6

    def test_sigma_worked_example(self, capsys):
        code = main([
            "calc", "sigma", "--form", "power", "--s", "0.0", "--T", "1000",
            "--epsilon", "2", "--delta", "1e-5", "--ratio", "0.01",
            "--c1", "25", "--g", "0.1",
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert abs(payload["sigma"] - 0.05364) < 1e-5

    def test_sigma_regime_error_exits_one(self, capsys):
        code = main([
            "calc", "sigma", "--form", "power", "--s", "0.0", "--T", "1000",
            "--epsilon", "2", "--delta", "1e-5", "--ratio", "0.01",
        ])
        assert code == 1
        assert "c1" in capsys.readouterr().err

    def test_regime_label(self, capsys):
        code = main([
            "calc", "regime", "--p", "0", "--n", "8", "--T", "1000", "--s", "0.25",
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["regime"] == "(log T)^2 / sqrt(nT)"

    def test_mint_terms(self, capsys):
        code = main([
            "calc", "minT", "--n", "1", "--p", "0.5", "--K", "1",
            "--L", "1", "--C", "1", "--q", "0",
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["floor"] == 162

    def test_bound_runs(self, capsys):
        code = main([
            "calc", "bound", "--n", "4", "--eta", "1.0", "--T", "50",
            "--form", "power", "--s", "0.0", "--q", "0.5", "--F0", "1",
        ])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["total"] == pytest.approx(
            payload["fixed_term"] + payload["noise_term"] + payload["bias_term"]
        )
