import numpy as np
import pytest

from pushdp.config import DataSpec, ModelSpec
from pushdp.engine import build_dataset, build_model, run
from pushdp.errors import NumericalBreakdownError
from pushdp.fusion import ClipConfig, FusionConfig
from pushdp.privacy import LrSchedule, NoiseSchedule, beta_at
from pushdp.topology import TopologySchedule

from conftest import make_config, reference_dsgd


def degenerate_config(T=60, eta=0.05):
    """All error sources off: sigma = 0, no fusion, no clipping bite,
    constant alpha, doubly stochastic complete graph, full batches."""
    return make_config(
        algorithm="sdlr",
        T=T,
        theta=0.0,
        tau=1,
        sampling_ratio=1.0,
        topology=TopologySchedule(kind="static-ring", n=8, k=7),
        noise=NoiseSchedule(form="power", T=T, s=0.0, K=1.0, tau=1),
        lr=LrSchedule(eta_base=eta, xi=0.5),
        clip=ClipConfig(g0=1e9, psi=1.0),
        fusion=FusionConfig(theta=0.0, tau=1),
        sigma_override=0.0,
        data=DataSpec(kind="blobs", n_samples=160, test_fraction=0.0, alpha_conc=5.0),
    )


class TestDegenerateReduction:
    def test_matches_reference_dsgd(self):
        cfg = degenerate_config()
        result = run(cfg, master_seed=4, record_states=True)
        model = build_model(cfg, 4)
        dataset = build_dataset(cfg, 4)
        P = np.full((8, 8), 1.0 / 8.0)
        reference = reference_dsgd(model, dataset, dataset.node_indices, P, 0.05, cfg.T)
        worst = max(
            float(np.max(np.abs(engine_X - ref_X)))
            for engine_X, ref_X in zip(result.trajectory, reference)
        )
        assert worst <= 1e-10


class TestDeterminism:
    def test_bitwise_identical_records(self):
        cfg = make_config(T=40)
        a = run(cfg, master_seed=5)
        b = run(cfg, master_seed=5)
        assert all(x.as_dict() == y.as_dict() for x, y in zip(a.records, b.records))
        assert a.summary["sigma_per_node"] == b.summary["sigma_per_node"]

    def test_seed_changes_stream(self):
        cfg = make_config(T=20)
        a = run(cfg, master_seed=5)
        b = run(cfg, master_seed=6)
        assert any(x.as_dict() != y.as_dict() for x, y in zip(a.records, b.records))


class TestRecordedSchedules:
    def test_eta_matches_beta_exactly(self):
        cfg = make_config(T=50)
        result = run(cfg, master_seed=1)
        for rec in result.records:
            assert rec.eta_t == cfg.lr.eta_base / beta_at(cfg.noise, cfg.lr, rec.t)

    def test_alpha_injected_is_decaying_multiplier(self):
        cfg = make_config(T=30)
        result = run(cfg, master_seed=1)
        values = [rec.alpha_injected for rec in result.records]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_clip_threshold_decays_only_for_vrsgp(self):
        cfg = make_config(T=20, algorithm="adp-vrsgp")
        gs = [rec.current_g for rec in run(cfg, master_seed=2).records]
        assert gs[0] == 0.1 and gs[5] == pytest.approx(0.1 * 0.99**5, rel=1e-12)
        cfg_sdlr = make_config(T=20, algorithm="sdlr")
        gs = [rec.current_g for rec in run(cfg_sdlr, master_seed=2).records]
        assert set(gs) == {0.1}


class TestNoiselessDescent:
    def test_quadratic_monotone_and_converged(self):
        # homogeneous data (spread 0) so every local optimum coincides
        cfg = make_config(
            algorithm="sdlr",
            T=400,
            theta=0.0,
            tau=1,
            sampling_ratio=1.0,
            noise=NoiseSchedule(form="power", T=400, s=0.0, K=1.0, tau=1),
            lr=LrSchedule(eta_base=0.4, xi=0.5),
            clip=ClipConfig(g0=1e9, psi=1.0),
            fusion=FusionConfig(theta=0.0, tau=1),
            sigma_override=0.0,
            model=ModelSpec(kind="quadratic", features=3),
            data=DataSpec(kind="quadratic", n_samples=160, spread=0.0, alpha_conc=5.0),
        )
        result = run(cfg, master_seed=3)
        values = [rec.mean_sq_grad_norm for rec in result.records]
        assert values[-1] < 1e-6
        tail = values[30:]
        assert all(b <= a * (1 + 1e-9) + 1e-30 for a, b in zip(tail, tail[1:]))


class TestFailureModes:
    def test_nan_abort_names_iteration(self, tmp_path):
        # clipping saturates any gradient blow-up, so the guard's real job is
        # catching corrupt inputs: a NaN feature poisons the state at once
        path = tmp_path / "bad.csv"
        rows = ["f1,f2,label"] + [f"{0.1 * i},1.0,{i % 2}" for i in range(16)]
        rows[3] = "nan,1.0,1"
        path.write_text("\n".join(rows) + "\n")
        cfg = make_config(
            algorithm="sdlr",
            T=10,
            sampling_ratio=1.0,
            model=ModelSpec(kind="logistic", features=2),
            data=DataSpec(kind="csv", path=str(path), alpha_conc=5.0),
        )
        with pytest.raises(NumericalBreakdownError, match="iteration"):
            with np.errstate(over="ignore", invalid="ignore"):
                run(cfg, master_seed=0)

    def test_calibration_regime_error_propagates(self):
        # tiny sampling ratio at default c1 violates eps < c1*ratio^2*T
        cfg = make_config(T=20, sampling_ratio=0.01, epsilon=2.0)
        from pushdp.errors import CalibrationError

        with pytest.raises(CalibrationError, match="c1"):
            run(cfg, master_seed=0)

    def test_out_of_regime_theory_warns_and_continues(self):
        # the exponential rule's single-iteration graphs are not strongly
        # connected, so J=1 disables the calculators but the run proceeds
        cfg = make_config(
            T=15,
            topology=TopologySchedule(kind="exponential-periodic", n=8),
            theory_enabled=True,
            window_J=1,
        )
        result = run(cfg, master_seed=1)
        assert len(result.records) == 15
        theory = result.summary["theory"]
        assert theory["enabled"] and not theory["in_regime"]
        assert "disabled" in theory["warning"]

    def test_in_regime_theory_block_present(self):
        cfg = make_config(
            T=15,
            model=ModelSpec(kind="quadratic", features=3),
            data=DataSpec(kind="quadratic", n_samples=80, alpha_conc=5.0),
            theory_enabled=True,
        )
        result = run(cfg, master_seed=1)
        theory = result.summary["theory"]
        assert theory["in_regime"] and theory["warning"] is None
        assert theory["propagation"]["U"] == 3 and theory["propagation"]["kappa"] == 4
        assert theory["convergence_bound"]["total"] > 0
        assert result.summary["time_avg_mean_sq_grad_norm"] <= theory["convergence_bound"]["total"]


class TestSummary:
    def test_summary_fields_and_errata(self):
        cfg = make_config(T=12)
        summary = run(cfg, master_seed=9).summary
        assert summary["algorithm"] == "adp-vrsgp"
        assert len(summary["sigma_per_node"]) == 8
        assert summary["privacy_spent"][0]["label"] == "bound, constants-dependent"
        assert summary["errata"]["tau_intervals"]["rule_values"] == {"0.3": 3, "0.5": 5, "0.7": 8}
        assert summary["errata"]["tau_intervals"]["paper_reported"] == {"0.3": 12, "0.5": 6, "0.7": 4}
        assert summary["final_test_accuracy"] is not None

    def test_empty_node_flagged_and_survives(self):
        # alpha small enough to starve some node eventually; find a seed that
        # produces one and check the run still completes
        cfg = make_config(T=8, data=DataSpec(kind="blobs", n_samples=24, alpha_conc=0.05))
        for seed in range(30):
            result = run(cfg, master_seed=seed)
            if result.summary["empty_nodes"]:
                assert len(result.records) == 8
                return
        pytest.skip("no seed produced an empty node at this size")
