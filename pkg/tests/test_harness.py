import dataclasses
import json
import os

import numpy as np
import pytest

import fpesn.harness as harness
from fpesn.cli import main
from fpesn.dynamics import Trajectory
from fpesn.errors import ConfigError, MalformedFileError
from fpesn.fixed_point import ObservationSet
from fpesn.harness import (
    default_config,
    emit_report,
    export_series,
    generate_truth,
    import_series,
    load_config,
    load_report,
    make_observations,
    run_experiment,
    save_config,
    sweep,
)


def tiny_config(**overrides):
    """Desk-scale config that runs in a couple of seconds."""
    base = dict(t_len=1200, n_latent=150, missing_fraction=0.6, washout=100,
                max_iter=8, reservoir_seed=1, mask_seed=2, dynamics_seed=3)
    base.update(overrides)
    return default_config("mackey_glass", **base)


class TestConfig:
    def test_default_config_validates_system(self):
        with pytest.raises(ConfigError):
            default_config("unknown_system")

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError):
            default_config("mackey_glass", bogus=1)

    def test_save_load_roundtrip(self, tmp_path):
        cfg = tiny_config(missing_fraction=0.87, relaxation=0.35,
                          ridge=3e-8, normalize_inputs=True)
        path = tmp_path / "run.ini"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini")

    def test_load_requires_system(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[experiment]\nt_len = 100\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_partial_file_uses_defaults(self, tmp_path):
        path = tmp_path / "minimal.ini"
        path.write_text("[experiment]\nsystem = lorenz96\n")
        cfg = load_config(path)
        assert cfg.system == "lorenz96"
        assert cfg.reservoir.n_target == 6
        assert cfg.fixed_point.normalize_inputs

    def test_system_wiring(self):
        partial = default_config("lorenz63_partial")
        assert (partial.reservoir.n_target, partial.reservoir.n_exo) == (1, 1)
        full = default_config("lorenz63_full")
        assert (full.reservoir.n_target, full.reservoir.n_exo) == (3, 0)
        vdp = default_config("vdp")
        assert (vdp.reservoir.n_target, vdp.reservoir.n_exo) == (1, 1)


class TestSeriesIO:
    def test_trajectory_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        traj = Trajectory(y=rng.standard_normal((40, 2)),
                          u=rng.standard_normal((40, 1)), dt=0.25)
        path = tmp_path / "traj.csv"
        export_series(path, traj)
        back = import_series(path)
        assert isinstance(back, Trajectory)
        assert np.array_equal(back.y, traj.y)
        assert np.array_equal(back.u, traj.u)
        assert back.dt == 0.25

    def test_observation_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        y = rng.standard_normal((30, 2))
        mask = rng.random((30, 2)) > 0.5
        mask[0] = True
        obs = ObservationSet.from_dense(y, mask, u=rng.standard_normal((30, 1)))
        path = tmp_path / "obs.csv"
        export_series(path, obs)
        back = import_series(path)
        assert isinstance(back, ObservationSet)
        assert np.array_equal(back.mask, obs.mask)
        assert np.array_equal(back.y_obs[back.mask], obs.y_obs[obs.mask])
        assert np.array_equal(back.u, obs.u)

    def test_hand_written_file(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text(
            "t,y_1,m_1\n"
            "0,1.5,1\n"
            "1,,0\n"
            "2,2.5,1\n"
            "3,,0\n"
            "4,-1.25,1\n")
        obs = import_series(path)
        assert isinstance(obs, ObservationSet)
        assert obs.y_obs.shape == (5, 1)
        np.testing.assert_array_equal(obs.mask[:, 0], [1, 0, 1, 0, 1])
        np.testing.assert_array_equal(obs.y_obs[obs.mask], [1.5, 2.5, -1.25])

    def test_short_row_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,y_1,m_1\n0,1.0,1\n1,0.5\n")
        with pytest.raises(MalformedFileError, match="bad.csv:3"):
            import_series(path)

    def test_mask_value_disagreement_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,y_1,m_1\n0,1.0,1\n1,0.5,0\n")
        with pytest.raises(MalformedFileError, match="mismatch"):
            import_series(path)

    def test_unparseable_number_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,y_1,m_1\n0,1.0,1\n1,abc,1\n")
        with pytest.raises(MalformedFileError, match="bad.csv:3"):
            import_series(path)


class TestExperiment:
    def test_runs_and_reports(self):
        result = run_experiment(tiny_config())
        assert result.iterations == len(result.improvements)
        assert np.isfinite(result.metrics.nrmse)
        assert result.metrics.sigma_lin < 1.0
        assert result.wall_time > 0

    def test_seed_isolation_mask_vs_dynamics(self):
        cfg_a = tiny_config(mask_seed=2)
        cfg_b = tiny_config(mask_seed=99)
        truth_a = generate_truth(cfg_a)
        truth_b = generate_truth(cfg_b)
        assert np.array_equal(truth_a.y, truth_b.y)
        obs_a = make_observations(cfg_a, truth_a)
        obs_b = make_observations(cfg_b, truth_b)
        assert not np.array_equal(obs_a.mask, obs_b.mask)

    def test_bitwise_reproducible(self):
        a = run_experiment(tiny_config())
        b = run_experiment(tiny_config())
        assert a.metrics == b.metrics
        assert np.array_equal(a.improvements, b.improvements)

    def test_ensemble_statistics(self):
        result = run_experiment(tiny_config(ensemble=3, max_iter=6))
        s = result.ensemble_summary
        assert s.n_members == 3
        assert len(s.members) == 3
        seeds = {m["reservoir_seed"] for m in s.members}
        assert len(seeds) == 3
        converged = [m for m in s.members if m["converged"]]
        if converged:
            assert np.isfinite(s.mean_sigma_lin)
        assert s.n_excluded == 3 - len(converged)

    def test_partial_observation_wiring(self):
        cfg = default_config("lorenz63_partial", t_len=900, n_latent=100,
                            max_iter=4, washout=80)
        truth = generate_truth(cfg)
        assert truth.y.shape[1] == 1
        assert truth.u.shape[1] == 1
        full = generate_truth(default_config("lorenz63_full", t_len=900,
                                             n_latent=100))
        np.testing.assert_array_equal(truth.y[:, 0], full.y[:, 0])
        np.testing.assert_array_equal(truth.u[:, 0], full.y[:, 2])


class TestSweep:
    def test_grid_of_one_matches_run_experiment(self):
        cfg = tiny_config(max_iter=5)
        cells = sweep(cfg, {"relaxation": [cfg.relaxation]})
        assert len(cells) == 1
        assert cells[0]["error"] is None
        direct = run_experiment(cfg)
        assert cells[0]["result"].metrics == direct.metrics

    def test_multi_axis_grid(self):
        cfg = tiny_config(max_iter=3, n_latent=80)
        cells = sweep(cfg, {"relaxation": [0.3, 0.5], "ridge": [1e-6]})
        assert len(cells) == 2
        params = {tuple(sorted(c["params"].items())) for c in cells}
        assert len(params) == 2
        for cell in cells:
            assert cell["error"] is None or cell["result"] is None

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ConfigError):
            sweep(tiny_config(), {"nonsense": [1]})

    def test_n_latent_cells_produce_results(self):
        cfg = tiny_config(max_iter=3)
        cells = sweep(cfg, {"n_latent": [60, 120]})
        assert all(c["result"] is not None for c in cells)


class TestReport:
    def test_roundtrip_and_schema(self, tmp_path):
        result = run_experiment(tiny_config(max_iter=5))
        path = tmp_path / "report.json"
        emit_report(result, path)
        back = load_report(path)
        assert back["version"]
        assert back["config"]["system"] == "mackey_glass"
        assert back["iterations"] == len(back["improvements"])
        assert back["metrics"]["sigma_lin"] == result.metrics.sigma_lin

    def test_schema_validation_rejects_missing_keys(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"version": "0"}))
        with pytest.raises(MalformedFileError, match="missing report keys"):
            load_report(path)

    def test_history_length_mismatch_rejected(self, tmp_path):
        result = run_experiment(tiny_config(max_iter=4))
        path = tmp_path / "report.json"
        emit_report(result, path)
        payload = json.loads(path.read_text())
        payload["iterations"] += 1
        path.write_text(json.dumps(payload))
        with pytest.raises(MalformedFileError, match="length"):
            load_report(path)


class TestCli:
    def _write_cfg(self, tmp_path, **overrides):
        cfg = tiny_config(**overrides)
        path = tmp_path / "run.ini"
        save_config(cfg, path)
        return path

    def test_bad_config_exit_code(self, tmp_path, capsys):
        missing = tmp_path / "none.ini"
        assert main(["gen", "--config", str(missing),
                     "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_gen_mask_baseline_pipeline(self, tmp_path, capsys):
        cfg_path = self._write_cfg(tmp_path)
        out = str(tmp_path / "run")
        assert main(["gen", "--config", str(cfg_path), "--out", out]) == 0
        assert main(["mask", "--config", str(cfg_path), "--out", out]) == 0
        assert main(["baseline", "--config", str(cfg_path), "--out", out]) == 0
        for name in ("truth.csv", "observations.csv", "baseline_linear.csv",
                     "baseline_spline.csv"):
            assert os.path.exists(os.path.join(out, name))
        obs = import_series(os.path.join(out, "observations.csv"))
        assert obs.missing_fraction == pytest.approx(0.6, abs=0.01)

    def test_reconstruct_report_and_series_table(self, tmp_path, capsys):
        cfg_path = self._write_cfg(tmp_path, max_iter=5)
        out = str(tmp_path / "run")
        assert main(["reconstruct", "--config", str(cfg_path),
                     "--out", out]) == 0
        report = load_report(os.path.join(out, "report.json"))
        assert report["config"]["t_len"] == 1200
        assert main(["report", "--config", str(cfg_path), "--out", out]) == 0
        series = open(os.path.join(out, "series.csv")).read().splitlines()
        assert series[0].split(",")[:3] == ["t", "truth_1", "observed_1"]
        assert len(series) == 1202

    def test_omega_flag_overrides_config(self, tmp_path, capsys):
        cfg_path = self._write_cfg(tmp_path)
        out = str(tmp_path / "run")
        assert main(["mask", "--config", str(cfg_path), "--out", out,
                     "--omega", "0.9"]) == 0
        obs = import_series(os.path.join(out, "observations.csv"))
        assert obs.missing_fraction == pytest.approx(0.9, abs=0.01)

    def test_sweep_verb(self, tmp_path, capsys):
        cfg_path = self._write_cfg(tmp_path, max_iter=3, n_latent=80)
        out = str(tmp_path / "run")
        assert main(["sweep", "--config", str(cfg_path), "--out", out,
                     "--grid", "leak=0.4,0.6"]) == 0
        cells = json.loads(open(os.path.join(out, "sweep.json")).read())
        assert len(cells) == 2
        assert {c["params"]["leak"] for c in cells} == {0.4, 0.6}

    def test_sweep_requires_grid(self, tmp_path, capsys):
        cfg_path = self._write_cfg(tmp_path)
        assert main(["sweep", "--config", str(cfg_path),
                     "--out", str(tmp_path)]) == 2

    def test_jacobian_verb(self, tmp_path, capsys):
        cfg_path = self._write_cfg(tmp_path, max_iter=4)
        out = str(tmp_path / "run")
        assert main(["jacobian", "--config", str(cfg_path), "--out", out,
                     "--window", "120"]) == 0
        reports = json.loads(open(os.path.join(out, "jacobian.json")).read())
        assert len(reports) == 1
        rep = reports[0]
        assert rep["l1_norm"] >= rep["relaxation"]
        assert np.isfinite(rep["sufficient_condition_lhs"])
        assert np.isfinite(rep["z_identity_bound_lhs"])


class TestAtomicWrites:
    def test_no_temp_left_behind(self, tmp_path):
        cfg = tiny_config()
        save_config(cfg, tmp_path / "a.ini")
        assert [p.name for p in tmp_path.iterdir()] == ["a.ini"]
