import json
import math

import pytest

from modebell.cli import main as cli_main
from modebell.errors import ConfigError, SectorError
from modebell.scenarios import (
    AtomConfig,
    ExperimentConfig,
    OscillatorConfig,
    PhotonConfig,
    TpsConfig,
    load_config,
    run_atom_scenario,
    run_oscillator_demo,
    run_photon_scenario,
    run_tps_demo,
)

TSIRELSON = 2.0 * math.sqrt(2.0)


def quiet(**kwargs) -> ExperimentConfig:
    return ExperimentConfig(figures=False, out_dir=None, **kwargs)


class TestPhotonScenario:
    def test_default_exact_run(self):
        report = run_photon_scenario(quiet(scenario="photon"))
        bits = [s["bits"] for s in report.stage_entropies]
        assert bits[0] == pytest.approx(0.0, abs=1e-9)
        assert bits[1] == pytest.approx(1.0, abs=1e-9)
        assert bits[2] == pytest.approx(1.0, abs=1e-9)
        assert report.extras["bell_state_fidelity"] >= 1.0 - 1e-12
        assert report.chsh["s_value"] == pytest.approx(TSIRELSON, abs=1e-6)

    def test_closed_splitter_creates_nothing(self):
        config = quiet(scenario="photon", photon=PhotonConfig(theta=0.0))
        report = run_photon_scenario(config)
        assert report.stage_entropies[1]["bits"] == pytest.approx(0.0, abs=1e-9)
        assert abs(report.chsh["s_value"]) <= 2.0 + 1e-9

    def test_explicit_angles(self):
        angles = [0.0, math.pi / 4, 5 * math.pi / 8, 3 * math.pi / 8]
        config = quiet(
            scenario="photon",
            photon=PhotonConfig(angle_source="explicit", angles=angles),
        )
        report = run_photon_scenario(config)
        assert report.chsh["angles"] == angles
        assert report.chsh["s_value"] == pytest.approx(TSIRELSON, abs=1e-9)

    def test_sampled_outputs_are_deterministic(self, tmp_path):
        base = dict(scenario="photon", seed=123, shots=4000, mode="sampled", figures=False)
        r1 = run_photon_scenario(ExperimentConfig(out_dir=str(tmp_path / "a"), **base))
        r2 = run_photon_scenario(ExperimentConfig(out_dir=str(tmp_path / "b"), **base))
        csv1 = (tmp_path / "a" / "shots.csv").read_bytes()
        csv2 = (tmp_path / "b" / "shots.csv").read_bytes()
        assert csv1 == csv2
        assert r1.chsh == r2.chsh
        report1 = json.loads((tmp_path / "a" / "report.json").read_text())
        report2 = json.loads((tmp_path / "b" / "report.json").read_text())
        report1.pop("wall_clock_s"), report2.pop("wall_clock_s")
        assert report1 == report2


class TestAtomScenario:
    def test_large_reference_violates_bell(self):
        config = quiet(scenario="atom", atom=AtomConfig(nbar=32.0))
        report = run_atom_scenario(config)
        assert report.extras["trap_purity"] == pytest.approx(1.0, abs=1e-10)
        bits = [s["bits"] for s in report.stage_entropies]
        assert all(b == pytest.approx(1.0, abs=1e-9) for b in bits)
        assert report.chsh["s_value"] > 2.0

    def test_stark_phase_does_not_change_the_optimum(self):
        s_values = []
        for phi in (0.0, math.pi):
            config = quiet(scenario="atom", atom=AtomConfig(nbar=8.0, stark_phi=phi))
            report = run_atom_scenario(config)
            s_values.append(report.extras["s_optimum"])
        assert s_values[0] == pytest.approx(s_values[1], abs=1e-6)

    def test_no_reference_capped_at_two(self):
        config = quiet(scenario="atom", atom=AtomConfig(reservoir_kind="none"))
        report = run_atom_scenario(config)
        assert report.chsh["s_value"] <= 2.0 + 1e-9

    def test_full_capability_reaches_tsirelson(self):
        config = quiet(scenario="atom", atom=AtomConfig(capability="full"))
        report = run_atom_scenario(config)
        assert report.chsh["s_value"] == pytest.approx(TSIRELSON, abs=1e-6)

    def test_sweep_reports_threshold(self, tmp_path):
        config = ExperimentConfig(
            scenario="atom",
            figures=False,
            out_dir=str(tmp_path),
            atom=AtomConfig(nbar=8.0, nbar_sweep=[1.0, 4.0, 16.0]),
        )
        report = run_atom_scenario(config)
        sweep = report.extras["nbar_sweep"]
        values = [row["s_star"] for row in sweep]
        assert values == sorted(values)
        assert report.extras["violation_threshold_nbar"] == 4.0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "parameter,value"
        assert len(lines) == 4

    def test_explicit_cutoff_below_floor_is_raised_to_floor(self):
        config = quiet(
            scenario="atom", atom=AtomConfig(nbar=8.0, reservoir_cutoff=10)
        )
        report = run_atom_scenario(config)
        assert report.extras["reservoir_cutoff"] == 31

    def test_sampled_mode_runs_with_reservoirs(self):
        config = quiet(scenario="atom", mode="sampled", shots=500, seed=5)
        report = run_atom_scenario(config)
        assert report.chsh["shots"] == 500
        assert abs(report.chsh["s_value"]) <= 4.0


class TestTpsScenario:
    def test_default_demo(self):
        report = run_tps_demo(quiet(scenario="tps-demo"))
        assert report.extras["photon_entropy_hv_bits"] == pytest.approx(1.0, abs=1e-10)
        assert report.extras["photon_entropy_rotated_bits"] < 1e-10
        assert report.extras["demo_entropy_canonical_bits"] == pytest.approx(1.0, abs=1e-10)
        assert report.extras["demo_entropy_factorized_bits"] < 1e-10
        assert report.extras["factorized_count"] == 20

    def test_d6_random_states_all_factorize(self):
        config = quiet(scenario="tps-demo", tps=TpsConfig(dim=6, random_states=20))
        report = run_tps_demo(config)
        assert report.extras["factors"] == [2, 3]
        assert report.extras["factorized_count"] == 20
        assert report.extras["max_residual_lambda2"] < 1e-8

    def test_prime_dimension_rejected_cleanly(self):
        config = quiet(scenario="tps-demo", tps=TpsConfig(dim=5))
        with pytest.raises(ConfigError, match="nonprime"):
            run_tps_demo(config)

    def test_inconsistent_factors_rejected(self):
        config = quiet(scenario="tps-demo", tps=TpsConfig(dim=6, factor_m=2, factor_n=2))
        with pytest.raises(ConfigError, match="nonprime"):
            run_tps_demo(config)


class TestOscillatorScenario:
    def test_uncoupled_point_is_unentangled(self):
        config = quiet(
            scenario="oscillator-demo",
            oscillator=OscillatorConfig(cutoff=12, coupling_ratios=[0.0]),
        )
        report = run_oscillator_demo(config)
        row = report.extras["rows"][0]
        assert row["entropy_bits"] == pytest.approx(0.0, abs=1e-10)
        assert row["normal_mode_bits"] == pytest.approx(0.0, abs=1e-10)

    def test_sweep_is_monotone_and_matches_analytic(self, tmp_path):
        config = ExperimentConfig(
            scenario="oscillator-demo",
            figures=False,
            out_dir=str(tmp_path),
            oscillator=OscillatorConfig(cutoff=24, coupling_ratios=[0.1, 0.3, 0.5, 0.7]),
        )
        report = run_oscillator_demo(config)
        rows = report.extras["rows"]
        values = [r["entropy_bits"] for r in rows]
        assert values == sorted(values)
        assert report.extras["max_analytic_mismatch"] <= 1e-3
        assert report.extras["max_normal_mode_bits"] < 1e-6
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "parameter,value"
        assert len(lines) == 5

    def test_instability_rejected(self):
        config = quiet(
            scenario="oscillator-demo",
            oscillator=OscillatorConfig(coupling_ratios=[1.2]),
        )
        with pytest.raises(SectorError, match="unstable"):
            run_oscillator_demo(config)


class TestConfig:
    def test_hash_tracks_semantic_fields_only(self):
        base = ExperimentConfig(scenario="photon")
        assert base.hash() == ExperimentConfig(scenario="photon", out_dir="/x").hash()
        assert base.hash() == ExperimentConfig(scenario="photon", figures=False).hash()
        assert base.hash() != ExperimentConfig(scenario="photon", seed=8).hash()
        assert base.hash() != ExperimentConfig(
            scenario="photon", photon=PhotonConfig(theta=0.1)
        ).hash()
        # inactive sections do not affect the active scenario's hash
        assert base.hash() == ExperimentConfig(
            scenario="photon", atom=AtomConfig(nbar=99.0)
        ).hash()

    def test_round_trip_through_dict(self):
        config = ExperimentConfig(scenario="atom", seed=3, atom=AtomConfig(nbar=2.0))
        back = ExperimentConfig.from_dict(config.to_dict())
        assert back == config

    def test_unknown_fields_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict({"scenario": "photon", "typo": 1})
        with pytest.raises(ConfigError, match="unknown"):
            ExperimentConfig.from_dict({"scenario": "photon", "atom": {"nbarr": 2}})

    def test_validation_messages_name_fields(self):
        with pytest.raises(ConfigError, match="shots"):
            ExperimentConfig(scenario="photon", shots=0).validate()
        with pytest.raises(ConfigError, match="angles"):
            ExperimentConfig(
                scenario="photon", photon=PhotonConfig(angle_source="explicit")
            ).validate()
        with pytest.raises(ConfigError, match="scenario"):
            ExperimentConfig(scenario="banana").validate()

    def test_load_config_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "missing.json"))
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(str(bad))


class TestCli:
    def test_happy_path_exit_zero(self, tmp_path, capsys):
        rc = cli_main(
            ["tps", "--out", str(tmp_path / "run"), "--no-figures", "--seed", "1"]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "tps-demo" in out
        assert (tmp_path / "run" / "report.json").exists()

    def test_config_error_exit_two(self, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"scenario": "tps-demo", "tps": {"dim": 7}}))
        rc = cli_main(
            ["tps", "--config", str(config), "--out", str(tmp_path / "o"), "--no-figures"]
        )
        assert rc == 2
        assert "config error" in capsys.readouterr().err

    def test_sector_error_exit_three(self, tmp_path, capsys):
        config = tmp_path / "unstable.json"
        config.write_text(
            json.dumps(
                {"scenario": "oscillator-demo", "oscillator": {"coupling_ratios": [1.5]}}
            )
        )
        rc = cli_main(
            ["oscillator", "--config", str(config), "--out", str(tmp_path / "o"),
             "--no-figures"]
        )
        assert rc == 3
        assert "physics-sector error" in capsys.readouterr().err

    def test_print_config_is_full_and_parseable(self, capsys):
        rc = cli_main(["atom", "--print-config", "--seed", "9"])
        assert rc == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["scenario"] == "atom"
        assert printed["seed"] == 9
        assert printed["atom"]["nbar"] == 8.0
        assert printed["oscillator"]["cutoff"] == 24

    def test_cli_overrides_config_file(self, tmp_path, capsys):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"scenario": "photon", "seed": 1, "mode": "sampled"}))
        rc = cli_main(
            ["photon", "--config", str(config), "--seed", "2", "--exact",
             "--print-config"]
        )
        assert rc == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed["seed"] == 2
        assert printed["mode"] == "exact"

    def test_figures_written_by_default(self, tmp_path):
        rc = cli_main(["oscillator", "--out", str(tmp_path / "fig")])
        assert rc == 0
        assert (tmp_path / "fig" / "oscillator.png").exists()
        assert (tmp_path / "fig" / "sweep.csv").exists()
