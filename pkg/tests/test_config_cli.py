"""Configuration parsing, validation, manifest and CLI surface tests."""

import json
from pathlib import Path

import numpy as np
import pytest

from catinsim.cli import EXIT_CONFIG, EXIT_OK, main
from catinsim.config import (
    ConfigError,
    ExperimentGrid,
    RunConfig,
    load_config,
    parse_config_text,
)
from catinsim.ensemble import load_records, read_manifest, run_ensemble, run_path


class TestConfigDefaults:
    def test_empty_file_gives_standard_parameters(self, tmp_path):
        p = tmp_path / "empty.cfg"
        p.write_text("")
        cfg = load_config(p)
        assert cfg.t_max == 4000
        assert cfg.margin_of_safety == 2.0
        assert cfg.var_exceedance == 0.005
        assert cfg.dividend_share == 0.4
        assert cfg.interest_rate == 0.001
        assert cfg.replications == 400
        assert cfg.initial_capital_insurer == 80_000.0
        assert cfg.initial_capital_reinsurer == 2_000_000.0
        assert cfg.initial_insurers == 20
        assert cfg.initial_reinsurers == 4
        assert cfg.entry_rate_insurer == 0.3
        assert cfg.entry_rate_reinsurer == 0.05
        assert cfg.employment_threshold_insurer == 0.6
        assert cfg.exit_time_insurer == 24
        assert cfg.employment_threshold_reinsurer == 0.4
        assert cfg.exit_time_reinsurer == 48
        assert cfg.event_rate == 0.03
        assert cfg.tail_exponent == 2.0
        assert cfg.n_regions == 4
        assert cfg.n_risks == 20_000
        assert cfg.risk_model_inaccuracy == 2.0
        assert cfg.premium_min_factor == 0.70
        assert cfg.premium_max_factor == 1.35
        assert cfg.sensitivity_insurance == 1.29e-9
        assert cfg.sensitivity_reinsurance == 1.55e-9
        assert cfg.burn_in == 1200

    def test_missing_path_is_error(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/path.cfg")

    def test_none_gives_defaults(self):
        assert load_config(None) == RunConfig().validate()


class TestConfigParsing:
    def test_key_values_and_comments(self):
        cfg = parse_config_text(
            """
            # horizon
            t_max = 100
            burn_in = 0
            diversity = 3
            reinsurance_enabled = false
            snapshot_steps = 10, 50
            """
        )
        assert cfg.t_max == 100
        assert cfg.diversity == 3
        assert cfg.reinsurance_enabled is False
        assert cfg.snapshot_steps == (10, 50)

    def test_unknown_key_named_in_error(self):
        with pytest.raises(ConfigError, match="not_a_real_key"):
            parse_config_text("not_a_real_key = 3")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("t_max = 10\nt_max = 20\nburn_in = 0")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="t_max"):
            parse_config_text("t_max = banana")

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config_text("what is this")


class TestValidation:
    def test_low_margin_rejected(self):
        with pytest.raises(ConfigError, match="margin_of_safety"):
            RunConfig(margin_of_safety=0.5).validate()

    def test_diversity_range(self):
        with pytest.raises(ConfigError, match="diversity"):
            RunConfig(diversity=5).validate()
        with pytest.raises(ConfigError, match="diversity"):
            RunConfig(diversity=0).validate()

    def test_alpha_range(self):
        with pytest.raises(ConfigError, match="var_exceedance"):
            RunConfig(var_exceedance=1.0).validate()

    def test_entry_probability_range(self):
        with pytest.raises(ConfigError, match="entry_rate_insurer"):
            RunConfig(entry_rate_insurer=1.2).validate()

    def test_reinsurer_capital_must_exceed_insurer(self):
        with pytest.raises(ConfigError, match="initial_capital_reinsurer"):
            RunConfig(initial_capital_reinsurer=1000.0).validate()

    def test_burn_in_within_horizon(self):
        with pytest.raises(ConfigError, match="burn_in"):
            RunConfig(t_max=100, burn_in=101).validate()
        RunConfig(t_max=100, burn_in=100).validate()  # boundary allowed


class TestGrid:
    def test_four_cells(self):
        grid = ExperimentGrid()
        cells = grid.configs(RunConfig().validate())
        labels = [cell.label for cell, _ in cells]
        assert labels == ["mu2_re", "mu2_nore", "mu1_re", "mu1_nore"]
        for cell, cfg in cells:
            assert cfg.margin_of_safety == cell.margin_of_safety
            assert cfg.reinsurance_enabled == cell.reinsurance_enabled


def tiny_config_text():
    return (
        "t_max = 50\n"
        "burn_in = 0\n"
        "n_risks = 800\n"
        "initial_insurers = 4\n"
        "initial_reinsurers = 2\n"
        "replications = 2\n"
        "snapshot_steps = 40\n"
    )


class TestEnsembleTree:
    def test_run_ensemble_layout_and_manifest(self, tmp_path):
        cfg = parse_config_text(tiny_config_text())
        out = tmp_path / "out"
        summary = run_ensemble(cfg, [1, 2], 2, out, workers=1)
        assert summary["runs"] == 4
        assert summary["failures"] == []
        manifest = read_manifest(out)
        assert manifest["settings"] == [1, 2]
        assert manifest["replications"] == 2
        # every resolved parameter appears in the manifest
        assert set(manifest["config"]) == set(RunConfig().as_dict())
        for setting in (1, 2):
            for rep in (0, 1):
                assert run_path(out, setting, rep).exists()

    def test_load_records_round_trip(self, tmp_path):
        cfg = parse_config_text(tiny_config_text())
        out = tmp_path / "out"
        run_ensemble(cfg, [1], 2, out, workers=1)
        records = load_records(out)
        assert sorted(records) == [1]
        assert len(records[1]) == 2
        assert records[1][0].series["step"].shape == (50,)

    def test_rerun_byte_identical(self, tmp_path):
        cfg = parse_config_text(tiny_config_text())
        a, b = tmp_path / "a", tmp_path / "b"
        run_ensemble(cfg, [1], 2, a, workers=1)
        run_ensemble(cfg, [1], 2, b, workers=2)
        for rep in (0, 1):
            assert (
                run_path(a, 1, rep).read_bytes() == run_path(b, 1, rep).read_bytes()
            )
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()


class TestCli:
    def test_validate_config_ok(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text(tiny_config_text())
        assert main(["validate-config", "--config", str(p)]) == EXIT_OK
        echoed = json.loads(capsys.readouterr().out)
        assert echoed["t_max"] == 50

    def test_validate_config_bad_exit_code(self, tmp_path, capsys):
        p = tmp_path / "c.cfg"
        p.write_text("margin_of_safety = 0.5")
        assert main(["validate-config", "--config", str(p)]) == EXIT_CONFIG

    def test_unknown_key_exit_code(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("frobnicate = 1")
        assert main(["validate-config", "--config", str(p)]) == EXIT_CONFIG

    def test_simulate_then_analyze(self, tmp_path, capsys):
        cfgp = tmp_path / "c.cfg"
        cfgp.write_text(tiny_config_text())
        out = tmp_path / "runs"
        rc = main(
            ["simulate", "--config", str(cfgp), "--settings", "1,2",
             "--replications", "2", "--out", str(out), "--seed", "3"]
        )
        assert rc == EXIT_OK
        assert json.loads((out / "manifest.json").read_text())["master_seed"] == 3

        analysis = tmp_path / "analysis"
        rc = main(["analyze", "--in", str(out), "--out", str(analysis), "--no-figures"])
        assert rc == EXIT_OK
        assert (analysis / "summary.csv").exists()
        assert (analysis / "cascades_setting_1.csv").exists()
        assert (analysis / "bands_premium_insurance.csv").exists()

    def test_analyze_renders_figures(self, tmp_path):
        cfgp = tmp_path / "c.cfg"
        cfgp.write_text(tiny_config_text())
        out = tmp_path / "runs"
        main(["simulate", "--config", str(cfgp), "--settings", "1",
              "--replications", "2", "--out", str(out)])
        analysis = tmp_path / "analysis"
        rc = main(["analyze", "--in", str(out), "--out", str(analysis)])
        assert rc == EXIT_OK
        figures = list((analysis / "figures").glob("*.png"))
        assert figures, "figure rendering produced no files"

    def test_out_dir_env_fallback(self, tmp_path, monkeypatch):
        cfgp = tmp_path / "c.cfg"
        cfgp.write_text(tiny_config_text())
        target = tmp_path / "from-env"
        monkeypatch.setenv("CATINSIM_OUT", str(target))
        rc = main(["simulate", "--config", str(cfgp), "--settings", "1",
                   "--replications", "1"])
        assert rc == EXIT_OK
        assert (target / "manifest.json").exists()

    def test_no_reinsurance_flag(self, tmp_path):
        cfgp = tmp_path / "c.cfg"
        cfgp.write_text(tiny_config_text())
        out = tmp_path / "nore"
        main(["simulate", "--config", str(cfgp), "--settings", "1",
              "--replications", "1", "--out", str(out), "--no-reinsurance"])
        manifest = read_manifest(out)
        assert manifest["config"]["reinsurance_enabled"] is False
        records = load_records(out)
        assert records[1][0].series["active_reinsurers"].max() == 0

    def test_missing_out_dir_is_config_error(self, tmp_path, monkeypatch):
        monkeypatch.delenv("CATINSIM_OUT", raising=False)
        cfgp = tmp_path / "c.cfg"
        cfgp.write_text(tiny_config_text())
        assert main(["simulate", "--config", str(cfgp), "--settings", "1"]) == EXIT_CONFIG
