import json

import numpy as np
import pytest

from hydrohist import cli
from hydrohist import scenarios as sc
from hydrohist.errors import ConfigurationError


def write_config(tmp_path, body, name="config.json"):
    path = tmp_path / name
    path.write_text(body if isinstance(body, str) else json.dumps(body))
    return path


def minimal(scenario, **extra):
    raw = {"schema_version": 1, "scenario": scenario}
    raw.update(extra)
    return raw


class TestLoadConfig:
    def test_minimal_diffusion_gets_defaults(self, tmp_path):
        cfg = sc.load_config(write_config(tmp_path, minimal("diffusion")))
        assert cfg.scenario == "diffusion"
        assert cfg.params["gamma"] == 1.0
        assert cfg.grid["n_q"] == 481
        assert cfg.seed is None

    def test_overrides_merge(self, tmp_path):
        raw = minimal("diffusion", params={"gamma": 0.5},
                      grid={"n_q": 241}, seed=3)
        cfg = sc.load_config(write_config(tmp_path, raw))
        assert cfg.params["gamma"] == 0.5
        assert cfg.params["M"] == 1.0
        assert cfg.grid["n_q"] == 241
        assert cfg.seed == 3

    def test_nonpositive_gamma_rejected(self, tmp_path):
        raw = minimal("diffusion", params={"gamma": 0})
        with pytest.raises(ConfigurationError, match="gamma must be positive"):
            sc.load_config(write_config(tmp_path, raw))

    def test_duplicate_key_rejected(self, tmp_path):
        body = '{"schema_version": 1, "scenario": "diffusion", ' \
               '"scenario": "diffusion"}'
        with pytest.raises(ConfigurationError, match="duplicate key"):
            sc.load_config(write_config(tmp_path, body))

    def test_invalid_json_reports_position(self, tmp_path):
        with pytest.raises(ConfigurationError, match="line"):
            sc.load_config(write_config(tmp_path, '{"scenario": '))

    def test_unknown_keys_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError, match="unknown config keys"):
            sc.load_config(write_config(
                tmp_path, minimal("diffusion", bogus=1)))
        with pytest.raises(ConfigurationError, match="unknown params keys"):
            sc.load_config(write_config(
                tmp_path, minimal("diffusion", params={"nope": 1})))

    def test_unknown_scenario_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError, match="unknown scenario"):
            sc.load_config(write_config(tmp_path, minimal("warp-drive")))

    def test_schema_version_checked(self, tmp_path):
        raw = {"schema_version": 99, "scenario": "diffusion"}
        with pytest.raises(ConfigurationError, match="schema_version"):
            sc.load_config(write_config(tmp_path, raw))

    def test_sampling_scenario_needs_seed(self, tmp_path):
        with pytest.raises(ConfigurationError, match="seed"):
            sc.load_config(write_config(tmp_path, minimal("ehrenfest")))

    def test_bad_seed_rejected(self, tmp_path):
        raw = minimal("ehrenfest", seed=-1)
        with pytest.raises(ConfigurationError, match="seed"):
            sc.load_config(write_config(tmp_path, raw))

    def test_missing_file(self):
        with pytest.raises(ConfigurationError, match="does not exist"):
            sc.load_config("/nonexistent/config.json")


class TestCatalog:
    def test_exactly_eight_scenarios(self):
        names = [n for n, _ in sc.list_scenarios()]
        assert names == [
            "diffusion", "maxwellization", "oracle-compare",
            "variance-scaling", "histories-nscaling", "ehrenfest",
            "conserved-decoherence", "local-equilibrium-peaking",
        ]

    def test_each_entry_states_a_relation(self):
        for _, description in sc.list_scenarios():
            assert "=" in description

    def test_catalog_stable(self):
        assert sc.list_scenarios() == sc.list_scenarios()

    def test_thresholds_single_sourced(self):
        cfg = sc.validate_config(minimal("variance-scaling"))
        assert cfg.threshold("slope_deviation") == \
            sc.SCENARIOS["variance-scaling"]["thresholds"]["slope_deviation"]


class TestRunScenario:
    def run(self, tmp_path, scenario, **extra):
        cfg = sc.validate_config(minimal(scenario, **extra))
        return sc.run_scenario(cfg, output_dir=tmp_path), tmp_path

    def test_variance_scaling_passes(self, tmp_path):
        report, out = self.run(tmp_path, "variance-scaling")
        assert report.passed
        assert (out / "variance_scaling.csv").exists()
        data = json.loads(
            (out / "variance-scaling-report.json").read_text())
        assert data["passed"] is True
        assert {m["name"] for m in data["metrics"]} == \
            {"closed_form_deviation", "slope_deviation"}

    def test_histories_nscaling_passes(self, tmp_path):
        report, _ = self.run(tmp_path, "histories-nscaling")
        assert report.passed
        by_name = {m.name: m.value for m in report.metrics}
        assert by_name["geometric_ratio"] < 1.0
        assert by_name["epsilon8_over_epsilon1"] < 0.1

    def test_conserved_decoherence_passes(self, tmp_path):
        report, out = self.run(tmp_path, "conserved-decoherence")
        assert report.passed
        assert report.metrics[0].value < 1e-12
        rows = (out / "conserved_decoherence.csv").read_text().strip()
        assert rows.splitlines()[0] == "n_times,max_offdiagonal"
        assert len(rows.splitlines()) == 3

    def test_peaking_passes(self, tmp_path):
        report, _ = self.run(tmp_path, "local-equilibrium-peaking")
        assert report.passed
        by_name = {m.name: m for m in report.metrics}
        assert by_name["epsilon"].comparator == "<"
        assert by_name["on_trajectory_fraction"].comparator == ">="

    def test_ehrenfest_reproducible_csv(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            cfg = sc.validate_config(minimal("ehrenfest", seed=11))
            sc.run_scenario(cfg, output_dir=out)
        assert (a / "ehrenfest.csv").read_bytes() == \
            (b / "ehrenfest.csv").read_bytes()

    def test_ehrenfest_narrow_sigma_fails_with_note(self, tmp_path):
        report, _ = self.run(tmp_path, "ehrenfest", seed=11,
                             params={"sigma_factor": 0.5})
        assert not report.passed
        assert any("precondition" in note for note in report.notes)

    def test_module_error_carries_scenario_context(self, tmp_path):
        cfg = sc.validate_config(
            minimal("diffusion", params={"t_start": 5.0, "t_end": 4.0,
                                         "n_times": 4}))
        with pytest.raises(Exception, match="scenario 'diffusion'"):
            sc.run_scenario(cfg, output_dir=tmp_path)


class TestCli:
    def test_list(self, capsys):
        assert cli.main(["list"]) == 0
        out = capsys.readouterr().out
        assert "diffusion:" in out and "ehrenfest:" in out

    def test_validate_ok(self, tmp_path, capsys):
        path = write_config(tmp_path, minimal("variance-scaling"))
        assert cli.main(["validate", str(path)]) == 0
        assert "valid" in capsys.readouterr().out

    def test_validate_bad(self, tmp_path, capsys):
        path = write_config(tmp_path, minimal("warp-drive"))
        assert cli.main(["validate", str(path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_run_pass_exit_zero(self, tmp_path, capsys):
        path = write_config(tmp_path, minimal("variance-scaling"))
        code = cli.main(["run", str(path), "--out", str(tmp_path / "o")])
        assert code == 0
        out = capsys.readouterr().out
        assert "pass" in out

    def test_run_quiet(self, tmp_path, capsys):
        path = write_config(tmp_path, minimal("variance-scaling"))
        code = cli.main(["run", str(path), "--out", str(tmp_path / "o"),
                         "--quiet"])
        assert code == 0
        assert capsys.readouterr().out == ""

    def test_run_failure_exit_one(self, tmp_path, capsys):
        raw = minimal("ehrenfest", seed=11, params={"sigma_factor": 0.5})
        path = write_config(tmp_path, raw)
        code = cli.main(["run", str(path), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out

    def test_run_missing_seed_exit_two(self, tmp_path, capsys):
        path = write_config(tmp_path, minimal("ehrenfest"))
        assert cli.main(["run", str(path)]) == 2

    def test_run_seed_flag_overrides(self, tmp_path):
        path = write_config(tmp_path, minimal("ehrenfest"))
        code = cli.main(["run", str(path), "--out", str(tmp_path / "o"),
                         "--seed", "11", "--quiet"])
        assert code == 0
        data = json.loads(
            (tmp_path / "o" / "ehrenfest-report.json").read_text())
        assert data["seed"] == 11
