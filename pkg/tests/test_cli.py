import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from bvsmcmc.cli import compare_samplers, main, run_experiment
from bvsmcmc.config import (
    ConfigError,
    DataConfig,
    ExperimentConfig,
    PriorConfig,
    dump_config,
    load_config,
)
from bvsmcmc.diagnostics import read_pips_csv
from bvsmcmc.linmodel import enumerate_posterior


def _write(path, cfg: dict):
    path.write_text(yaml.safe_dump(cfg))
    return path


SMALL = {"data": {"preset": "snr2_small"}, "prior": {"preset": "yang"}}


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert (cfg.sampler, cfg.L, cfg.prior.build(100).g) == ("parni_kw", 25, 9.0)
        assert cfg.prior.build(100).h == pytest.approx(0.1)

    @pytest.mark.parametrize(
        "change",
        [
            {"sampler": "gibbs"},
            {"balancing": "metropolis"},
            {"burn_in": 10, "iterations": 10},
            {"sampler": "parni_kw", "L": 1},
            {"tau": 1.0},
            {"colour": "red"},
            {"data": {"source": "csv"}},
            {"data": {"preset": "huge"}},
            {"prior": {"preset": "nope"}},
        ],
    )
    def test_invalid(self, change):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(change)

    def test_round_trip(self):
        cfg = ExperimentConfig.from_dict(
            {"data": {"source": "sim", "preset": None, "n": 80, "p": 12, "snr": 1.0}, "sampler": "arni", "s": 3.0}
        )
        again = ExperimentConfig.from_dict(yaml.safe_load(dump_config(cfg)))
        assert again == cfg
        assert dump_config(again) == dump_config(cfg)

    def test_explicit_fields_override_preset(self):
        spec = DataConfig(preset="snr2_small", n=50).sim_spec()
        assert (spec.n, spec.p) == (50, 10)

    def test_tecator_preset(self):
        pr = PriorConfig(preset="tecator_like").build(100)
        assert (pr.g, pr.v_form, pr.h) == (100.0, "identity", 0.05)

    def test_pcr_preset(self):
        pr = PriorConfig(preset="pcr_like").build(105)
        assert (pr.model_prior, pr.a, pr.b) == ("betabinomial", 1.0, 20.0)

    def test_bad_prior_value(self):
        with pytest.raises(ConfigError):
            PriorConfig(g=-1.0).build(10)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = ExperimentConfig.from_dict({**SMALL, "L": 4, "iterations": 5000, "burn_in": 1000, "seed": 1})
    return cfg, run_experiment(cfg, out), out


class TestRunExperiment:
    def test_files_and_accuracy(self, small_run):
        cfg, run, out = small_run
        for name in ("pips.csv", "trace.jsonl", "summary.json"):
            assert (out / name).is_file()
        data = cfg.data.build()
        exact = enumerate_posterior(data, cfg.prior.build(data.p)).pips
        np.testing.assert_allclose(read_pips_csv(out / "pips.csv"), exact, atol=0.02)

    def test_summary_traces_defaults(self, small_run):
        _, _, out = small_run
        s = json.loads((out / "summary.json").read_text())
        assert s["n"] == 200 and s["p"] == 10 and s["L"] == 4 and s["seed"] == 1
        assert s["config"]["sampler"] == "parni_kw"
        assert {"L", "g", "pi0", "eps"} <= set(s["defaults"])

    def test_rerun_is_byte_identical(self, small_run, tmp_path):
        cfg, _, out = small_run
        run_experiment(cfg.replace(workers=3), tmp_path)
        for name in ("pips.csv", "trace.jsonl"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()

    def test_csv_source(self, tmp_path):
        assert main(["simulate", "--n", "60", "--p", "10", "--snr", "2", "--seed", "3", "--out", str(tmp_path / "d.csv")]) == 0
        cfg = _write(
            tmp_path / "c.yaml",
            {"data": {"source": "csv", "path": "d.csv", "response": "y"}, "sampler": "asi", "L": 2,
             "iterations": 50, "burn_in": 10},
        )
        assert main(["run", str(cfg), "--output-dir", str(tmp_path / "o")]) == 0
        assert len(read_pips_csv(tmp_path / "o" / "pips.csv")) == 10


class TestMain:
    def test_invalid_sampler_exit_code(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.yaml", {**SMALL, "sampler": "gibbs"})
        assert main(["run", str(cfg)]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "config" and "gibbs" in err["message"]

    def test_missing_config_file(self, tmp_path):
        assert main(["run", str(tmp_path / "none.yaml")]) == 2

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        cfg = _write(tmp_path / "c.yaml", {"data": {"source": "csv", "path": "gone.csv", "response": "y"}})
        assert main(["run", str(cfg)]) == 1
        assert "gone.csv" in json.loads(capsys.readouterr().err)["message"]

    def test_usage_error_from_argparse(self):
        with pytest.raises(SystemExit) as e:
            main(["run"])
        assert e.value.code == 2

    def test_env_output_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BVSMCMC_OUTPUT_DIR", str(tmp_path / "env"))
        cfg = _write(tmp_path / "c.yaml", {**SMALL, "sampler": "asi", "L": 2, "iterations": 20, "burn_in": 5})
        assert main(["run", str(cfg), "--seed", "4"]) == 0
        assert json.loads((tmp_path / "env" / "summary.json").read_text())["seed"] == 4

    def test_console_script(self, tmp_path):
        r = subprocess.run(
            [sys.executable, "-m", "bvsmcmc.cli", "simulate", "--n", "20", "--p", "9", "--snr", "1", "--out",
             str(tmp_path / "x.csv")],
            capture_output=True,
            text=True,
        )
        assert r.returncode == 2
        assert "p must be at least 10" in json.loads(r.stderr)["message"]


class TestCompare:
    def test_baseline_row_is_zero(self, tmp_path):
        cfg = ExperimentConfig.from_dict({**SMALL, "sampler": "asi", "L": 2, "iterations": 200, "burn_in": 50})
        rows = compare_samplers([cfg, cfg], "exact", tmp_path)
        assert [r["sampler"] for r in rows] == ["asi", "asi#2"]
        assert rows[0]["log10_rel_important"] == 0.0
        assert rows[1]["log10_rel_important"] == 0.0
        lines = (tmp_path / "comparison.csv").read_text().splitlines()
        assert lines[0].startswith("sampler,mse_important")

    def test_requires_reference(self):
        with pytest.raises(ConfigError):
            compare_samplers([ExperimentConfig()], None)

    def test_mismatched_data(self):
        a = ExperimentConfig()
        b = ExperimentConfig.from_dict({"data": {"preset": "snr2_small", "seed": 5}})
        with pytest.raises(ConfigError):
            compare_samplers([a, b], "exact")

    def test_reference_file(self, small_run, tmp_path):
        cfg, _, out = small_run
        rows = compare_samplers([cfg.replace(iterations=100, burn_in=10)], str(out / "pips.csv"))
        assert rows[0]["mse_important"] is not None

    def test_parni_not_worse_than_asi(self, tmp_path):
        # short runs: with thousands of iterations both sit at the same Monte Carlo floor
        base = {**SMALL, "L": 25, "iterations": 400, "burn_in": 80, "keep_trace": False}
        cfgs = [ExperimentConfig.from_dict({**base, "sampler": s}) for s in ("asi", "parni_kw")]
        rows = compare_samplers(cfgs, "exact", tmp_path / "a", seeds=5)
        assert rows[1]["mse_important"] <= rows[0]["mse_important"]
        # re-run reproduces the table byte for byte
        compare_samplers(cfgs, "exact", tmp_path / "b", seeds=5)
        assert (tmp_path / "a" / "comparison.csv").read_bytes() == (tmp_path / "b" / "comparison.csv").read_bytes()
