import json
import os
import sys

import numpy as np
import pandas as pd
import pytest

from src.analysis.pipeline import default_interval, run_moments, run_sensitivity, run_summarize
from src.analysis.summary import TraceSet
from src.inference.pipeline import chain_seeds, run_fit
from src.inference.trace import ATOMS_FILENAME, SCALARS_FILENAME, Z_FILENAME, read_trace
from src.main import main
from src.models.run_config import RunConfig
from src.simulation.pipeline import run_simulate
from src.utils.config import MANIFEST_FILENAME, SEED_ENV_VAR
from src.utils.errors import ConfigError, DataError


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


@pytest.fixture
def simulated(tmp_path):
    return run_simulate("twogroup", seed=2, out_dir=str(tmp_path / "data"), subjects=4, horizon=6)


def fit_config(paths, out_dir, **overrides):
    values = {
        "data.grid": paths["grid"],
        "data.values": paths["data"],
        "out": str(out_dir),
        "sweeps": 20,
        "burnin": 4,
        "log.every": 0,
        "seed": 7,
    }
    values.update(overrides)
    return RunConfig.load(overrides=values)


class TestFit:
    def test_writes_traces_and_manifest(self, simulated, tmp_path):
        manifest = run_fit(fit_config(simulated, tmp_path / "fit", chains=2, **{"trace.thin": 2}))
        assert len(manifest["chains"]) == 2
        assert manifest["config"]["seed"] == 7
        for c in range(2):
            records = read_trace(str(tmp_path / "fit" / f"chain_{c}"))
            assert [r.sweep for r in records] == list(range(6, 21, 2))
        with open(tmp_path / "fit" / MANIFEST_FILENAME, encoding="utf-8") as f:
            assert json.load(f)["config_hash"] == manifest["config_hash"]

    def test_same_seed_same_bytes(self, simulated, tmp_path):
        run_fit(fit_config(simulated, tmp_path / "a", sampler="marginal"))
        run_fit(fit_config(simulated, tmp_path / "b", sampler="marginal"))
        for name in (SCALARS_FILENAME, Z_FILENAME, ATOMS_FILENAME):
            assert (tmp_path / "a" / "chain_0" / name).read_bytes() == (tmp_path / "b" / "chain_0" / name).read_bytes()

    def test_chain_seeds_are_independent(self):
        seeds = chain_seeds(7, 3)
        draws = [np.random.default_rng(s).integers(1 << 30) for s in seeds]
        assert len(set(draws)) == 3

    def test_trace_round_trip(self, simulated, tmp_path):
        config = fit_config(simulated, tmp_path / "fit")
        run_fit(config)
        records = read_trace(str(tmp_path / "fit" / "chain_0"))
        for r in records:
            assert r.beta.shape == (r.K + 1,)
            assert set(np.unique(r.z)) == set(range(r.K))


class TestSummarize:
    def test_writes_all_tables(self, simulated, tmp_path):
        run_fit(fit_config(simulated, tmp_path / "fit"))
        paths = run_summarize(str(tmp_path / "fit"), str(tmp_path / "summary"), burnin_fraction=0.5, thin=1)
        start, end = default_interval(6)
        assert set(paths) == {"k_posterior.csv", "local_k_u.csv", "atom_curves.csv", "predictive_u.csv", f"cocluster_{start}-{end}.csv"}
        k_table = pd.read_csv(paths["k_posterior.csv"])
        assert k_table["probability"].sum() == pytest.approx(1.0)
        cocluster = pd.read_csv(paths[f"cocluster_{start}-{end}.csv"], index_col=0)
        np.testing.assert_allclose(np.diag(cocluster.to_numpy()), 1.0)

    def test_burnin_counts_unwritten_sweeps(self, simulated, tmp_path):
        run_fit(fit_config(simulated, tmp_path / "fit"))
        traces = TraceSet.load(str(tmp_path / "fit"), burnin_fraction=0.5, thin=1)
        assert [r.sweep for r in traces.records] == list(range(11, 21))

    def test_missing_fit_directory(self, tmp_path):
        with pytest.raises(DataError):
            run_summarize(str(tmp_path / "nothing"), str(tmp_path / "summary"))


class TestMomentsAndSensitivity:
    def test_moments_table(self, tmp_path):
        out = tmp_path / "moments.csv"
        table = run_moments(L=50, R=400, out_path=str(out))
        assert list(table.columns) == ["quantity", "closed_form", "estimate", "se", "z_score"]
        assert pd.read_csv(out)["quantity"].tolist() == table["quantity"].tolist()

    def test_sensitivity(self, simulated, tmp_path):
        config = fit_config(simulated, tmp_path / "sens")
        result = run_sensitivity(config, [0.01, 0.5], target_k=2, burnin_fraction=0.5, thin=1)
        assert result["omega"].tolist() == [0.01, 0.5]
        assert os.path.exists(tmp_path / "sens" / "omega_0.01" / MANIFEST_FILENAME)
        assert os.path.exists(tmp_path / "sens" / "sensitivity.csv")
        assert result["p_target"].between(0, 1).all()


class TestCommandLine:
    def test_invalid_config_key_exits_with_2(self, tmp_path, monkeypatch, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("H.lengthscale = 2\n", encoding="utf-8")
        monkeypatch.setattr(sys, "argv", ["nhdp", "fit", "--config", str(path)])
        assert main() == ConfigError.exit_code
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["error"] == "ConfigError"

    def test_simulate_then_fit(self, tmp_path, monkeypatch):
        data_dir = tmp_path / "data"
        monkeypatch.setattr(sys, "argv", ["nhdp", "simulate", "--preset", "twogroup", "--subjects", "4", "--horizon", "5", "--out", str(data_dir)])
        assert main() == 0
        monkeypatch.setattr(sys, "argv", [
            "nhdp", "fit", "--grid", str(data_dir / "grid.csv"), "--data", str(data_dir / "data.csv"),
            "--sweeps", "5", "--out", str(tmp_path / "fit"),
        ])
        assert main() == 0
        assert os.path.exists(tmp_path / "fit" / "chain_0" / Z_FILENAME)

    def test_missing_data_paths(self, tmp_path, monkeypatch):
        monkeypatch.setattr(sys, "argv", ["nhdp", "fit", "--sweeps", "5", "--out", str(tmp_path)])
        assert main() == ConfigError.exit_code
