import json

import numpy as np
import pytest

from shipgen.cli import DEFAULTS, resolve, substream
from shipgen.designspace import from_csv
from shipgen.evaluation import read_gamma_sweep
from shipgen.neural import load_net

from conftest import TINY_NET, shipgen


def _files(d):
    return json.loads((d / "manifest.json").read_text())["files"]


def test_gen_data_is_byte_identical(tmp_path):
    for k in ("a", "b"):
        assert shipgen("gen-data", "--n-feasible", 100, "--n-invalid", 60, "--seed", 7,
                       "--out", tmp_path / k) == 0
    assert (tmp_path / "a" / "designs.csv").read_bytes() == (tmp_path / "b" / "designs.csv").read_bytes()
    # the manifests differ only in the recorded output path
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    designs, masks = from_csv((tmp_path / "a" / "designs.csv").read_text())
    assert (masks == 0).sum() == 100 and (masks != 0).sum() == 60


def test_every_stage_writes_a_manifest(tiny_pipeline):
    for name, d in tiny_pipeline.items():
        man = json.loads((d / "manifest.json").read_text())
        run = man["run"]
        assert run["tool"] == "shipgen" and run["version"] and "config" in run, name
        assert man["files"], name


def test_pipeline_outputs(tiny_pipeline):
    d = tiny_pipeline
    sweep = read_gamma_sweep(d["e_gamma"] / "gamma_sweep.csv")
    assert sweep.shape == (3, 5) and list(sweep[:, 0]) == [0.0, 0.5, 1.0]
    assert (d["e_gamma"] / "gamma_sweep.svg").is_file()
    cov = json.loads((d["e_cov"] / "coverage.json").read_text())
    assert {"coverage", "realism", "baselines"} <= set(cov)
    assert (d["e_perf"] / "performance_table.csv").read_text().startswith("metric,ds_mean")
    assert (d["e_pca"] / "pca_scatter.csv").read_text().startswith("set,pc1,pc2\n")
    assert (d["mesh"] / "hull.stl").stat().st_size > 84
    assert len((d["sim"] / "dragrid.csv").read_text().splitlines()[1].split(",")) == 32
    lam = np.loadtxt(d["s_perf"] / "lambdas.csv", delimiter=",")
    np.testing.assert_allclose(lam.sum(axis=1), 1.0)
    # nets are stored in single precision and read back before use
    net = load_net(d["ddpm"] / "denoiser.net")
    assert all(p.dtype == np.float64 and np.array_equal(p, p.astype(np.float32)) for p in net.params.values())


def test_gamma_zero_sweep_row_matches_plain_feasibility(tiny_pipeline, tmp_path):
    d = tiny_pipeline
    sweep = read_gamma_sweep(d["e_gamma"] / "gamma_sweep.csv")
    man = json.loads((d["e_gamma"] / "manifest.json").read_text())["run"]
    seed = man["seeds"]["gamma-sweep"]
    assert seed == substream(0, "gamma-sweep")
    assert 0.0 <= sweep[0, 1] <= 1.0


def test_missing_classifier_is_a_missing_artifact(tiny_pipeline, tmp_path):
    assert shipgen("sample", "--guidance", "classifier", "--gamma", 0.5, "--n", 200,
                   "--ddpm", tiny_pipeline["ddpm"], "--out", tmp_path / "s") == 3
    assert shipgen("sample", "--guidance", "classifier", "--ddpm", tiny_pipeline["ddpm"],
                   "--classifier", tmp_path / "nowhere", "--out", tmp_path / "s") == 3
    assert shipgen("label", "--data", tmp_path / "nowhere", "--out", tmp_path / "x") == 3


def test_tampered_artifacts_are_checksum_errors(tiny_pipeline, tmp_path):
    import shutil
    bad = tmp_path / "ddpm"
    shutil.copytree(tiny_pipeline["ddpm"], bad)
    raw = bytearray((bad / "denoiser.net").read_bytes())
    raw[-5] ^= 0x10
    (bad / "denoiser.net").write_bytes(bytes(raw))
    assert shipgen("sample", "--ddpm", bad, "--n", 5, "--out", tmp_path / "s") == 4
    data = tmp_path / "data"
    shutil.copytree(tiny_pipeline["data"], data)
    with (data / "designs.csv").open("a") as fh:
        fh.write("\n")
    assert shipgen("train-classifier", "--data", data, "--out", tmp_path / "c", *TINY_NET) == 4


def test_mixed_normalizers_are_rejected(tiny_pipeline, tmp_path):
    assert shipgen("gen-data", "--n-feasible", 100, "--n-invalid", 60, "--seed", 3,
                   "--out", tmp_path / "other") == 0
    assert shipgen("train-classifier", "--data", tmp_path / "other", "--out", tmp_path / "clf",
                   *TINY_NET) == 0
    assert shipgen("sample", "--guidance", "classifier", "--ddpm", tiny_pipeline["ddpm"],
                   "--classifier", tmp_path / "clf", "--n", 5, "--out", tmp_path / "s") == 4


def test_usage_errors(tmp_path):
    assert shipgen("nonsense") == 2
    assert shipgen("gen-data", "--bogus", 1, "--out", tmp_path) == 2
    assert shipgen("gen-data", "--n-feasible", 0, "--n-invalid", 5, "--out", tmp_path) == 2
    assert shipgen("gen-data", "--jobs", 0, "--out", tmp_path) == 2
    assert shipgen("mesh", "--design", "1,2,3", "--out", tmp_path) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")   # the overflow is the point
def test_divergent_training_is_a_numeric_failure(tiny_pipeline, tmp_path):
    code = shipgen("train-classifier", "--data", tiny_pipeline["data"], "--out", tmp_path / "c",
                   "--hidden", "32,32", "--epochs", "3", "--lr", "1e150")
    assert code == 5


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("seed: 11\nddpm:\n  epochs: 3\n  lr: 0.01\n")
    stage, c, _ = resolve(["train-ddpm", "--config", str(cfg), "--epochs", "9", "--out", "x"])
    assert stage == "train-ddpm" and c["seed"] == 11
    assert c["ddpm"]["epochs"] == 9 and c["ddpm"]["lr"] == 0.01
    assert c["ddpm"]["hidden"] == DEFAULTS["ddpm"]["hidden"]
    (tmp_path / "bad.json").write_text('{"sead": 1}')
    assert shipgen("gen-data", "--config", tmp_path / "bad.json", "--out", tmp_path / "o") == 2


def test_substreams_are_distinct_and_stable():
    names = ["gen-data", "label", "train-ddpm", "sample", "gamma-sweep"]
    seeds = [substream(0, n) for n in names]
    assert len(set(seeds)) == len(seeds) and all(0 <= s < 2**63 for s in seeds)
    assert substream(0, "sample") == substream(0, "sample") != substream(1, "sample")


def test_logging_env_var(tmp_path, monkeypatch, capfd):
    monkeypatch.setenv("SHIPGEN_LOG", "INFO")
    assert shipgen("gen-data", "--n-feasible", 100, "--n-invalid", 5, "--out", tmp_path / "a") == 0
    assert "running gen-data" in capfd.readouterr().err
    monkeypatch.setenv("SHIPGEN_LOG", "WARNING")
    assert shipgen("gen-data", "--n-feasible", 100, "--n-invalid", 5, "--out", tmp_path / "b") == 0
    assert "running gen-data" not in capfd.readouterr().err
