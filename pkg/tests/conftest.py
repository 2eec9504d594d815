import os
from pathlib import Path

import numpy as np
import pytest

from shipgen.designspace import HULL_SPACE, LOWER, UPPER, sample_uniform

MID_BOX = 0.5 * (LOWER + UPPER)

# Expensive artifacts (labelled datasets, trained models) are cached here and
# rebuilt when absent.
CACHE = Path(os.environ.get("SHIPGEN_TEST_CACHE", Path(__file__).resolve().parent.parent / ".cache"))


def feasible_designs(n, seed=1):
    p = sample_uniform(seed, 40 * n + 400)
    out = p[HULL_SPACE.feasible(p)][:n]
    assert len(out) == n
    return out


def regular_designs(n, seed=2, min_power=1.5):
    """Feasible designs whose plan and section exponents are all >= ``min_power``."""
    p = feasible_designs(20 * n, seed)
    keep = (p[:, 5] >= min_power) & (p[:, 6] >= min_power) & (p[:, 9] >= min_power)
    return p[keep][:n]


@pytest.fixture(scope="session")
def cache_dir():
    CACHE.mkdir(parents=True, exist_ok=True)
    return CACHE


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cached_dataset(name, n_feasible, n_invalid, seed, labeled=True, jobs=1):
    """Generate (and label) a dataset once, then reuse the saved copy."""
    from shipgen import dataset

    path = CACHE / name
    try:
        return dataset.load(path)
    except dataset.DatasetError:
        pass
    ds = dataset.generate(n_feasible, n_invalid, seed)
    if labeled:
        ds = dataset.label(ds, jobs=jobs)
    dataset.save(ds, path)
    return ds


# ---------------------------------------------------------------- CLI pipeline

TINY_NET = ["--hidden", "32,32", "--epochs", "4", "--batch", "64"]
TINY_SCHEDULE = ["--T", "40", "--beta1", "1e-3", "--betaT", "0.2"]


def shipgen(*args):
    from shipgen.cli import main
    return main([str(a) for a in args])


def build_tiny_pipeline(root: Path) -> dict:
    """Run every stage once at toy scale; returns the stage output directories."""
    d = {k: root / k for k in ("data", "labeled", "ddpm", "cond", "clf", "regs", "s_none", "s_clf",
                               "s_perf", "s_cond", "e_cov", "e_feas", "e_perf", "e_gamma", "e_pca",
                               "mesh", "sim", "few")}
    runs = [
        ("gen-data", "--n-feasible", 100, "--n-invalid", 60, "--out", d["data"]),
        ("label", "--data", d["data"], "--out", d["labeled"]),
        ("gen-data", "--n-feasible", 8, "--n-invalid", 2, "--seed", 5, "--out", d["few"]),
        ("train-ddpm", "--data", d["data"], "--out", d["ddpm"], *TINY_NET, *TINY_SCHEDULE),
        ("train-conditional", "--data", d["data"], "--out", d["cond"], *TINY_NET, *TINY_SCHEDULE),
        ("train-classifier", "--data", d["data"], "--out", d["clf"], *TINY_NET),
        ("train-regressors", "--data", d["labeled"], "--out", d["regs"], *TINY_NET),
        ("sample", "--ddpm", d["ddpm"], "--n", 30, "--out", d["s_none"]),
        ("sample", "--guidance", "classifier", "--gamma", 0.5, "--ddpm", d["ddpm"],
         "--classifier", d["clf"], "--n", 30, "--out", d["s_clf"]),
        ("sample", "--guidance", "perf", "--ddpm", d["ddpm"], "--classifier", d["clf"],
         "--regressors", d["regs"], "--n", 30, "--out", d["s_perf"]),
        ("sample", "--guidance", "conditional", "--conditional", d["cond"], "--label", 1,
         "--n", 30, "--out", d["s_cond"]),
        ("eval", "coverage", "--data", d["data"], "--samples", d["s_none"], "--out", d["e_cov"]),
        ("eval", "feasibility", "--samples", d["s_none"], "--samples", d["s_clf"], "--out", d["e_feas"]),
        ("eval", "performance", "--data", d["labeled"], "--samples", d["few"], "--out", d["e_perf"]),
        ("eval", "gamma-sweep", "--data", d["data"], "--ddpm", d["ddpm"], "--classifier", d["clf"],
         "--gammas", "0,0.5,1", "--n", 20, "--out", d["e_gamma"]),
        ("eval", "pca", "--data", d["data"], "--samples", d["s_none"], "--out", d["e_pca"]),
        ("mesh", "--data", d["data"], "--row", 3, "--nx", 16, "--nz", 12, "--out", d["mesh"]),
        ("simulate", "--data", d["data"], "--row", 3, "--out", d["sim"]),
    ]
    for args in runs:
        code = shipgen(*args)
        assert code == 0, (args, code)
    return d


@pytest.fixture(scope="session")
def tiny_pipeline(tmp_path_factory):
    return build_tiny_pipeline(tmp_path_factory.mktemp("pipeline"))
