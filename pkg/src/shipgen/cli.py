"""Command-line front end: one pipeline stage per invocation.

Every stage writes its artifacts plus ``manifest.json`` into ``--out``.  The
manifest holds the fully resolved configuration, so ``shipgen rerun
DIR/manifest.json`` repeats the stage and reproduces its files.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import dataset as dsm
from . import evaluation as ev
from .designspace import HULL_SPACE, OutOfBoxError, from_csv, require_feasible, to_csv
from .diffusion import (
    FEASIBLE, GUIDE_CLIP, INVALID, PERF_STEP, DiffusionConfig, GuidanceConfig, NormalizerMismatchError,
    make_schedule, normalizer_checksum, sample, sample_classifier_guided, sample_conditional,
    sample_performance_guided, schedule_from_meta, train_conditional, train_ddpm,
)
from .neural import ChecksumError, ModelFormatError, TrainConfig, load_net, save_net, train_classifier, train_regressor

log = logging.getLogger("shipgen")

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_CHECKSUM, EXIT_NUMERIC = 0, 2, 3, 4, 5
GAMMAS = (0.0, 0.2, 0.35, 0.5, 0.65, 0.8, 1.0)


class UsageError(Exception):
    pass


class MissingArtifactError(Exception):
    pass


class ChecksumMismatch(Exception):
    pass


class NumericFailure(Exception):
    pass


# ---------------------------------------------------------------- configuration

_NET = {"hidden": [256, 256, 256, 256], "batch": 256, "holdout": 0.1, "residual": True}

DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "paths": {},
    "data": {"n_feasible": 5000, "n_invalid": 3000},
    "normalizer": {"n_quantiles": 1000},
    "schedule": {"T": 1000, "beta1": 1e-4, "betaT": 0.02},
    "ddpm": dict(_NET, epochs=600, lr=1e-3, cosine=True, ema=0.0, out_scale=0.1),
    "conditional": dict(_NET, epochs=600, lr=1e-3, cosine=True, ema=0.0, out_scale=0.1),
    "classifier": dict(_NET, epochs=200, lr=1e-3, cosine=True, ema=0.0),
    "regressors": dict(_NET, epochs=300, lr=1e-3, cosine=True, ema=0.0),
    "sample": {"guidance": "none", "n": 500, "gamma": 0.5, "lambda_mode": "random",
               "lambdas": None, "label": FEASIBLE, "damp_noise": True,
               "clip": GUIDE_CLIP, "perf_step": PERF_STEP},
    "eval": {"gammas": list(GAMMAS), "n": 500, "svg": True, "nx": 64, "nz": 64, "row": 0,
             "design": None, "max_feasible": None},
}


def merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_config(path) -> tuple[dict, dict | None]:
    """Config layer from a JSON/YAML file, or from a stage manifest.

    Returns (config, run) where run is the manifest's run record, if any.
    """
    p = Path(path)
    if not p.is_file():
        raise MissingArtifactError(f"config file not found: {p}")
    text = p.read_text()
    try:
        if p.suffix in (".yaml", ".yml"):
            import yaml
            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
    except Exception as exc:
        raise UsageError(f"cannot parse config {p}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"config {p} must be a mapping")
    if "run" in doc:
        return doc["run"]["config"], doc["run"]
    unknown = set(doc) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return doc, None


def substream(seed: int, name: str) -> int:
    """Stage seed derived from the run seed and a stage name."""
    h = hashlib.blake2b(f"{int(seed)}/{name}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


def _train_cfg(sec: dict, seed: int, cls=TrainConfig):
    kw = dict(hidden=tuple(int(h) for h in sec["hidden"]), epochs=int(sec["epochs"]),
              batch=int(sec["batch"]), lr=float(sec["lr"]), holdout=float(sec["holdout"]),
              seed=seed, residual=bool(sec["residual"]), cosine=bool(sec["cosine"]),
              ema=float(sec["ema"]))
    if cls is DiffusionConfig:
        kw["out_scale"] = float(sec["out_scale"])
    return cls(**kw)


# ---------------------------------------------------------------- artifacts


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _path(cfg: dict, key: str, required: bool = True) -> Path | None:
    v = cfg["paths"].get(key)
    if v is None:
        if required:
            raise UsageError(f"--{key} is required for this stage")
        return None
    return Path(v)


def _out_dir(cfg: dict) -> Path:
    d = _path(cfg, "out")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _require_dir(d: Path, what: str) -> Path:
    if not (d / "manifest.json").is_file():
        raise MissingArtifactError(f"missing {what}: no manifest.json in {d}")
    return d


def verify_artifact_dir(d: Path, what: str) -> dict:
    """Check every output file of a stage directory against its manifest."""
    _require_dir(d, what)
    man = json.loads((d / "manifest.json").read_text())
    for name, digest in man.get("files", {}).items():
        f = d / name
        if not f.is_file():
            raise MissingArtifactError(f"missing {what} file: {f}")
        if sha256_file(f) != digest:
            raise ChecksumMismatch(f"checksum mismatch for {f}")
    return man


def _run_record(cfg: dict, stage: str, seeds: dict, inputs: dict) -> dict:
    return {"tool": "shipgen", "version": __version__, "stage": stage, "config": cfg,
            "seeds": seeds, "inputs": inputs}


def write_manifest(d: Path, run: dict, files) -> Path:
    man = {"run": run, "files": {f: sha256_file(d / f) for f in sorted(files)}}
    tmp = d / "manifest.json.tmp"
    tmp.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, d / "manifest.json")
    return d / "manifest.json"


def _input_digest(d: Path) -> str:
    return sha256_file(d / "manifest.json")


def _load_dataset(cfg: dict, key: str = "data") -> tuple[dsm.LabeledDataset, dict]:
    d = _require_dir(_path(cfg, key), "dataset")
    return dsm.load(d), {str(d): _input_digest(d)}


def _save_dataset(ds: dsm.LabeledDataset, d: Path, run: dict) -> None:
    ds.manifest["run"] = run
    dsm.save(ds, d)


def _fit_normalizer(cfg: dict, ds: dsm.LabeledDataset) -> dsm.Normalizer:
    return dsm.fit_normalizer(ds, n_quantiles=int(cfg["normalizer"]["n_quantiles"]))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _check_losses(losses, what: str) -> None:
    if not np.all(np.isfinite(losses)):
        raise NumericFailure(f"{what} training diverged (non-finite loss)")


def _save_model(d: Path, name: str, net, normalizer: dsm.Normalizer) -> str:
    net.meta["normalizer_sha256"] = normalizer_checksum(normalizer)
    save_net(net, d / name)
    return name


def _load_models(cfg: dict, key: str, names) -> tuple[list, dsm.Normalizer, dict]:
    d = _path(cfg, key, required=False)
    if d is None:
        raise MissingArtifactError(f"no trained {key} model given (--{key} DIR)")
    if not (d / "manifest.json").is_file():
        raise MissingArtifactError(f"missing {key} model: no trained artifacts in {d}")
    verify_artifact_dir(d, f"{key} model")
    nets = [load_net(d / n) for n in names]
    nz = dsm.Normalizer.from_dict(json.loads((d / "normalizer.json").read_text()))
    return nets, nz, {str(d): _input_digest(d)}


# ---------------------------------------------------------------- stages


def stage_gen_data(cfg):
    seed = substream(cfg["seed"], "gen-data")
    ds = dsm.generate(int(cfg["data"]["n_feasible"]), int(cfg["data"]["n_invalid"]), seed)
    _save_dataset(ds, _out_dir(cfg), _run_record(cfg, "gen-data", {"gen-data": seed}, {}))


def stage_label(cfg):
    ds, inputs = _load_dataset(cfg)
    seed = substream(cfg["seed"], "label")
    out = dsm.label(ds, seed=seed, jobs=int(cfg["jobs"]))
    _save_dataset(out, _out_dir(cfg), _run_record(cfg, "label", {"label": seed}, inputs))


def _train_denoiser(cfg, stage: str, section: str):
    ds, inputs = _load_dataset(cfg)
    nz = _fit_normalizer(cfg, ds)
    sc = cfg["schedule"]
    sched = make_schedule(int(sc["T"]), float(sc["beta1"]), float(sc["betaT"]))
    seed = substream(cfg["seed"], stage)
    tc = _train_cfg(cfg[section], seed, DiffusionConfig)
    if stage == "train-ddpm":
        net, rep = train_ddpm(nz.forward(ds.feasible_designs), sched, tc, log_to=log)
        name = "denoiser.net"
    else:
        X = nz.forward(ds.designs)
        net, rep = train_conditional(X, ds.feasible.astype(int), sched, tc, log_to=log)
        name = "conditional.net"
    _check_losses(rep.losses, stage)
    d = _out_dir(cfg)
    _write_json(d / "normalizer.json", nz.to_dict())
    _save_model(d, name, net, nz)
    _write_json(d / "report.json", rep.as_dict())
    write_manifest(d, _run_record(cfg, stage, {stage: seed}, inputs), [name, "normalizer.json", "report.json"])


def stage_train_ddpm(cfg):
    _train_denoiser(cfg, "train-ddpm", "ddpm")


def stage_train_conditional(cfg):
    _train_denoiser(cfg, "train-conditional", "conditional")


def stage_train_classifier(cfg):
    ds, inputs = _load_dataset(cfg)
    nz = _fit_normalizer(cfg, ds)
    seed = substream(cfg["seed"], "train-classifier")
    net, rep = train_classifier(nz.forward(ds.designs), ds.feasible.astype(int),
                                _train_cfg(cfg["classifier"], seed), log=log)
    _check_losses(rep.losses, "classifier")
    d = _out_dir(cfg)
    _write_json(d / "normalizer.json", nz.to_dict())
    _save_model(d, "classifier.net", net, nz)
    _write_json(d / "report.json", rep.as_dict())
    write_manifest(d, _run_record(cfg, "train-classifier", {"train-classifier": seed}, inputs),
                   ["classifier.net", "normalizer.json", "report.json"])


def regressor_file(metric: str) -> str:
    return f"regressor_{metric}.net"


def stage_train_regressors(cfg):
    ds, inputs = _load_dataset(cfg)
    designs, Y = ds.performance_matrix()
    if len(Y) == 0:
        raise MissingArtifactError("dataset has no performance labels; run `label` first")
    nz = _fit_normalizer(cfg, ds)
    X = nz.forward(designs)
    d = _out_dir(cfg)
    seeds, reports, files = {}, {}, []
    for j, m in enumerate(dsm.METRICS):
        seeds[m] = substream(cfg["seed"], f"train-regressors/{m}")
        net, rep = train_regressor(X, Y[:, j], _train_cfg(cfg["regressors"], seeds[m]), name=m, log=log)
        _check_losses(rep.losses, f"regressor {m}")
        files.append(_save_model(d, regressor_file(m), net, nz))
        reports[m] = rep.as_dict()
        log.info("regressor %s: held-out r2 %.4f", m, rep.metric)
    _write_json(d / "normalizer.json", nz.to_dict())
    _write_json(d / "report.json", reports)
    write_manifest(d, _run_record(cfg, "train-regressors", seeds, inputs),
                   files + ["normalizer.json", "report.json"])


def _write_samples(d: Path, batch) -> list[str]:
    masks = HULL_SPACE.violation_masks(batch.designs)
    (d / "samples.csv").write_text(to_csv(batch.designs, masks))
    np.savetxt(d / "model.csv", batch.model, delimiter=",", fmt="%.17g")
    files = ["samples.csv", "model.csv"]
    if batch.lambdas is not None:
        np.savetxt(d / "lambdas.csv", batch.lambdas, delimiter=",", fmt="%.17g")
        files.append("lambdas.csv")
    if batch.grad_norms is not None:
        np.savetxt(d / "grad_norms.csv", batch.grad_norms, delimiter=",", fmt="%.17g")
        files.append("grad_norms.csv")
    return files


def _same_normalizer(*nzs):
    ref = normalizer_checksum(nzs[0])
    if any(normalizer_checksum(n) != ref for n in nzs[1:]):
        raise NormalizerMismatchError("models were trained with different normalizers")


def _opt_float(v):
    return None if v is None else float(v)


def draw_samples(cfg, seed: int, gamma: float | None = None):
    """One sampling run as configured; returns (batch, input digests)."""
    sc = cfg["sample"]
    mode = sc["guidance"]
    n, jobs = int(sc["n"]), int(cfg["jobs"])
    gamma = float(sc["gamma"]) if gamma is None else gamma
    if mode == "conditional":
        (den,), nz, inputs = _load_models(cfg, "conditional", ["conditional.net"])
        label = int(sc["label"])
        if label not in (FEASIBLE, INVALID):
            raise UsageError("--label must be 1 (feasible) or 0 (invalid)")
        return sample_conditional(den, schedule_from_meta(den.meta), nz, label, n, seed, jobs), inputs
    (den,), nz, inputs = _load_models(cfg, "ddpm", ["denoiser.net"])
    sched = schedule_from_meta(den.meta)
    if mode == "none":
        return sample(den, sched, nz, n, seed, jobs), inputs
    (clf,), nz_c, more = _load_models(cfg, "classifier", ["classifier.net"])
    inputs.update(more)
    _same_normalizer(nz, nz_c)
    if mode == "classifier":
        return sample_classifier_guided(den, clf, sched, nz, gamma, n, seed, jobs,
                                         damp_noise=bool(sc["damp_noise"]),
                                         clip=_opt_float(sc["clip"])), inputs
    if mode == "perf":
        regs, nz_r, more = _load_models(cfg, "regressors", [regressor_file(m) for m in dsm.METRICS])
        inputs.update(more)
        _same_normalizer(nz, nz_r)
        lam = sc["lambdas"]
        g = GuidanceConfig(gamma=gamma, lambda_mode=sc["lambda_mode"],
                           lambdas=None if lam is None else tuple(float(x) for x in lam),
                           damp_noise=bool(sc["damp_noise"]), clip=_opt_float(sc["clip"]),
                           perf_step=_opt_float(sc["perf_step"]))
        return sample_performance_guided(den, clf, regs, sched, nz, n, seed, g, jobs), inputs
    raise UsageError(f"unknown guidance {mode!r}")


def stage_sample(cfg):
    seed = substream(cfg["seed"], "sample")
    batch, inputs = draw_samples(cfg, seed)
    if not np.all(np.isfinite(batch.model)):
        raise NumericFailure("sampling produced non-finite vectors")
    d = _out_dir(cfg)
    files = _write_samples(d, batch)
    rate = ev.feasibility_rate(batch.designs)
    _write_json(d / "summary.json", {"feasibility": rate.to_dict(), "info": batch.info})
    write_manifest(d, _run_record(cfg, "sample", {"sample": seed}, inputs), files + ["summary.json"])


def _load_samples(d: Path) -> tuple[np.ndarray, dict]:
    """Designs from a sample directory, or from a dataset directory."""
    if (d / "designs.csv").is_file() and not (d / "samples.csv").is_file():
        designs = dsm.load(d).designs
    else:
        verify_artifact_dir(d, "samples")
        designs, _ = from_csv((d / "samples.csv").read_text())
    return designs, {str(d): _input_digest(d)}


def _sample_dirs(cfg) -> list[Path]:
    v = cfg["paths"].get("samples")
    if not v:
        raise UsageError("--samples is required for this evaluation")
    return [Path(p) for p in (v if isinstance(v, list) else [v])]


def eval_coverage(cfg, d: Path):
    ds, inputs = _load_dataset(cfg)
    out, files = {}, []
    base = ev.dataset_baselines(ds.feasible_designs)
    for sd in _sample_dirs(cfg):
        X, more = _load_samples(sd)
        inputs.update(more)
        out[sd.name] = ev.coverage_realism(X, ds.feasible_designs, base).to_dict()
    _write_json(d / "coverage.json", out if len(out) > 1 else next(iter(out.values())))
    return ["coverage.json"], inputs, {}


def eval_feasibility(cfg, d: Path):
    out, inputs = {}, {}
    for sd in _sample_dirs(cfg):
        X, more = _load_samples(sd)
        inputs.update(more)
        out[sd.name] = ev.feasibility_rate(X).to_dict()
    _write_json(d / "feasibility.json", out if len(out) > 1 else next(iter(out.values())))
    return ["feasibility.json"], inputs, {}


def eval_performance(cfg, d: Path):
    ds, inputs = _load_dataset(cfg)
    (sd,) = _sample_dirs(cfg)[:1]
    X, more = _load_samples(sd)
    inputs.update(more)
    masks = HULL_SPACE.violation_masks(X)
    if not np.any(masks == 0):
        raise NumericFailure("no feasible generated designs to simulate")
    cap = cfg["eval"]["max_feasible"]
    if cap is not None:
        # keep the first ``cap`` feasible rows in sample order
        keep = np.flatnonzero(masks == 0)[:int(cap)]
        X, masks = X[keep], masks[keep]
    seed = substream(cfg["seed"], "eval-performance")
    gen = dsm.label(dsm.LabeledDataset(X, masks, {"seed": seed}), seed=seed, jobs=int(cfg["jobs"]))
    table = ev.performance_table(gen, ds)
    ev.write_performance_table(d / "performance_table.csv", table)
    _write_json(d / "performance.json", {
        "n_generated_feasible": table.n_gen, "n_dataset": table.n_ds,
        "cw_condition_reduction": table.cw_reduction,
        "mean_cw_reduction": table.mean_cw_reduction,
        "label_failures": gen.manifest["label_failures"]})
    return ["performance_table.csv", "performance.json"], inputs, {"eval-performance": seed}


def eval_gamma_sweep(cfg, d: Path):
    ds, inputs = _load_dataset(cfg)
    base = ev.dataset_baselines(ds.feasible_designs)
    seed = substream(cfg["seed"], "gamma-sweep")
    sub = merge(cfg, {"sample": {"guidance": "classifier", "n": int(cfg["eval"]["n"])}})
    rows = []
    for g in cfg["eval"]["gammas"]:
        batch, more = draw_samples(sub, seed, gamma=float(g))
        inputs.update(more)
        f = ev.feasibility_rate(batch.designs)
        c = ev.coverage_realism(batch.designs, ds.feasible_designs, base)
        se = ev.coverage_se(batch.designs, ds.feasible_designs, base, seed=seed)
        rows.append((float(g), f.rate, c.coverage, c.realism, se))
        log.info("gamma %.2f: feasibility %.3f coverage %.3f (se %.3f) realism %.3f",
                 g, f.rate, c.coverage, se, c.realism)
    ev.write_gamma_sweep(d / "gamma_sweep.csv", rows)
    files = ["gamma_sweep.csv"]
    if cfg["eval"]["svg"]:
        R = np.array(rows)
        ev.svg_lines(d / "gamma_sweep.svg", R[:, 0],
                     {"feasibility": R[:, 1], "coverage": R[:, 2], "realism": R[:, 3]},
                     title="classifier weight sweep", xlabel="gamma")
        files.append("gamma_sweep.svg")
    return files, inputs, {"gamma-sweep": seed}


def eval_pca(cfg, d: Path):
    ds, inputs = _load_dataset(cfg)
    F = ds.feasible_designs
    pca = ev.pca2_fit(ev.shape_columns(F))
    sets = {"dataset": pca.project(ev.shape_columns(F))}
    for sd in _sample_dirs(cfg) if cfg["paths"].get("samples") else []:
        X, more = _load_samples(sd)
        inputs.update(more)
        sets[sd.name] = pca.project(ev.shape_columns(X))
    ev.write_pca_csv(d / "pca_scatter.csv", sets)
    files = ["pca_scatter.csv"]
    if cfg["eval"]["svg"]:
        ev.svg_scatter(d / "pca_scatter.svg", sets)
        files.append("pca_scatter.svg")
    return files, inputs, {}


EVALS = {"coverage": eval_coverage, "feasibility": eval_feasibility, "performance": eval_performance,
         "gamma-sweep": eval_gamma_sweep, "pca": eval_pca}


def stage_eval(cfg, what: str):
    d = _out_dir(cfg)
    files, inputs, seeds = EVALS[what](cfg, d)
    run = _run_record(cfg, "eval", seeds, inputs)
    run["eval"] = what
    write_manifest(d, run, files)


def _one_design(cfg) -> np.ndarray:
    spec = cfg["eval"].get("design")
    if spec is not None:
        v = np.array([float(x) for x in (spec.split(",") if isinstance(spec, str) else spec)])
        if v.shape != (HULL_SPACE.dim,):
            raise UsageError(f"--design needs {HULL_SPACE.dim} comma-separated values")
        return v
    src = cfg["paths"].get("samples") or cfg["paths"].get("data")
    if src is None:
        raise UsageError("give --design or a --samples/--data directory with --row")
    src = Path(src[0] if isinstance(src, list) else src)
    if not (src / "samples.csv").is_file() and not (src / "designs.csv").is_file():
        raise MissingArtifactError(f"no design table in {src}")
    text = (src / "samples.csv" if (src / "samples.csv").is_file() else src / "designs.csv").read_text()
    X, _ = from_csv(text)
    row = int(cfg["eval"]["row"])
    if not 0 <= row < len(X):
        raise UsageError(f"--row {row} out of range (0..{len(X) - 1})")
    return X[row]


def stage_mesh(cfg):
    from .geometry.mesh import gen_mesh, to_stl
    v = require_feasible(_one_design(cfg))
    mesh = gen_mesh(v, int(cfg["eval"]["nx"]), int(cfg["eval"]["nz"]))
    d = _out_dir(cfg)
    (d / "hull.stl").write_bytes(to_stl(mesh))
    _write_json(d / "design.json", dict(zip(HULL_SPACE.names, map(float, v))))
    write_manifest(d, _run_record(cfg, "mesh", {}, {}), ["hull.stl", "design.json"])


def stage_simulate(cfg):
    from .hydro import CSV_COLUMNS, aggregate_cw, drag_grid
    v = require_feasible(_one_design(cfg))
    grid = drag_grid(v)
    d = _out_dir(cfg)
    (d / "dragrid.csv").write_text(",".join(CSV_COLUMNS) + "\n"
                                   + ",".join(repr(float(x)) for x in grid.row()) + "\n")
    _write_json(d / "simulate.json", {"design": dict(zip(HULL_SPACE.names, map(float, v))),
                                      "cw_star": aggregate_cw(grid)})
    write_manifest(d, _run_record(cfg, "simulate", {}, {}), ["dragrid.csv", "simulate.json"])


STAGES = {"gen-data": stage_gen_data, "label": stage_label, "train-ddpm": stage_train_ddpm,
          "train-conditional": stage_train_conditional, "train-classifier": stage_train_classifier,
          "train-regressors": stage_train_regressors, "sample": stage_sample,
          "mesh": stage_mesh, "simulate": stage_simulate}


def run_stage(stage: str, cfg: dict, what: str | None = None) -> None:
    log.info("running %s%s -> %s", stage, f" {what}" if what else "", cfg["paths"].get("out"))
    if stage == "eval":
        if what not in EVALS:
            raise UsageError(f"unknown evaluation {what!r}")
        stage_eval(cfg, what)
    else:
        STAGES[stage](cfg)


# ---------------------------------------------------------------- argument parsing


def _csv_floats(s):
    return [float(x) for x in s.split(",") if x.strip()]


def _csv_ints(s):
    return [int(x) for x in s.split(",") if x.strip()]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _flag(p, name, key, **kw):
    p.add_argument(f"--{name}", dest=key, default=argparse.SUPPRESS, **kw)


def _common(p, *paths):
    _flag(p, "config", "_config", metavar="FILE", help="JSON or YAML config (or a stage manifest)")
    _flag(p, "seed", "seed", type=int)
    _flag(p, "jobs", "jobs", type=int)
    _flag(p, "out", "paths.out", metavar="DIR")
    for name in paths:
        _flag(p, name, f"paths.{name}", metavar="DIR")


def _train_flags(p, sec):
    _flag(p, "hidden", f"{sec}.hidden", type=_csv_ints, metavar="W,W,..")
    _flag(p, "epochs", f"{sec}.epochs", type=int)
    _flag(p, "batch", f"{sec}.batch", type=int)
    _flag(p, "lr", f"{sec}.lr", type=float)
    _flag(p, "holdout", f"{sec}.holdout", type=float)
    _flag(p, "ema", f"{sec}.ema", type=float)
    _flag(p, "cosine", f"{sec}.cosine", action=argparse.BooleanOptionalAction)


def _schedule_flags(p):
    _flag(p, "T", "schedule.T", type=int)
    _flag(p, "beta1", "schedule.beta1", type=float)
    _flag(p, "betaT", "schedule.betaT", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="shipgen", description="Ship-hull generation pipeline")
    ap.add_argument("--version", action="version", version=f"shipgen {__version__}")
    sub = ap.add_subparsers(dest="_stage", metavar="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="rejection-sample feasible and invalid designs")
    _common(p)
    _flag(p, "n-feasible", "data.n_feasible", type=int)
    _flag(p, "n-invalid", "data.n_invalid", type=int)

    p = sub.add_parser("label", help="compute the seven performance metrics")
    _common(p, "data")

    for name, sec, help_ in (("train-ddpm", "ddpm", "train the denoiser on feasible designs"),
                             ("train-conditional", "conditional", "train the class-conditional denoiser")):
        p = sub.add_parser(name, help=help_)
        _common(p, "data")
        _train_flags(p, sec)
        _schedule_flags(p)
        _flag(p, "out-scale", f"{sec}.out_scale", type=float)

    p = sub.add_parser("train-classifier", help="train the feasibility classifier")
    _common(p, "data")
    _train_flags(p, "classifier")

    p = sub.add_parser("train-regressors", help="train the seven performance regressors")
    _common(p, "data")
    _train_flags(p, "regressors")

    p = sub.add_parser("sample", help="draw designs from a trained denoiser")
    _common(p, "ddpm", "classifier", "regressors", "conditional")
    _flag(p, "guidance", "sample.guidance", choices=("none", "classifier", "perf", "conditional"))
    _flag(p, "n", "sample.n", type=int)
    _flag(p, "gamma", "sample.gamma", type=float)
    _flag(p, "lambda-mode", "sample.lambda_mode", choices=("random", "fixed"))
    _flag(p, "lambdas", "sample.lambdas", type=_csv_floats, metavar="L1,..,L7")
    _flag(p, "label", "sample.label", type=int, choices=(0, 1))
    _flag(p, "damp-noise", "sample.damp_noise", action=argparse.BooleanOptionalAction)
    _flag(p, "clip", "sample.clip", type=float)
    _flag(p, "perf-step", "sample.perf_step", type=float)

    p = sub.add_parser("eval", help="coverage, feasibility, performance, gamma sweep or PCA")
    p.add_argument("what", choices=sorted(EVALS))
    _common(p, "data", "ddpm", "classifier")
    p.add_argument("--samples", dest="paths.samples", action="append", default=argparse.SUPPRESS,
                   metavar="DIR")
    _flag(p, "gammas", "eval.gammas", type=_csv_floats)
    _flag(p, "n", "eval.n", type=int)
    _flag(p, "svg", "eval.svg", action=argparse.BooleanOptionalAction)
    _flag(p, "max-feasible", "eval.max_feasible", type=int)

    for name, help_ in (("mesh", "export one design as an STL mesh"),
                        ("simulate", "wave-drag grid for one design")):
        p = sub.add_parser(name, help=help_)
        _common(p, "data", "samples")
        _flag(p, "design", "eval.design", metavar="V1,..,V12")
        _flag(p, "row", "eval.row", type=int)
        if name == "mesh":
            _flag(p, "nx", "eval.nx", type=int)
            _flag(p, "nz", "eval.nz", type=int)

    p = sub.add_parser("rerun", help="repeat a stage from its manifest")
    p.add_argument("manifest")
    _flag(p, "out", "paths.out", metavar="DIR")
    _flag(p, "jobs", "jobs", type=int)
    return ap


def _flags_layer(ns: argparse.Namespace) -> dict:
    layer: dict = {}
    for k, v in vars(ns).items():
        if k.startswith("_") or k in ("what", "manifest"):
            continue
        node = layer
        parts = k.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = v
    return layer


def resolve(argv) -> tuple[str, dict, str | None]:
    """Parse argv into (stage, config, eval kind); flags beat the config file."""
    ns = build_parser().parse_args(argv)
    stage = ns._stage
    what = getattr(ns, "what", None)
    flags = _flags_layer(ns)
    if stage == "rerun":
        file_layer, run = read_config(ns.manifest)
        if run is None:
            raise UsageError(f"{ns.manifest} is not a stage manifest")
        stage, what = run["stage"], run.get("eval")
    elif hasattr(ns, "_config"):
        file_layer, run = read_config(ns._config)
    else:
        file_layer = {}
    cfg = merge(merge(DEFAULTS, file_layer), flags)
    if int(cfg["jobs"]) < 1:
        raise UsageError("--jobs must be at least 1")
    return stage, cfg, what


def _setup_logging() -> None:
    """Level from SHIPGEN_LOG (DEBUG, INFO, WARNING, ...); default WARNING."""
    name = os.environ.get("SHIPGEN_LOG", "WARNING").upper()
    log.setLevel(getattr(logging, name, logging.WARNING))
    log.propagate = False
    for h in list(log.handlers):
        log.removeHandler(h)
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(h)


def main(argv=None) -> int:
    _setup_logging()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        stage, cfg, what = resolve(argv)
        run_stage(stage, cfg, what)
    except SystemExit as exc:          # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        return _fail(exc, EXIT_USAGE)
    except (MissingArtifactError, dsm.MissingFileError, FileNotFoundError) as exc:
        return _fail(exc, EXIT_MISSING)
    except (ChecksumMismatch, dsm.HashMismatchError, ChecksumError, NormalizerMismatchError) as exc:
        return _fail(exc, EXIT_CHECKSUM)
    except (NumericFailure, FloatingPointError) as exc:
        return _fail(exc, EXIT_NUMERIC)
    except (OutOfBoxError, ModelFormatError, ValueError) as exc:
        return _fail(exc, EXIT_USAGE)
    return EXIT_OK


def _fail(exc: Exception, code: int) -> int:
    print(f"shipgen: error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
