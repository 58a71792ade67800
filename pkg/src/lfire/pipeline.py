"""Config-driven stages: dataset generation, training, inference,
evaluation, bootstrap reports and the determinism smoke run.

Every stage reads persisted artifacts of the previous stage, so stages
can run standalone; all randomness descends from the experiment seed via
disjoint stream tags, making the full pipeline reproducible end to end.
"""
from __future__ import annotations

import csv
import json
import logging
import multiprocessing
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as artifacts
from .config import (TAG_EVAL, TAG_INFER, TAG_OBS_BATCH, TAG_TRAIN_BATCH,
                     ExperimentConfig, RunManifest)
from .errors import ConfigurationError
from .metrics import (bootstrap_ci, gaussian_kde, kl_divergence,
                      posterior_mean, rel_error_difference, relative_error)
from .nnet.network import default_network_config
from .nnet.train import train_summary_network
from .oracle import exact_posterior
from .ratio import lfire_posterior, marginal_pool_features
from .rng import RngStream
from .simulators import generate_training_set, model_spec, prior_sim_batch
from .summaries import ConstantSummaryMap, ManualSummaryMap

log = logging.getLogger(__name__)

TRAIN_BATCH = "train_batch"
OBS_BATCH = "obs_batch"
CHECKPOINT = "checkpoint"


def _manifest(cfg: ExperimentConfig) -> RunManifest:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return RunManifest(out / "manifest.json", cfg)


def cmd_simulate(cfg: ExperimentConfig) -> list:
    """Write the training SimBatch and the observed-task SimBatch."""
    out = Path(cfg.out_dir)
    manifest = _manifest(cfg)
    train = generate_training_set(
        cfg.model, cfg.prior, cfg.m,
        RngStream(cfg.seed, (TAG_TRAIN_BATCH,)), cfg.sim_options)
    files = artifacts.save_simbatch(train, out / TRAIN_BATCH)
    obs = prior_sim_batch(
        cfg.model, cfg.prior, cfg.task_count,
        RngStream(cfg.seed, (TAG_OBS_BATCH,)), cfg.sim_options)
    files += artifacts.save_simbatch(obs, out / OBS_BATCH)
    manifest.record("simulate", files)
    return files


def cmd_train(cfg: ExperimentConfig, simbatch_stem=None, resume: bool = False) -> list:
    """Train the summary network on the persisted training batch."""
    out = Path(cfg.out_dir)
    manifest = _manifest(cfg)
    batch = artifacts.load_simbatch(simbatch_stem or out / TRAIN_BATCH)
    if batch.model_id != cfg.model:
        raise ConfigurationError(
            f"simbatch is for {batch.model_id!r}, config says {cfg.model!r}")
    if resume:
        net, saved_cfg, state = artifacts.load_checkpoint(out / CHECKPOINT)
        train_cfg = saved_cfg or cfg.train
        net = train_summary_network(batch, train_config=train_cfg,
                                    net=net, state=state)
    else:
        train_cfg = cfg.train
        net_cfg = default_network_config(cfg.model, cfg.network)
        net = train_summary_network(batch, net_config=net_cfg, train_config=train_cfg)
    files = artifacts.save_checkpoint(net, out / CHECKPOINT, train_config=train_cfg)
    report = {k: v for k, v in net.report.items() if k != "train_state"}
    report_path = out / "training_report.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    files.append(report_path)
    manifest.record("train", files)
    return files


def _summary_map(method: str, cfg: ExperimentConfig, net):
    if method == "direnet":
        if net is None:
            raise ConfigurationError("summary method 'direnet' needs a checkpoint")
        return net.predict_batch
    if method == "manual":
        return ManualSummaryMap(cfg.model)
    if method == "constant":
        return ConstantSummaryMap()
    raise ConfigurationError(f"unknown summary method {method!r}")


def posterior_stem(out_dir, task: int, method: str) -> Path:
    return Path(out_dir) / f"posterior_t{task:03d}_{method}"


class _InferTask:
    """Picklable per-(task, method) LFIRE call for worker pools."""

    def __init__(self, cfg: ExperimentConfig, net):
        self.cfg = cfg
        self.net = net

    def __call__(self, item):
        task, method_index, x_obs = item
        cfg = self.cfg
        summary_fn = _summary_map(cfg.methods[method_index], cfg, self.net)
        rng = RngStream(cfg.seed, (TAG_INFER, task, method_index))
        t0 = time.perf_counter()
        posterior, models = lfire_posterior(
            x_obs, cfg.model, summary_fn, rng, prior=cfg.prior,
            grid_shape=cfg.grid_shape, n_theta=cfg.n_theta, n_m=cfg.n_m,
            folds=cfg.folds, tol=cfg.tol, max_sweeps=cfg.max_sweeps,
            sim_options=cfg.sim_options, return_models=True)
        elapsed = time.perf_counter() - t0
        return task, method_index, posterior, (models if cfg.save_ratio_models else None), elapsed


def cmd_infer(cfg: ExperimentConfig, checkpoint_stem=None, obs_stem=None) -> list:
    """One posterior-grid file per observed dataset per summary method."""
    out = Path(cfg.out_dir)
    manifest = _manifest(cfg)
    obs = artifacts.load_simbatch(obs_stem or out / OBS_BATCH)
    if obs.model_id != cfg.model:
        raise ConfigurationError(
            f"observed batch is for {obs.model_id!r}, config says {cfg.model!r}")
    net = None
    if "direnet" in cfg.methods:
        net, _, _ = artifacts.load_checkpoint(checkpoint_stem or out / CHECKPOINT)
    work = [(t, mi, obs.series[t])
            for t in range(len(obs)) for mi in range(len(cfg.methods))]
    runner = _InferTask(cfg, net)
    if cfg.threads > 1 and len(work) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(cfg.threads, len(work))) as pool:
            results = pool.map(runner, work, chunksize=1)
    else:
        results = [runner(item) for item in work]
    files = []
    n_nodes = int(np.prod(cfg.grid_shape))
    for task, mi, posterior, models, elapsed in sorted(results, key=lambda r: r[:2]):
        method = cfg.methods[mi]
        stem = posterior_stem(out, task, method)
        files += artifacts.save_posterior(posterior, stem)
        if models is not None:
            files += artifacts.save_ratio_models(models, Path(str(stem) + "_models"))
        log.info("task %d method %s: %.1f s total, %.1f ms per grid node",
                 task, method, elapsed, 1e3 * elapsed / n_nodes)
    manifest.record("infer", files)
    return files


EXCLUDE_TRUE_BELOW = 1e-6  # relative error is undefined at zero truth


def cmd_evaluate(cfg: ExperimentConfig, run_dir=None) -> list:
    """Score persisted posteriors: CSV of per-task results, KL against the
    exact posterior where available, paired bootstrap reports and KDE
    curves of the paired relative-error differences."""
    out = Path(run_dir or cfg.out_dir)
    manifest = _manifest(cfg)
    obs = artifacts.load_simbatch(out / OBS_BATCH)
    spec = model_spec(cfg.model)
    has_oracle = cfg.model in ("arch", "ma2")

    posteriors = {}
    for t in range(len(obs)):
        for method in cfg.methods:
            stem = posterior_stem(out, t, method)
            if not stem.with_suffix(".json").exists():
                raise ConfigurationError(
                    f"missing posterior for task {t} method {method!r}: unpaired inputs")
            posteriors[t, method] = artifacts.load_posterior(stem)

    exacts = {}
    if has_oracle:
        for t in range(len(obs)):
            exacts[t] = exact_posterior(cfg.model, obs.series[t][0], cfg.prior,
                                        cfg.grid_shape)

    d = spec.dim
    rows = []
    excluded = 0
    for t in range(len(obs)):
        theta_true = obs.parameters[t]
        usable = bool(np.all(np.abs(theta_true) >= EXCLUDE_TRUE_BELOW))
        if not usable:
            excluded += 1
        for method in cfg.methods:
            post = posteriors[t, method]
            mean = posterior_mean(post)
            res = relative_error(mean, theta_true) if usable else [np.nan] * d
            kl = kl_divergence(exacts[t], post) if has_oracle else np.nan
            rows.append([t, method, usable]
                        + [repr(float(v)) for v in theta_true]
                        + [repr(float(v)) for v in mean]
                        + [repr(float(v)) for v in res]
                        + [repr(float(kl))])

    csv_path = out / "results.csv"
    header = (["task", "method", "usable"]
              + [f"theta_true{i}" for i in range(d)]
              + [f"post_mean{i}" for i in range(d)]
              + [f"re{i}" for i in range(d)]
              + ["kl"])
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)

    summary = _evaluation_summary(cfg, obs, posteriors, exacts, excluded)
    summary_path = out / "summary.json"
    summary_path.write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
    manifest.record("evaluate", [csv_path, summary_path])
    return [csv_path, summary_path]


def _evaluation_summary(cfg, obs, posteriors, exacts, excluded):
    rng = RngStream(cfg.seed, (TAG_EVAL,))
    d = model_spec(cfg.model).dim
    usable = [t for t in range(len(obs))
              if np.all(np.abs(obs.parameters[t]) >= EXCLUDE_TRUE_BELOW)]
    summary = {"model": cfg.model, "task_count": len(obs),
               "excluded_zero_truth_tasks": excluded, "methods": {}}
    re_by_method = {}
    kl_by_method = {}
    for method in cfg.methods:
        res = np.array([relative_error(posterior_mean(posteriors[t, method]),
                                       obs.parameters[t]) for t in usable])
        re_by_method[method] = res
        entry = {"mean_relative_error": res.mean(axis=0).tolist() if len(res) else None}
        if exacts:
            kls = np.array([kl_divergence(exacts[t], posteriors[t, method])
                            for t in range(len(obs))])
            kl_by_method[method] = kls
            entry["mean_kl"] = float(kls.mean())
            entry["se_kl"] = float(kls.std(ddof=1) / np.sqrt(len(kls))) if len(kls) > 1 else None
        summary["methods"][method] = entry

    if len(cfg.methods) >= 2:
        a, b = cfg.methods[0], cfg.methods[1]
        pair = {"first": a, "second": b}
        if exacts and len(obs) >= 2:
            diff = kl_by_method[a] - kl_by_method[b]
            report = bootstrap_ci(diff, "mean", rng=rng.child(0))
            pair["kl_diff_bootstrap"] = vars(report)
        if len(usable) >= 2:
            delta = rel_error_difference(re_by_method[a], re_by_method[b])
            pair["delta_rel"] = []
            for i in range(d):
                report = bootstrap_ci(delta[:, i], "mean", rng=rng.child(1 + i))
                # Silverman bandwidth for the report curve
                sd = float(delta[:, i].std(ddof=1)) or 1.0
                bw = 1.06 * sd * len(delta) ** (-0.2)
                xs = np.linspace(delta[:, i].min() - 3 * bw,
                                 delta[:, i].max() + 3 * bw, 101)
                pair["delta_rel"].append({
                    "dimension": i,
                    "bootstrap": vars(report),
                    "kde_bandwidth": bw,
                    "kde_points": xs.tolist(),
                    "kde_density": gaussian_kde(delta[:, i], bw, xs).tolist(),
                })
        summary["paired"] = pair
    return summary


def cmd_bootstrap(cfg: ExperimentConfig, column: str, method: str = None,
                  statistic: str = "mean", n_resamples: int = 200,
                  run_dir=None) -> dict:
    """Bootstrap report for one results.csv column (optionally one method)."""
    out = Path(run_dir or cfg.out_dir)
    with (out / "results.csv").open() as fh:
        reader = csv.DictReader(fh)
        values = []
        for row in reader:
            if method is not None and row["method"] != method:
                continue
            if column not in row:
                raise ConfigurationError(f"no column {column!r} in results.csv")
            if row["usable"] != "True" and column.startswith("re"):
                continue
            values.append(float(row[column]))
    report = bootstrap_ci(np.asarray(values), statistic, n_resamples,
                          rng=RngStream(cfg.seed, (TAG_EVAL, 99)))
    result = {"column": column, "method": method, **vars(report)}
    path = out / f"bootstrap_{column}{'_' + method if method else ''}.json"
    path.write_text(json.dumps(result, sort_keys=True, indent=1) + "\n")
    _manifest(cfg).record("bootstrap", [path])
    return result


def smoke_config(out_dir, seed: int = 0) -> ExperimentConfig:
    """A minutes-scale end-to-end configuration on the first toy model."""
    cfg = ExperimentConfig(model="arch", seed=seed, out_dir=str(out_dir),
                           m=160, task_count=2, grid_shape=(6, 6),
                           n_theta=60, n_m=60, methods=("direnet", "manual"),
                           threads=1)
    cfg.train = replace(cfg.train, max_epochs=2, patience=2, batch_size=64,
                        seed=seed)
    return cfg


def cmd_smoke(out_dir, seed: int = 0) -> dict:
    """Full pipeline at toy scale; returns artifact digests (manifest and
    config excluded: they carry timestamps/paths, artifacts do not)."""
    cfg = smoke_config(out_dir, seed)
    cfg.save(Path(cfg.out_dir) / "config.json")
    cmd_simulate(cfg)
    cmd_train(cfg)
    cmd_infer(cfg)
    cmd_evaluate(cfg)
    cmd_bootstrap(cfg, "kl", method="direnet")
    manifest = RunManifest(Path(cfg.out_dir) / "manifest.json")
    return manifest.artifact_digests
