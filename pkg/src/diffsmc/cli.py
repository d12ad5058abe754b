"""Experiment runner.

Subcommands: ``vi`` (fit the variational reparameterization), ``sample``
(seeded sampler runs), ``train`` (iterative potential refinement),
``eval`` (estimate summaries and sample-quality metrics), ``demo``
(tempering-versus-noising density curves).  One config file determines
a run; per-seed outputs are written atomically to distinct files and
merged in seed order, so reruns are byte-identical no matter how many
worker threads are used.  Timestamps live in a separate metadata file,
never in the record streams.

Exit codes: 0 success, 1 runtime degeneracy, 2 usage or validation
errors.
"""

import argparse
import concurrent.futures
import json
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from . import metrics, nn, report, rng as rngs, vi
from .config import ConfigError
from .potentials import NeuralPotential, SimplePotential
from .schedule import NoiseSchedule
from .smc import (
    DegenerateRunError,
    MCMCConfig,
    ProposalError,
    SMCConfig,
    run_smc,
    run_smc_adaptive,
)
from .targets import (
    Reparameterization,
    load_dataset,
    make_funnel,
    make_gaussian,
    make_gmm40,
    make_logreg,
    make_mixture6,
    make_standard_normal,
    reparameterize,
)
from .train import TrainConfig, refine

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def build_target(cfg):
    name = cfg.get("target", "name")
    if name == "gaussian":
        return make_gaussian(cfg.get("target", "mu"), cfg.get("target", "sigma"))
    if name == "mixture":
        return make_mixture6()
    if name == "funnel":
        return make_funnel(cfg.get("target", "dim"))
    if name == "gmm":
        return make_gmm40(
            cfg.get("target", "dim"),
            cfg.get("target", "seed"),
            cfg.get("target", "normalize_weights"),
        )
    if name == "normal":
        return make_standard_normal(cfg.get("target", "dim"))
    if name == "logreg":
        path = cfg.get("target", "dataset")
        if not path:
            raise ConfigError("logreg target requires target.dataset")
        features, labels = load_dataset(path, cfg.get("target", "standardize"))
        return make_logreg(features, labels, cfg.get("target", "prior_sigma"))
    raise ConfigError(f"unknown target {name!r}")


def build_schedule(cfg):
    return NoiseSchedule(
        kind=cfg.get("schedule", "kind"),
        steps=cfg.get("schedule", "steps"),
        offset=cfg.get("schedule", "offset"),
        beta_bounds=(cfg.get("schedule", "beta0"), cfg.get("schedule", "betaT")),
    )


def build_smc_config(cfg):
    mcmc = None
    if cfg.get("mcmc", "steps") > 0:
        mcmc = MCMCConfig(
            n_steps=cfg.get("mcmc", "steps"),
            times=tuple(cfg.get("mcmc", "times")),
            step_sizes=tuple(cfg.get("mcmc", "sizes")),
        )
    return SMCConfig(
        n_particles=cfg.get("smc", "particles"),
        resampling=cfg.get("smc", "resampling"),
        integrator=cfg.get("smc", "integrator"),
        ess_threshold=cfg.get("smc", "ess_threshold"),
        mcmc=mcmc,
    )


def apply_reparameterization(cfg, target):
    """Wrap the target in the fitted standardization when configured."""
    path = cfg.get("vi", "load_path")
    if not path:
        return target
    with open(path, "r", encoding="utf-8") as fh:
        fit = json.load(fh)
    rep = Reparameterization(
        mean=np.asarray(fit["mean"]), scale=np.asarray(fit["scale"])
    )
    return reparameterize(target, rep)


def build_potential(cfg, target, schedule):
    variant = cfg.get("potential", "variant")
    if variant == "simple":
        return SimplePotential(target, schedule)
    path = cfg.get("potential", "checkpoint")
    if path:
        network = nn.load_network(path)
        if network.config.dim != target.dim:
            raise ConfigError("checkpoint dimension does not match target")
    else:
        net_cfg = nn.NetConfig(
            dim=target.dim,
            embed_dim=cfg.get("net", "embed_dim"),
            hidden=cfg.get("net", "hidden"),
            layers=cfg.get("net", "layers"),
        )
        network = nn.init_network(net_cfg, rngs.stream(0, rngs.NET_INIT))
    return NeuralPotential(target, schedule, network)


def _write_atomic(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_meta(outdir, cfg, command):
    meta = {
        "command": command,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "config": cfgmod.serialize(cfg),
    }
    _write_atomic(os.path.join(outdir, "meta.json"), json.dumps(meta, indent=2))


def cmd_vi(cfg, outdir):
    target = build_target(cfg)
    load_path = cfg.get("vi", "load_path")
    save_path = cfg.get("vi", "save_path") or os.path.join(outdir, "vi.json")
    if load_path and os.path.exists(load_path):
        print(f"reusing variational fit at {load_path}")
        return 0
    try:
        rep, trace = vi.fit_meanfield(
            target,
            steps=cfg.get("vi", "steps"),
            lr=cfg.get("vi", "lr"),
            seed=cfg.seeds()[0],
            n_mc=cfg.get("vi", "mc"),
            return_trace=True,
        )
    except vi.FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    payload = {
        "target": target.name,
        "mean": rep.mean.tolist(),
        "scale": rep.scale.tolist(),
        "final_elbo": float(np.mean(trace[-max(1, len(trace) // 100):])),
    }
    _write_atomic(save_path, json.dumps(payload, sort_keys=True, indent=2))
    _write_meta(outdir, cfg, "vi")
    print(f"wrote variational fit to {save_path}")
    return 0


def _run_one_seed(args):
    cfg, target, schedule, potential, smc_config, seed, outdir = args
    path = os.path.join(outdir, "runs", f"seed_{seed}.jsonl")
    runner = run_smc_adaptive if cfg.get("smc", "adaptive") else run_smc
    try:
        rep = runner(target, potential, schedule, smc_config, seed)
    except (DegenerateRunError, ProposalError) as exc:
        _write_atomic(path, json.dumps({"seed": seed, "error": str(exc)}) + "\n")
        return seed, False
    _write_atomic(path, report.dumps_report(rep, thin=cfg.get("experiment", "thin")))
    return seed, True


def cmd_sample(cfg, outdir, threads):
    target = apply_reparameterization(cfg, build_target(cfg))
    schedule = build_schedule(cfg)
    potential = build_potential(cfg, target, schedule)
    smc_config = build_smc_config(cfg)
    os.makedirs(os.path.join(outdir, "runs"), exist_ok=True)
    seeds = cfg.seeds()
    jobs = [
        (cfg, target, schedule, potential, smc_config, seed, outdir) for seed in seeds
    ]
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one_seed, jobs))
    else:
        results = [_run_one_seed(job) for job in jobs]
    ok = sum(1 for _, good in results if good)
    merged = []
    for seed in seeds:
        with open(os.path.join(outdir, "runs", f"seed_{seed}.jsonl")) as fh:
            merged.append(fh.read())
    _write_atomic(os.path.join(outdir, "runs.jsonl"), "".join(merged))
    _write_meta(outdir, cfg, "sample")
    print(f"{ok}/{len(seeds)} seeds succeeded; runs in {outdir}/runs.jsonl")
    return 0 if ok > 0 else RUNTIME_ERROR


def cmd_train(cfg, outdir):
    target = apply_reparameterization(cfg, build_target(cfg))
    schedule = build_schedule(cfg)
    smc_config = build_smc_config(cfg)
    train_config = TrainConfig(
        loss=cfg.get("train", "loss"),
        batch=cfg.get("train", "batch"),
        n_updates=cfg.get("train", "updates"),
        lr=cfg.get("train", "lr"),
        decay_rate=cfg.get("train", "decay_rate"),
        decay_every=cfg.get("train", "decay_every"),
        refine_rounds=cfg.get("train", "rounds"),
    )
    net_cfg = nn.NetConfig(
        dim=target.dim,
        embed_dim=cfg.get("net", "embed_dim"),
        hidden=cfg.get("net", "hidden"),
        layers=cfg.get("net", "layers"),
    )
    seed = cfg.seeds()[0]
    network = nn.init_network(net_cfg, rngs.stream(seed, rngs.NET_INIT))
    os.makedirs(outdir, exist_ok=True)
    try:
        network, reports, trace = refine(
            target, schedule, smc_config, train_config, seed, network=network
        )
    except (DegenerateRunError, ProposalError) as exc:
        print(f"error: refinement aborted: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    ckpt = os.path.join(outdir, "checkpoint.bin")
    nn.save_network(ckpt, network)
    lines = [json.dumps(rec, sort_keys=True) for rec in trace]
    _write_atomic(os.path.join(outdir, "loss_trace.jsonl"), "\n".join(lines) + "\n")
    round_lines = [
        json.dumps(
            {"round": i, "log_z": rep.log_z, "resample_events": rep.resample_events},
            sort_keys=True,
        )
        for i, rep in enumerate(reports)
    ]
    _write_atomic(
        os.path.join(outdir, "rounds.jsonl"), "\n".join(round_lines) + "\n"
    )
    _write_meta(outdir, cfg, "train")
    print(f"wrote checkpoint to {ckpt} ({len(trace)} loss records)")
    return 0


def cmd_eval(cfg, outdir):
    runs_path = os.path.join(outdir, "runs.jsonl")
    if not os.path.exists(runs_path):
        print(f"error: no run log at {runs_path}", file=sys.stderr)
        return USAGE_ERROR
    target = apply_reparameterization(cfg, build_target(cfg))
    records = report.read_final_records(runs_path)
    finals = [r for r in records if "log_z" in r]
    if not finals:
        print("error: run log contains no successful runs", file=sys.stderr)
        return USAGE_ERROR
    summary = metrics.summarize_logz(
        [r["log_z"] for r in finals], target.log_normalizer
    )
    payload = {"log_z": summary.to_dict(), "n_failed": len(records) - len(finals)}

    radius = cfg.get("eval", "coverage_radius")
    if radius > 0 and target.info and "means" in target.info:
        samples = np.concatenate(
            [np.asarray(r["samples"], dtype=np.float64) for r in finals]
        )
        fractions = metrics.mode_coverage(samples, target.info["means"], radius)
        payload["mode_coverage"] = fractions.tolist()

    n_sink = cfg.get("eval", "sinkhorn_points")
    if n_sink > 0 and target.sampler is not None:
        rng = rngs.stream(cfg.seeds()[0], rngs.EVAL)
        model_samples = np.asarray(finals[0]["samples"], dtype=np.float64)
        take = min(n_sink, model_samples.shape[0])
        exact = target.sample(rng, take)
        eps = cfg.get("eval", "sinkhorn_eps") or None
        cost, converged, violation = metrics.sinkhorn_w2(
            model_samples[:take], exact, epsilon=eps
        )
        payload["sinkhorn"] = {
            "cost": cost,
            "converged": converged,
            "violation": violation,
        }
    _write_atomic(
        os.path.join(outdir, "eval.json"), json.dumps(payload, sort_keys=True, indent=2)
    )
    lines = [
        json.dumps({"metric": name, "value": value}, sort_keys=True)
        for name, value in payload.items()
    ]
    _write_atomic(os.path.join(outdir, "metrics.jsonl"), "\n".join(lines) + "\n")
    _write_meta(outdir, cfg, "eval")
    print(json.dumps(payload["log_z"], sort_keys=True))
    return 0


def cmd_demo(cfg, outdir):
    grid = np.linspace(-8.0, 8.0, 481)
    curves = metrics.tempering_vs_noising_demo(grid)
    lines = ["t,x,density_tempered,density_noised"]
    for i, t in enumerate(curves["times"]):
        for j, x in enumerate(curves["grid"]):
            lines.append(
                f"{t!r},{x!r},{curves['tempered'][i, j]!r},{curves['noised'][i, j]!r}"
            )
    os.makedirs(outdir, exist_ok=True)
    _write_atomic(os.path.join(outdir, "demo.csv"), "\n".join(lines) + "\n")
    print(f"wrote {outdir}/demo.csv")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="diffsmc",
        description="Denoising-diffusion SMC sampler experiment runner",
    )
    parser.add_argument("command", choices=("vi", "sample", "train", "eval", "demo"))
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--seed-range", default=None,
                        help="'a:b' half-open range or comma list override")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for per-seed dispatch")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        cfg = cfgmod.load(args.config)
        if args.seed_range:
            cfg.set("experiment", "seeds", args.seed_range)
        if args.out:
            cfg.set("experiment", "out", args.out)
        if args.threads:
            cfg.set("experiment", "threads", args.threads)
        cfgmod.validate(cfg, check_files=args.command != "demo")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    outdir = cfg.get("experiment", "out")
    os.makedirs(outdir, exist_ok=True)
    threads = cfg.get("experiment", "threads")
    if args.command == "vi":
        return cmd_vi(cfg, outdir)
    if args.command == "sample":
        return cmd_sample(cfg, outdir, threads)
    if args.command == "train":
        return cmd_train(cfg, outdir)
    if args.command == "eval":
        return cmd_eval(cfg, outdir)
    return cmd_demo(cfg, outdir)


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
