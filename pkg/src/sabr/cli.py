"""``abr`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
Option values resolve as: command-line flag, then environment (``ABR_SEED``
for seeds), then the ``--config`` JSON file, then built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, SabrError
from .expert import ExpertConfig, beam_search
from .fixtures import write_fixture_benchmark
from .harness import (ALGORITHMS, ControllerPolicy, NetPolicy, OraclePolicy, evaluate_runs, rank_table,
                      read_qoe_table, write_results, write_summary)
from .mlp import load_model, save_model
from .qoe import QoEConfig
from .sim import SimConfig
from .traces import load_manifest, trace_stats
from .train import DPOConfig, PPOConfig, TrainEnv, run_bc_pretraining, run_rl_finetune
from .video import load_video

log = logging.getLogger("abr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def default_config() -> dict:
    """Default hyperparameters of every training component."""
    return {
        "dpo": asdict(DPOConfig()),
        "ppo": asdict(PPOConfig()),
        "expert": {"horizon": ExpertConfig().horizon, "max_beams": ExpertConfig().max_beams},
        "sim": asdict(SimConfig()),
        "ppo_total_env_steps": PPOConfig().total_env_steps,
    }


def versions() -> dict:
    import scipy
    return {"sabr": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


class Settings:
    """Resolve option values with flag > env > config file > default precedence."""

    def __init__(self, args):
        self.args = args
        self.file = {}
        if getattr(args, "config", None):
            try:
                self.file = json.loads(Path(args.config).read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {args.config}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}") from None

    def get(self, name, default=None, env=None, required=False):
        val = getattr(self.args, name, None)
        if val is None and env and os.environ.get(env) not in (None, ""):
            val = os.environ[env]
        if val is None:
            val = self.file.get(name)
        if val is None:
            val = default
        if val is None and required:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")
        return val

    def seed(self) -> int:
        try:
            return int(self.get("seed", 0, env="ABR_SEED"))
        except ValueError:
            raise ConfigError("seed must be an integer") from None


def _bench(settings):
    manifest = load_manifest(settings.get("manifest", required=True))
    video = load_video(settings.get("video", required=True))
    if tuple(video.ladder_kbps) != tuple(manifest.ladder_kbps):
        raise ConfigError(f"video ladder {video.ladder_kbps} differs from manifest ladder {manifest.ladder_kbps}")
    sim_cfg = SimConfig(chunk_duration_ms=video.chunk_duration_ms)
    return manifest, video, sim_cfg, QoEConfig(mu=manifest.mu)


def _overrides(cls, settings, names):
    cfg = cls()
    changes = {n: settings.get(n) for n in names if settings.get(n) is not None}
    try:
        return replace(cfg, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _logger(path):
    fh = open(path, "w", encoding="utf-8")

    def write(record, params):
        fh.write(json.dumps(record) + "\n")
        fh.flush()
        log.info("%s iteration %d: %s", record["stage"], record["iteration"],
                 {k: v for k, v in record.items() if k not in ("stage", "iteration")})
    return write, fh


def _with_checkpoints(write, out: Path, every: int | None, meta: dict):
    if not every:
        return write

    def hook(record, params):
        write(record, params)
        if record["iteration"] % every == 0:
            save_model(params, out.with_suffix(f".iter{record['iteration']}.json"),
                       {**meta, "iteration": record["iteration"]})
    return hook


def cmd_train_bc(args):
    s = Settings(args)
    seed = s.seed()
    manifest, video, sim_cfg, qoe = _bench(s)
    cfg = _overrides(DPOConfig, s, ["beta", "iterations", "epochs", "rollout_steps", "minibatch", "lr"])
    expert_cfg = ExpertConfig(horizon=int(s.get("beam_horizon", 5)), max_beams=int(s.get("max_beams", 5000)),
                              qoe=qoe)
    out = Path(s.get("out", required=True))
    env_seed, train_seed = np.random.SeedSequence(seed).generate_state(2)
    env = TrainEnv(manifest.train.traces, video, qoe, int(env_seed), sim_cfg)
    meta = {"seed": seed, "stage": "bc", "config": asdict(cfg),
            "expert": {"horizon": expert_cfg.horizon, "max_beams": expert_cfg.max_beams}, "mu": qoe.mu}
    write, fh = _logger(s.get("log") or out.with_suffix(".log.jsonl"))
    with fh:
        params = run_bc_pretraining(env, cfg, int(train_seed), expert=lambda st: beam_search(st, expert_cfg),
                                    hook=_with_checkpoints(write, out, s.get("checkpoint_every"), meta))
    save_model(params, out, meta)
    _record_run(out.with_suffix(".run.json"), args, meta)
    print(out)


def cmd_train_rl(args):
    s = Settings(args)
    seed = s.seed()
    manifest, video, sim_cfg, qoe = _bench(s)
    base_path = s.get("base", required=True)
    base, base_meta = load_model(base_path)
    cfg = _overrides(PPOConfig, s, ["iterations", "epochs", "rollout_steps", "minibatch", "lr", "clip",
                                    "gamma", "lam", "c1", "c2", "n_envs"])
    out = Path(s.get("out", required=True))
    seeds = np.random.SeedSequence(seed).generate_state(cfg.n_envs + 1)
    envs = [TrainEnv(manifest.train.traces, video, qoe, int(x), sim_cfg) for x in seeds[:-1]]
    # model files carry no paths so reruns elsewhere stay byte-identical; run.json has them
    meta = {"seed": seed, "stage": "rl", "config": asdict(cfg), "base_sha256": _sha256(base_path),
            "base_meta": base_meta, "mu": qoe.mu, "total_env_steps": cfg.total_env_steps}
    write, fh = _logger(s.get("log") or out.with_suffix(".log.jsonl"))
    with fh:
        actor, critic = run_rl_finetune(base, envs, cfg, int(seeds[-1]), return_critic=True,
                                        hook=_with_checkpoints(write, out, s.get("checkpoint_every"), meta))
    save_model(actor, out, meta)
    save_model(critic, out.with_suffix(".critic.json"), {**meta, "role": "critic"})
    _record_run(out.with_suffix(".run.json"), args, meta)
    print(out)


def cmd_eval(args):
    s = Settings(args)
    manifest, video, sim_cfg, qoe = _bench(s)
    algo = s.get("algo", required=True)
    if algo not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")
    group = s.get("group", "test")
    sets = manifest.group(group)
    if not sets:
        raise DataError(f"manifest has no {group!r} trace sets")
    seed = s.seed()
    n_runs = int(s.get("runs", 10))
    if algo == "policy":
        models = s.get("model", required=True)
        models = [models] if isinstance(models, str) else list(models)
        greedy = not s.get("sample", False)
        name = s.get("name") or "policy"
        policies = [NetPolicy(load_model(m)[0], greedy, seed + k, name) for k, m in enumerate(models)]
        n_runs = None if len(models) > 1 else n_runs
    elif algo == "oracle":
        policies = [OraclePolicy(ExpertConfig(horizon=int(s.get("beam_horizon", 5)),
                                              max_beams=int(s.get("max_beams", 5000)), qoe=qoe))]
    else:
        policies = [ControllerPolicy(algo, video, qoe, sim_cfg)]
    report = evaluate_runs(policies, sets, video, qoe, sim_cfg, n_runs)
    out = Path(s.get("out", required=True))
    out.mkdir(parents=True, exist_ok=True)
    write_results([report], out / "results.csv")
    write_summary([report], out / "summary.csv")
    _record_run(out / "run.json", args, {"seed": seed, "algorithm": report.algorithm, "group": group,
                                         "runs": len(report.runs), "replicated": report.replicated,
                                         "mu": qoe.mu})
    for name, mean in report.set_means().items():
        print(f"{report.algorithm}\t{name}\t{mean:.2f}")


def cmd_rank(args):
    s = Settings(args)
    paths = s.get("inputs", required=True)
    report = rank_table(read_qoe_table([paths] if isinstance(paths, str) else paths))
    out = s.get("out")
    if out:
        report.to_csv(out)
    print(report.format())


def cmd_trace_stats(args):
    s = Settings(args)
    manifest = load_manifest(s.get("manifest", required=True))
    print("group\ttrace_set\tcount\tmin_mbps\tmax_mbps")
    for role in ("train", "test", "ood"):
        for ts in manifest.group(role):
            n, lo, hi = trace_stats(ts)
            print(f"{role}\t{ts.name}\t{n}\t{lo:.2f}\t{hi:.2f}")


def cmd_synth_fixtures(args):
    s = Settings(args)
    path = write_fixture_benchmark(s.get("out", required=True), seed=s.seed(), mu=float(s.get("mu", 4.3)))
    print(path)


def cmd_show_config(args):
    print(json.dumps(default_config(), indent=2))


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _record_run(path, args, meta):
    doc = {"argv": sys.argv[1:], "args": {k: v for k, v in vars(args).items() if k != "func"},
           "meta": meta, "versions": versions()}
    Path(path).write_text(json.dumps(doc, indent=2, default=str) + "\n", encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="abr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, bench=True):
        sp.add_argument("--config", help="JSON file with option defaults")
        sp.add_argument("--seed", type=int, help="random seed (falls back to $ABR_SEED)")
        if bench:
            sp.add_argument("--manifest")
            sp.add_argument("--video")

    sp = sub.add_parser("train-bc", help="DPO behavior-cloning pretraining")
    common(sp)
    sp.add_argument("--out")
    sp.add_argument("--log")
    sp.add_argument("--checkpoint-every", type=int)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--rollout-steps", type=int)
    sp.add_argument("--minibatch", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--beam-horizon", type=int)
    sp.add_argument("--max-beams", type=int)
    sp.set_defaults(func=cmd_train_bc)

    sp = sub.add_parser("train-rl", help="PPO fine-tuning of a base model")
    common(sp)
    sp.add_argument("--base")
    sp.add_argument("--out")
    sp.add_argument("--log")
    sp.add_argument("--checkpoint-every", type=int)
    for name, typ in [("iterations", int), ("epochs", int), ("rollout-steps", int), ("minibatch", int),
                      ("lr", float), ("clip", float), ("gamma", float), ("lam", float), ("c1", float),
                      ("c2", float), ("n-envs", int)]:
        sp.add_argument(f"--{name}", type=typ)
    sp.set_defaults(func=cmd_train_rl)

    sp = sub.add_parser("eval", help="evaluate an algorithm per trace set")
    common(sp)
    sp.add_argument("--algo", help=f"one of {', '.join(ALGORITHMS)}")
    sp.add_argument("--model", action="append", help="model file (repeat for multi-model averaging)")
    sp.add_argument("--name", help="algorithm label for learned policies")
    sp.add_argument("--group", choices=["train", "test", "ood"])
    sp.add_argument("--runs", type=int, help="number of runs to average (default 10)")
    sp.add_argument("--sample", action="store_true", default=None, help="sample actions instead of argmax")
    sp.add_argument("--beam-horizon", type=int)
    sp.add_argument("--max-beams", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("rank", help="average rank from per-set QoE tables")
    common(sp, bench=False)
    sp.add_argument("--in", dest="inputs", action="append", help="QoE CSV (repeatable)")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("trace-stats", help="per-set trace counts and bandwidth ranges")
    common(sp, bench=False)
    sp.add_argument("--manifest")
    sp.set_defaults(func=cmd_trace_stats)

    sp = sub.add_parser("synth-fixtures", help="write a small synthetic benchmark")
    common(sp, bench=False)
    sp.add_argument("--out")
    sp.add_argument("--mu", type=float)
    sp.set_defaults(func=cmd_synth_fixtures)

    sp = sub.add_parser("show-config", help="print default hyperparameters")
    sp.set_defaults(func=cmd_show_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"abr: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"abr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SabrError, Exception) as exc:  # noqa: BLE001
        print(f"abr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
