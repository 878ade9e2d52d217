"""Command line entry point.

Subcommands cover the whole pipeline: gen-data, train-goal, train-dist,
train-bc, train-adapt, rollout-eval, train-rl, eval-table, plot, and
attach-paraphrases. Options come from a flat JSON config file overridden by
flags; the RETAIL_SEED environment variable overrides the seed everywhere.

Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import configs, dataset, pipeline, plotting, policy_adapt, reward_adapt
from .dataset import DatasetConfig, DatasetError
from .envs import DOMAIN_NAVIGATE, DOMAIN_REARRANGE

log = logging.getLogger("reladapt")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


@dataclass
class RunConfig:
    domain: str = DOMAIN_REARRANGE
    workdir: str = "workspace"
    scale: float = 1.0
    seed: int = 0
    language: str = "template"      # template | paraphrase | both
    goal_epochs: int = 100
    dist_epochs: int = 100
    dist_pairs_per_demo: int = 32
    bc_epochs: int = 20
    bc_max_states_per_demo: int = 0
    adapter_epochs: int = 10
    rollouts: int = 100
    rl_steps: int = 100_000
    rl_tasks: str = "all"           # "all" or comma-separated indices
    rl_seeds: str = "0"             # comma-separated seeds
    reward: str = "learned"         # learned | oracle | zero
    init: str = "random"            # random | distilled
    distill_steps: int = 2000
    distill_entropy_coef: float = 0.05
    distill_log_std_floor: float = -0.5
    jobs: int = 1

    def data_dir(self) -> Path:
        return Path(self.workdir) / "data" / self.domain

    def models_dir(self) -> Path:
        return Path(self.workdir) / "models" / self.domain

    def runs_dir(self) -> Path:
        return Path(self.workdir) / "runs" / self.domain

    def plots_dir(self) -> Path:
        return Path(self.workdir) / "plots"


class ConfigError(Exception):
    pass


def load_run_config(args) -> RunConfig:
    values: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {args.config}: {err}") from err
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a flat JSON object")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(raw)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    env_seed = os.environ.get("RETAIL_SEED")
    if env_seed is not None:
        try:
            values["seed"] = int(env_seed)
        except ValueError as err:
            raise ConfigError(f"RETAIL_SEED must be an integer, got {env_seed!r}") from err
    try:
        cfg = RunConfig(**values)
    except TypeError as err:
        raise ConfigError(str(err)) from err
    if cfg.domain not in (DOMAIN_REARRANGE, DOMAIN_NAVIGATE):
        raise ConfigError(f"domain must be rearrange|navigate, got {cfg.domain!r}")
    if not 0.0 < cfg.scale <= 1.0:
        raise ConfigError(f"scale must lie in (0, 1], got {cfg.scale}")
    if cfg.reward not in pipeline.REWARD_MODES:
        raise ConfigError(f"reward must be one of {pipeline.REWARD_MODES}")
    if cfg.init not in pipeline.INIT_MODES:
        raise ConfigError(f"init must be one of {pipeline.INIT_MODES}")
    return cfg


def _persist_config(cfg: RunConfig, command: str) -> None:
    out = Path(cfg.workdir) / "configs"
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{command}.json").write_text(json.dumps(asdict(cfg), indent=2) + "\n",
                                         encoding="utf-8")


# -- commands ---------------------------------------------------------------------


def cmd_gen_data(cfg: RunConfig, args) -> int:
    manifest = dataset.generate_dataset(DatasetConfig(
        domain=cfg.domain, out_dir=str(cfg.data_dir()), seed=cfg.seed, scale=cfg.scale))
    print(json.dumps({k: manifest[k] for k in ("domain", "seed", "scale", "counts",
                                               "content_hash")}, indent=2))
    return EXIT_OK


def _load_split(cfg: RunConfig, split: str):
    return dataset.load_triplets(cfg.data_dir(), split)


def cmd_train_goal(cfg: RunConfig, args) -> int:
    vocab = dataset.load_vocab(cfg.data_dir())
    train = _load_split(cfg, "train")
    val = _load_split(cfg, "val")
    gcfg = configs.goal_config_for(cfg.domain, epochs=cfg.goal_epochs)
    model, metrics = reward_adapt.train_goal_predictor(
        train, val, vocab, cfg.domain, gcfg, seed=cfg.seed, language=cfg.language)
    pipeline.save_model(cfg.models_dir() / "goal.ckpt", model, "goal", gcfg)
    pipeline.write_metrics_csv(cfg.models_dir() / "goal_metrics.csv", metrics)
    print(f"goal predictor saved; best val MAE "
          f"{min(m['val_mae'] for m in metrics):.4f}")
    return EXIT_OK


def cmd_train_dist(cfg: RunConfig, args) -> int:
    train = _load_split(cfg, "train")
    val = _load_split(cfg, "val")
    dcfg = configs.distance_config_for(cfg.domain, epochs=cfg.dist_epochs,
                                       pairs_per_demo=cfg.dist_pairs_per_demo)
    model, metrics = reward_adapt.train_distance(train, val, cfg.domain, dcfg,
                                                 seed=cfg.seed)
    pipeline.save_model(cfg.models_dir() / "distance.ckpt", model, "distance", dcfg)
    pipeline.write_metrics_csv(cfg.models_dir() / "distance_metrics.csv", metrics)
    print(f"distance net saved; final ranking "
          f"{metrics[-1].get('val_ranking', float('nan')):.4f}")
    return EXIT_OK


def cmd_train_bc(cfg: RunConfig, args) -> int:
    train = _load_split(cfg, "train")
    bcfg = configs.bc_config_for(cfg.domain, epochs=cfg.bc_epochs,
                                 max_states_per_demo=cfg.bc_max_states_per_demo)
    policy, metrics = policy_adapt.train_bc(train, cfg.domain, bcfg, seed=cfg.seed)
    pipeline.save_model(cfg.models_dir() / "bc.ckpt", policy, "bc", bcfg)
    pipeline.write_metrics_csv(cfg.models_dir() / "bc_metrics.csv", metrics)
    print(f"goal-conditioned policy saved; final loss {metrics[-1]['train_loss']:.5f}")
    return EXIT_OK


def cmd_train_adapt(cfg: RunConfig, args) -> int:
    vocab = dataset.load_vocab(cfg.data_dir())
    train = _load_split(cfg, "train")
    policy = pipeline.load_model(cfg.models_dir() / "bc.ckpt")
    data = policy_adapt.relabel_actions(train, policy, vocab, cfg.domain,
                                        language=cfg.language)
    acfg = configs.adapter_config_for(cfg.domain, epochs=cfg.adapter_epochs)
    adapter, metrics = policy_adapt.train_adapter(data, cfg.domain, vocab, acfg,
                                                  seed=cfg.seed)
    pipeline.save_model(cfg.models_dir() / "adapter.ckpt", adapter, "adapter", acfg)
    pipeline.write_metrics_csv(cfg.models_dir() / "adapter_metrics.csv", metrics)
    print(f"action adapter saved; final loss {metrics[-1]['train_loss']:.5f}")
    return EXIT_OK


def cmd_rollout_eval(cfg: RunConfig, args) -> int:
    vocab = dataset.load_vocab(cfg.data_dir())
    tasks = _load_split(cfg, "rl_test")
    policy = pipeline.load_model(cfg.models_dir() / "bc.ckpt")
    adapter = pipeline.load_model(cfg.models_dir() / "adapter.ckpt")
    stats = policy_adapt.rollout_success_rate(tasks, policy, adapter, vocab,
                                              n_rollouts=cfg.rollouts, seed=cfg.seed,
                                              language=cfg.language)
    print(json.dumps(stats, indent=2))
    return EXIT_OK


def _rl_worker(payload: dict) -> dict:
    cfg = RunConfig(**payload["cfg"])
    triplets = dataset.load_triplets(cfg.data_dir(), "rl_test")
    triplet = triplets[payload["task"]]
    vocab = dataset.load_vocab(cfg.data_dir())
    models = {}
    if payload["reward"] == "learned" or payload["init"] == "distilled":
        models["goal"] = pipeline.load_model(cfg.models_dir() / "goal.ckpt")
        models["distance"] = pipeline.load_model(cfg.models_dir() / "distance.ckpt")
    if payload["init"] == "distilled":
        models["bc"] = pipeline.load_model(cfg.models_dir() / "bc.ckpt")
        models["adapter"] = pipeline.load_model(cfg.models_dir() / "adapter.ckpt")
    csv_path = cfg.runs_dir() / pipeline.run_name(payload["task"], payload["seed"],
                                                  payload["reward"], payload["init"])
    dcfg = configs.distill_config_for(cfg.domain, steps=cfg.distill_steps,
                                      entropy_coef=cfg.distill_entropy_coef,
                                      log_std_floor=cfg.distill_log_std_floor)
    result = pipeline.run_rl_for_task(
        triplet, payload["reward"], payload["init"], cfg.rl_steps, payload["seed"],
        models, vocab, csv_path=csv_path, distill_cfg=dcfg, language=cfg.language)
    return {"task": payload["task"], "seed": payload["seed"],
            "successes": result.successes, "episodes": result.episodes,
            "csv": str(csv_path)}


def cmd_train_rl(cfg: RunConfig, args) -> int:
    triplets = dataset.load_triplets(cfg.data_dir(), "rl_test")
    if cfg.rl_tasks == "all":
        task_ids = list(range(len(triplets)))
    else:
        task_ids = [int(x) for x in cfg.rl_tasks.split(",") if x != ""]
    seeds = [int(x) for x in cfg.rl_seeds.split(",") if x != ""]
    jobs = []
    for task in task_ids:
        if task >= len(triplets):
            raise DatasetError(f"task index {task} out of range ({len(triplets)} tasks)")
        for seed in seeds:
            jobs.append({"cfg": asdict(cfg), "task": task, "seed": seed,
                         "reward": cfg.reward, "init": cfg.init})
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            for res in pool.map(_rl_worker, jobs):
                print(json.dumps(res))
    else:
        for job in jobs:
            print(json.dumps(_rl_worker(job)))
    return EXIT_OK


def cmd_eval_table(cfg: RunConfig, args) -> int:
    results = pipeline.collect_run_results(cfg.runs_dir())
    if not results:
        raise DatasetError(f"no run CSVs under {cfg.runs_dir()}")
    table = pipeline.summarize_runs(results)
    print(pipeline.format_table(table))
    out = cfg.runs_dir() / "summary.json"
    out.write_text(json.dumps(table, indent=2) + "\n", encoding="utf-8")
    print(f"\nwritten to {out}")
    return EXIT_OK


def cmd_plot(cfg: RunConfig, args) -> int:
    from .rl_ppo import read_run_csv

    runs_dir = cfg.runs_dir()
    groups: dict[str, list[list[dict]]] = {}
    for path in sorted(runs_dir.glob("*.csv")):
        m = pipeline.RUN_NAME_RE.search(path.name)
        if not m:
            continue
        groups.setdefault(f"{m.group(3)}/{m.group(4)}", []).append(read_run_csv(path))
    if not groups:
        raise DatasetError(f"no run CSVs under {runs_dir}")
    curves = {}
    for name, runs in sorted(groups.items()):
        n = min(len(r) for r in runs)
        xs = [runs[0][i]["env_steps"] for i in range(n)]
        ys = [float(np.mean([r[i]["cumulative_successes"] for r in runs]))
              for i in range(n)]
        curves[name] = (xs, ys)
    out = cfg.plots_dir() / f"{cfg.domain}_curves.svg"
    plotting.plot_curves_svg(out, curves, title=f"{cfg.domain}: cumulative successes")
    print(f"plot written to {out}")
    return EXIT_OK


def cmd_attach_paraphrases(cfg: RunConfig, args) -> int:
    stats = dataset.attach_paraphrases(cfg.data_dir(), args.split, args.file)
    print(json.dumps(stats, indent=2))
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-goal": cmd_train_goal,
    "train-dist": cmd_train_dist,
    "train-bc": cmd_train_bc,
    "train-adapt": cmd_train_adapt,
    "rollout-eval": cmd_rollout_eval,
    "train-rl": cmd_train_rl,
    "eval-table": cmd_eval_table,
    "plot": cmd_plot,
    "attach-paraphrases": cmd_attach_paraphrases,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reladapt",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat JSON config file")
        p.add_argument("--domain", choices=[DOMAIN_REARRANGE, DOMAIN_NAVIGATE])
        p.add_argument("--workdir")
        p.add_argument("--scale", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--language", choices=["template", "paraphrase", "both"])
        p.add_argument("--jobs", type=int)
        if name.startswith("train-") or name == "rollout-eval":
            p.add_argument("--goal-epochs", dest="goal_epochs", type=int)
            p.add_argument("--dist-epochs", dest="dist_epochs", type=int)
            p.add_argument("--dist-pairs-per-demo", dest="dist_pairs_per_demo", type=int)
            p.add_argument("--bc-epochs", dest="bc_epochs", type=int)
            p.add_argument("--bc-max-states-per-demo", dest="bc_max_states_per_demo", type=int)
            p.add_argument("--adapter-epochs", dest="adapter_epochs", type=int)
            p.add_argument("--rollouts", type=int)
        if name == "train-rl":
            p.add_argument("--reward", choices=list(pipeline.REWARD_MODES))
            p.add_argument("--init", choices=list(pipeline.INIT_MODES))
            p.add_argument("--steps", dest="rl_steps", type=int)
            p.add_argument("--tasks", dest="rl_tasks")
            p.add_argument("--seeds", dest="rl_seeds")
            p.add_argument("--distill-steps", dest="distill_steps", type=int)
            p.add_argument("--distill-entropy-coef", dest="distill_entropy_coef", type=float)
            p.add_argument("--distill-log-std-floor", dest="distill_log_std_floor", type=float)
        if name == "attach-paraphrases":
            p.add_argument("--split", required=True)
            p.add_argument("--file", required=True)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RELADAPT_LOGLEVEL", "WARNING"),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args)
        _persist_config(cfg, args.command)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as err:
        print(f"training diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
