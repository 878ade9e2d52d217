#!/usr/bin/env python3
"""Reproduce the benchmark tables at a chosen scale.

The full-paper protocol (scale 1.0, 500k/100k PPO steps, 5 seeds x 30 test
tasks) takes days on a desktop; the default arguments here reproduce the
qualitative orderings at desk scale in a few hours.
"""

import argparse
import subprocess
import sys


def sh(args):
    print("+", " ".join(args), flush=True)
    code = subprocess.call(args)
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--workdir", default="workspace/bench")
    parser.add_argument("--domain", default="rearrange",
                        choices=["rearrange", "navigate"])
    parser.add_argument("--scale", type=float, default=0.1)
    parser.add_argument("--steps", type=int, default=None,
                        help="PPO steps per run (default 100k grid / 30k arena)")
    parser.add_argument("--tasks", default="0,1,2,3,4")
    parser.add_argument("--seeds", default="0,1")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    steps = args.steps or (100_000 if args.domain == "rearrange" else 30_000)
    base = ["--domain", args.domain, "--workdir", args.workdir, "--seed", "0"]
    cli = [sys.executable, "-m", "reladapt.cli"]

    sh(cli + ["gen-data", *base, "--scale", str(args.scale)])
    sh(cli + ["train-goal", *base])
    sh(cli + ["train-dist", *base, "--dist-epochs", "40",
              "--dist-pairs-per-demo", "8"])
    sh(cli + ["train-bc", *base])
    sh(cli + ["train-adapt", *base])
    sh(cli + ["rollout-eval", *base, "--rollouts", "100"])
    for reward, init in (("oracle", "random"), ("zero", "random"),
                         ("learned", "random"), ("learned", "distilled")):
        sh(cli + ["train-rl", *base, "--reward", reward, "--init", init,
                  "--steps", str(steps), "--tasks", args.tasks,
                  "--seeds", args.seeds, "--jobs", str(args.jobs)])
    sh(cli + ["eval-table", *base])
    sh(cli + ["plot", *base])


if __name__ == "__main__":
    main()
