#!/usr/bin/env python3
"""End-to-end smoke run of the full pipeline at a small scale.

Generates data, trains all four supervised models, evaluates adaptation
rollouts, runs a short PPO job per reward mode, and emits the summary table
and learning-curve plot. Finishes in well under half an hour on a laptop at
the default --scale 0.02.
"""

import argparse
import subprocess
import sys
import time


def sh(args):
    print("+", " ".join(args), flush=True)
    t0 = time.time()
    code = subprocess.call(args)
    print(f"  ({time.time() - t0:.0f}s)")
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--workdir", default="workspace/smoke")
    parser.add_argument("--domain", default="rearrange",
                        choices=["rearrange", "navigate"])
    parser.add_argument("--scale", type=float, default=0.02)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--rl-steps", type=int, default=8000)
    args = parser.parse_args()

    base = ["--domain", args.domain, "--workdir", args.workdir,
            "--seed", str(args.seed)]
    cli = [sys.executable, "-m", "reladapt.cli"]

    sh(cli + ["gen-data", *base, "--scale", str(args.scale)])
    sh(cli + ["train-goal", *base, "--goal-epochs", "30"])
    sh(cli + ["train-dist", *base, "--dist-epochs", "15",
              "--dist-pairs-per-demo", "8"])
    sh(cli + ["train-bc", *base, "--bc-epochs", "10"])
    sh(cli + ["train-adapt", *base, "--adapter-epochs", "5"])
    sh(cli + ["rollout-eval", *base, "--rollouts", "30"])
    for reward in ("oracle", "learned", "zero"):
        sh(cli + ["train-rl", *base, "--reward", reward, "--init", "random",
                  "--steps", str(args.rl_steps), "--tasks", "0", "--seeds", "0"])
    sh(cli + ["train-rl", *base, "--reward", "learned", "--init", "distilled",
              "--steps", str(args.rl_steps), "--tasks", "0", "--seeds", "0",
              "--distill-steps", "500"])
    sh(cli + ["eval-table", *base])
    sh(cli + ["plot", *base])


if __name__ == "__main__":
    main()
