"""Run ONS and LightONS side by side on both synthetic tasks.

Prints final regret, certified bound and projection counts averaged over
runs. LightONS should track ONS closely while projecting far less often.

    python3 demos/compare_learners.py --T 10000 --runs 5
"""
import argparse

import numpy as np

from lightons.harness import ExperimentConfig, run_single


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--T", type=int, default=10_000)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args()

    print(f"{'task':>9} {'algorithm':>15} {'regret':>9} {'bound':>9} {'projections':>12} {'max |y|':>8}")
    for task in ("linear", "logistic"):
        for alg in ("ons", "lightons", "lightons-core"):
            cfg = ExperimentConfig(algorithm=alg, task=task, T=args.T, runs=args.runs, seed=args.seed)
            rows = [run_single(cfg, r)[0] for r in range(args.runs)]
            print(
                f"{task:>9} {alg:>15} {np.mean([s.final_regret for s in rows]):9.3f}"
                f" {rows[0].regret_bound:9.2f} {np.mean([s.projections for s in rows]):12.1f}"
                f" {max(s.max_y_norm for s in rows):8.3f}"
            )


if __name__ == "__main__":
    main()
