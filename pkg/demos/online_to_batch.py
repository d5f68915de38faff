"""Average LightONS iterates and measure held-out excess risk.

Uses the linear task; the excess risk should shrink as the horizon grows and
stay under the high-probability bound computed from the run's own regret.

    python3 demos/online_to_batch.py --seeds 5
"""
import argparse

from lightons.harness import ExperimentConfig, run_single
from lightons.learners import gamma_ons
from lightons.projection import Ball
from lightons.tasks import HELDOUT, StreamConfig, excess_risk_bound, offline_best_comparator, online_to_batch, sample_stream


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--heldout", type=int, default=100_000)
    args = p.parse_args()

    gamma0 = gamma_ons(2.0, 0.1, 5.0)
    for seed in range(args.seeds):
        held = sample_stream(StreamConfig("linear", 10, args.heldout, 1000 + seed, purpose=HELDOUT))
        comp = offline_best_comparator(held, Ball(1.0))
        cells = []
        for T in (100, 1000, 10_000):
            summary, trace = run_single(ExperimentConfig(T=T, runs=1, seed=1000 + seed), 0)
            risk = online_to_batch(trace.decisions, held, comparator=comp).excess_risk
            cells.append(f"T={T}: {risk:.2e}")
        bound = excess_risk_bound(summary.final_regret, 10_000, gamma0)
        print(f"seed {seed}  " + "  ".join(cells) + f"  (bound at T=1e4: {bound:.2e})")


if __name__ == "__main__":
    main()
