"""Compare the sketched learner with full LightONS at growing dimension.

The sketch keeps 2d' rows instead of a d x d inverse. On a stream whose
gradients live in a low-dimensional subspace the trajectories coincide; on a
full-rank stream the accumulated sketch error stays within its bound.

    python3 demos/sketch_memory.py --d 50 --d-prime 8
"""
import argparse
import math

import numpy as np

from lightons.learners import LearnerConfig, init_learner, step
from lightons.tasks import StreamConfig, sample_stream


def drive(cfg, stream):
    state = init_learner(cfg)
    losses = []
    for t in range(len(stream)):
        f, g = stream.loss_grad(t, state.x)
        state, _ = step(state, g, f)
        losses.append(f)
    return state, float(np.sum(losses))


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--d-prime", type=int, default=8)
    p.add_argument("--T", type=int, default=1000)
    args = p.parse_args()

    stream = sample_stream(StreamConfig("linear", args.d, args.T, 3))
    eps = args.d * math.log(args.T)
    full, full_loss = drive(LearnerConfig(args.d, 2.0, 0.1, 5.0, eps), stream)
    sk, sk_loss = drive(LearnerConfig(args.d, 2.0, 0.1, 5.0, eps, variant="sketch", d_prime=args.d_prime), stream)
    print(f"cumulative loss: full {full_loss:.4f}, sketch {sk_loss:.4f}")
    print(f"floats held: full {2 * args.d**2}, sketch {sk.pd.S.size + sk.pd.R.size}")
    print(f"sketch SVDs {sk.pd.svd_events}, accumulated error {sk.pd.delta_accum:.3e}")


if __name__ == "__main__":
    main()
