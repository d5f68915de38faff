"""Experiment runner and command-line entry point.

Each run draws its stream, drives one learner for ``T`` rounds, solves the
hindsight comparator on the recorded losses and audits the final regret and
projection count against their certified bounds. Results go to
``summary.csv`` (one row per run) and optionally ``trace_run{i}.csv``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .learners import (
    REGRET_SLACK,
    LearnerConfig,
    default_epsilon,
    init_learner,
    projection_budget,
    regret_upper_bound,
    step,
)
from .projection import Ball
from .tasks import TASKS, StreamConfig, offline_best_comparator, sample_stream, task_alpha

logger = logging.getLogger(__name__)

ALGORITHMS = {"ons": "ons", "lightons": "full", "lightons-core": "core", "lightons-sketch": "sketch"}

EXIT_OK, EXIT_CONFIG, EXIT_AUDIT = 0, 1, 2

RNG_SCHEME = (
    "numpy PCG64 seeded by SeedSequence(seed, spawn_key=(run, purpose)); "
    "purpose 0 = online stream, 1 = held-out sample"
)


class ConfigError(ValueError):
    """One or more configuration problems, all listed in ``problems``."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "lightons"
    task: str = "linear"
    d: int = 10
    T: int = 10_000
    runs: int = 5
    seed: int = 7
    epsilon: float | str = "auto"
    k: float = 2.0
    d_prime: int | None = None
    radius: float = 1.0
    out: Path | None = None
    emit_per_round: bool = False
    G: float = 0.1
    alpha: float | None = None
    feature_scale: float | None = None
    backend: str = "tridiagonal"

    def problems(self) -> list[str]:
        """Every precondition violation, not just the first."""
        out = []
        if self.algorithm not in ALGORITHMS:
            out.append(f"algorithm must be one of {sorted(ALGORITHMS)}, got {self.algorithm!r}")
        if self.task not in TASKS:
            out.append(f"task must be one of {TASKS}, got {self.task!r}")
        if not isinstance(self.d, int) or self.d < 1:
            out.append(f"d must be a positive integer, got {self.d!r}")
        if not isinstance(self.T, int) or self.T < 0:
            out.append(f"T must be a nonnegative integer, got {self.T!r}")
        if not isinstance(self.runs, int) or self.runs < 1:
            out.append(f"runs must be a positive integer, got {self.runs!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            out.append(f"seed must be an integer in [0, 2^64), got {self.seed!r}")
        if self.epsilon != "auto" and not (isinstance(self.epsilon, (int, float)) and self.epsilon > 0):
            out.append(f"epsilon must be 'auto' or a positive number, got {self.epsilon!r}")
        if self.algorithm != "ons" and not self.k > 1:
            out.append(f"k must exceed 1, got {self.k!r}")
        if not self.radius > 0:
            out.append(f"radius must be positive, got {self.radius!r}")
        if not self.G > 0:
            out.append(f"G must be positive, got {self.G!r}")
        if self.backend not in ("dense", "tridiagonal"):
            out.append(f"backend must be 'dense' or 'tridiagonal', got {self.backend!r}")
        if self.algorithm == "lightons-sketch":
            if self.d_prime is None:
                out.append("lightons-sketch needs --d-prime")
            elif isinstance(self.d, int) and not 1 <= self.d_prime <= self.d // 2:
                out.append(f"d_prime must lie in [1, d/2], got {self.d_prime!r} with d={self.d}")
        if self.task in TASKS and self.radius > 0 and self.G > 0:
            try:
                task_alpha(self.task, Ball(self.radius), self.G, self.alpha)
            except ValueError as exc:
                out.append(str(exc))
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    @property
    def D(self) -> float:
        return 2.0 * self.radius

    def resolved_epsilon(self) -> float:
        if self.epsilon == "auto":
            return default_epsilon(self.d, max(self.T, 2))
        return float(self.epsilon)

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(
            d=self.d,
            D=self.D,
            G=self.G,
            alpha=task_alpha(self.task, Ball(self.radius), self.G, self.alpha),
            epsilon=self.resolved_epsilon(),
            k=self.k,
            domain=Ball(self.radius),
            variant=ALGORITHMS[self.algorithm],
            backend=self.backend,
            d_prime=self.d_prime,
        )

    def stream_config(self, run: int) -> StreamConfig:
        return StreamConfig(
            self.task, self.d, self.T, self.seed, run, self.feature_scale, self.G, self.radius, self.alpha
        )


@dataclass(frozen=True)
class RunSummary:
    """Per-run results; the CSV columns are exactly these fields.

    ``update_events`` counts O(d^2) preconditioner updates and
    ``projection_events`` the O(d^3) Mahalanobis projections (or, for the
    sketch, O(d'^3) SVDs plus densified projections); they stand in for wall
    time, which is not reproducible.
    """

    run: int
    seed: int
    algorithm: str
    task: str
    T: int
    final_regret: float
    regret_bound: float
    regret_audit_ok: bool
    projections: int
    projection_budget: int
    budget_audit_ok: bool
    G_T: float
    max_y_norm: float
    update_events: int
    projection_events: int
    sketch_delta: float
    clip_rate: float
    comparator_converged: bool

    @property
    def audits_ok(self) -> bool:
        return self.regret_audit_ok and self.budget_audit_ok


@dataclass(frozen=True)
class RunTrace:
    """Per-round series of one run (rows of ``trace_run{i}.csv``).

    ``y_norm[t-1]`` is the norm of the core iterate after the round-``t``
    update; ``decisions[t-1]`` is the point played at round ``t``.
    """

    t: np.ndarray
    regret: np.ndarray
    instantaneous_regret: np.ndarray
    y_norm: np.ndarray
    projected: list[str]
    zeta_t: np.ndarray
    decisions: np.ndarray
    comparator: np.ndarray


def run_single(config: ExperimentConfig, run: int) -> tuple[RunSummary, RunTrace]:
    """Drive one learner over the stream of run ``run``."""
    stream = sample_stream(config.stream_config(run))
    lcfg = config.learner_config()
    state = init_learner(lcfg)
    T, d = config.T, config.d
    losses = np.empty(T)
    decisions = np.empty((T, d))
    y_norm = np.empty(T)
    zeta = np.empty(T)
    projected = []
    grad_sq = 0.0
    for t in range(T):
        decisions[t] = state.x
        loss, grad = stream.loss_grad(t, state.x)
        state, record = step(state, grad, loss)
        losses[t] = loss
        y_norm[t] = record.y_norm
        zeta[t] = record.zeta_t
        projected.append(record.projected)
        grad_sq += float(grad @ grad)

    comp = offline_best_comparator(stream, lcfg.domain)
    inst = losses - stream.losses(comp.u) if T else np.empty(0)
    regret = np.cumsum(inst)
    final = float(regret[-1]) if T else 0.0

    if lcfg.variant == "sketch":
        from .sketch import sketch_regret_bound

        delta = state.pd.delta_accum
        bound = sketch_regret_bound(lcfg, state.gamma, T, delta)
        proj_events = state.mahalanobis_projections + state.pd.svd_events
    else:
        delta = 0.0
        bound = regret_upper_bound(lcfg, state.gamma, T)
        proj_events = state.mahalanobis_projections
    if lcfg.variant == "ons":
        # ONS may project every round; there is no sublinear budget to audit
        budget = T
    else:
        budget = projection_budget(lcfg, state.gamma, T)
    summary = RunSummary(
        run=run,
        seed=config.seed,
        algorithm=config.algorithm,
        task=config.task,
        T=T,
        final_regret=final,
        regret_bound=bound,
        regret_audit_ok=final <= bound + REGRET_SLACK,
        projections=state.mahalanobis_projections,
        projection_budget=budget,
        budget_audit_ok=state.mahalanobis_projections <= budget,
        G_T=grad_sq,
        max_y_norm=float(y_norm.max()) if T else 0.0,
        update_events=state.update_events,
        projection_events=proj_events,
        sketch_delta=delta,
        clip_rate=stream.clip_rate,
        comparator_converged=comp.converged,
    )
    trace = RunTrace(np.arange(1, T + 1), regret, inst, y_norm, projected, zeta, decisions, comp.u)
    return summary, trace


def run_experiment(config: ExperimentConfig) -> tuple[list[RunSummary], list[RunTrace]]:
    """Validate ``config``, execute every run and write CSVs if ``config.out`` is set."""
    config.validate()
    summaries, traces = [], []
    for run in range(config.runs):
        summary, trace = run_single(config, run)
        for name, ok in (("regret", summary.regret_audit_ok), ("projection budget", summary.budget_audit_ok)):
            if not ok:
                logger.error("run %d failed the %s audit", run, name)
        summaries.append(summary)
        traces.append(trace)
    if config.out is not None:
        emit_csv(summaries, traces if config.emit_per_round else None, config.out, config)
    return summaries, traces


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_rows(path: Path, header: Sequence[str], rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def emit_csv(
    summaries: Sequence[RunSummary],
    traces: Sequence[RunTrace] | None,
    path: Path | str,
    config: ExperimentConfig | None = None,
) -> list[Path]:
    """Write ``summary.csv`` and, when ``traces`` is given, one ``trace_run{i}.csv`` per run."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    names = [f.name for f in dataclasses.fields(RunSummary)]
    written = [out / "summary.csv"]
    _write_rows(written[0], names, ([getattr(s, n) for n in names] for s in summaries))
    if traces is not None:
        for summary, trace in zip(summaries, traces):
            p = out / f"trace_run{summary.run}.csv"
            _write_rows(
                p,
                ["t", "regret", "instantaneous_regret", "y_norm", "projected", "zeta_t"],
                zip(trace.t, trace.regret, trace.instantaneous_regret, trace.y_norm, trace.projected, trace.zeta_t),
            )
            written.append(p)
    if config is not None:
        # the output directory is left out so reruns elsewhere stay byte-identical
        meta = {name: v for name, v in dataclasses.asdict(config).items() if name != "out"}
        meta["resolved_epsilon"] = config.resolved_epsilon()
        meta["rng"] = RNG_SCHEME
        p = out / "metadata.json"
        p.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(p)
    return written


def format_summary_table(summaries: Sequence[RunSummary]) -> str:
    cols = ["run", "final_regret", "regret_bound", "projections", "projection_budget", "max_y_norm", "G_T", "clip_rate"]
    rows = [[_short(getattr(s, c)) for c in cols] for s in summaries]
    if summaries:
        rows.append(["mean"] + [_short(float(np.mean([getattr(s, c) for s in summaries]))) for c in cols[1:]])
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def _short(v) -> str:
    return f"{v:.5g}" if isinstance(v, float) else str(v)


def _epsilon_arg(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a number, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lightons", description="Run online Newton-step learners on synthetic regression streams.")
    p.add_argument("--algorithm", choices=sorted(ALGORITHMS), default="lightons")
    p.add_argument("--task", choices=TASKS, default="linear")
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--T", type=int, default=10_000)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--epsilon", type=_epsilon_arg, default="auto", help="'auto' (= d log T) or a positive number")
    p.add_argument("--k", type=float, default=2.0)
    p.add_argument("--d-prime", type=int, default=None)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--G", type=float, default=0.1, help="gradient norm bound")
    p.add_argument("--alpha", type=float, default=None, help="exp-concavity (required off the default setup)")
    p.add_argument("--out", type=Path, default=None, help="output directory for CSV files")
    p.add_argument("--emit-per-round", action="store_true")
    p.add_argument("--summary-table", action="store_true")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    config = ExperimentConfig(
        algorithm=args.algorithm,
        task=args.task,
        d=args.d,
        T=args.T,
        runs=args.runs,
        seed=args.seed,
        epsilon=args.epsilon,
        k=args.k,
        d_prime=args.d_prime,
        radius=args.radius,
        out=args.out,
        emit_per_round=args.emit_per_round,
        G=args.G,
        alpha=args.alpha,
    )
    try:
        summaries, _ = run_experiment(config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.summary_table:
        print(format_summary_table(summaries))
    failed = [s.run for s in summaries if not s.audits_ok]
    if failed:
        print(f"audit failure in runs {failed}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
