"""Command-line experiment runner.

    horde validate <config>           check a config, print every violation
    horde run <config> --outdir DIR   run it, write metric/journal/excursion
                                      logs and snapshots under DIR
    horde export <run-dir>            emit plot-ready CSV curves
    horde bench <config>              measure per-tick latency, no logging

<config> is a path to an INI file or ``preset:NAME`` for one of the built-in
presets (paper-chain, paper-pen-795, paper-gibbs-1000).  Exit codes: 0 ok,
1 invalid configuration, 2 divergence quarantines exceeded the configured
limit.  HORDE_WORKERS overrides the configured worker count.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import PRESET_NAMES, parse_config, preset
from .errors import ConfigValidationError

__all__ = ["main"]


def _load_config(spec: str):
    if spec.startswith("preset:"):
        return preset(spec.removeprefix("preset:"))
    with open(spec, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _cmd_validate(args) -> int:
    try:
        config = _load_config(args.config)
    except ConfigValidationError as err:
        for v in err.violations:
            print(f"invalid: {v}")
        return 1
    except OSError as err:
        print(f"invalid: cannot read config: {err}")
        return 1
    print(f"ok: {config.environment} experiment, seed {config.seed}")
    return 0


def _apply_worker_override(config):
    workers = os.environ.get("HORDE_WORKERS")
    if workers:
        config.workers = int(workers)


def _cmd_run(args) -> int:
    from .engine import run_experiment

    try:
        config = _load_config(args.config)
        _apply_worker_override(config)
        if args.workers is not None:
            config.workers = args.workers
        summary = run_experiment(config, args.outdir)
    except ConfigValidationError as err:
        for v in err.violations:
            print(f"invalid: {v}")
        return 1
    for key in sorted(summary):
        print(f"{key}: {summary[key]}")
    if summary.get("quarantined", 0) > config.quarantine_limit:
        print(
            f"divergence quarantines ({summary['quarantined']}) exceeded the "
            f"limit ({config.quarantine_limit})"
        )
        return 2
    return 0


def _cmd_export(args) -> int:
    from .export import export_curves

    written = export_curves(args.run_dir, args.out)
    for path in written:
        print(path)
    return 0


def _cmd_bench(args) -> int:
    from .engine import build_bank, build_coder
    from .environments import PenSimEnv
    from .policies import PersistentRandomPolicy

    try:
        config = _load_config(args.config)
        _apply_worker_override(config)
        if args.workers is not None:
            config.workers = args.workers
        if args.questions is not None:
            config.gibbs_count = args.questions
    except ConfigValidationError as err:
        for v in err.violations:
            print(f"invalid: {v}")
        return 1

    stats = bench(config, ticks=args.ticks, warmup=args.warmup)
    print(
        f"questions={stats['questions']} n={stats['n']} active={stats['active']} "
        f"workers={config.workers}"
    )
    print(
        f"tick ms: mean={stats['mean_ms']:.2f} median={stats['median_ms']:.2f} "
        f"p95={stats['p95_ms']:.2f} max={stats['max_ms']:.2f} over {stats['ticks']} ticks"
    )
    return 0


def bench(config, ticks: int = 200, warmup: int = 20) -> dict:
    """Timed learning ticks against the pen simulator, no I/O in the loop."""
    import time

    from .engine import build_bank, build_coder
    from .environments import PenSimEnv
    from .policies import DEFAULT_ACTIONS, PersistentRandomPolicy

    rng = np.random.default_rng(config.seed)
    coder = build_coder(config)
    bank = build_bank(config, coder, rng)
    env = PenSimEnv(config.seed, config.pen_sensor_noise)
    behaviour = PersistentRandomPolicy(len(DEFAULT_ACTIONS), config.repeat_probability, rng)
    partitions = None
    pool = None
    if config.workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        partitions = [np.arange(bank.size)[w::config.workers] for w in range(config.workers)]
        pool = ThreadPoolExecutor(max_workers=config.workers)

    obs = env.reset()
    phi = coder.encode(obs)
    durations = []
    try:
        for step in range(warmup + ticks):
            t0 = time.perf_counter()
            action, bprob = behaviour.sample()
            obs2 = env.step(action)
            phi2 = coder.encode(obs2)
            rho = bank.rho(phi.indices, action, bprob)
            result = bank.learners.step(
                phi.indices, phi2.indices, bank.rewards(obs2), rho,
                row_slices=partitions, pool=pool,
            )
            bank.mspbe.update(result.delta, result.edw, bank.learners.e, result.updated_rows, rho)
            dt = time.perf_counter() - t0
            if step >= warmup:
                durations.append(dt)
            obs, phi = obs2, phi2
    finally:
        if pool is not None:
            pool.shutdown()
    d = np.array(durations) * 1e3
    return {
        "questions": bank.size,
        "n": coder.n,
        "active": coder.active_count,
        "ticks": ticks,
        "mean_ms": float(d.mean()),
        "median_ms": float(np.median(d)),
        "p95_ms": float(np.percentile(d, 95)),
        "max_ms": float(d.max()),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="horde",
        description="Parallel off-policy GVF prediction experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config file or preset")
    p.add_argument("config", help=f"path or preset:NAME ({', '.join(PRESET_NAMES)})")
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("run", help="run an experiment")
    p.add_argument("config")
    p.add_argument("--outdir", required=True, help="directory for logs and snapshots")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("export", help="emit plot-ready curves from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_export)

    p = sub.add_parser("bench", help="measure engine tick latency")
    p.add_argument("config")
    p.add_argument("--ticks", type=int, default=200)
    p.add_argument("--warmup", type=int, default=20)
    p.add_argument("--questions", type=int, default=None, help="override the Gibbs question count")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(fn=_cmd_bench)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
