"""Hundreds of predictions tested by on-policy excursions.

Builds the constant-action question bank (discounts x sensors x the five
policies) over the simulated pen robot and runs the interleaved protocol:
random-walk behaviour, probabilistic interruptions into 5-second test
excursions under one of the target policies, recentering, repeat. Each
completed excursion scores the matching questions' predictions against the
truncated sample return; errors are normalized by return variance (NMSRE,
1 = explains nothing).

Short run for a demo; the full protocol is
`horde run preset:paper-pen-795 --outdir ...` and takes minutes.
"""

import numpy as np

from horde import preset
from horde.engine import run_experiment
from horde.export import nmsre_by_excursion, read_excursions

import tempfile
import os

config = preset("paper-pen-795")
config.steps = 30000
config.log_every = 2000

outdir = os.path.join(tempfile.mkdtemp(prefix="horde_demo_"), "pen")
print(f"running {config.steps} steps with 795 questions -> {outdir}")
summary = run_experiment(config, outdir)
print(f"done: {summary['learn_steps']} learning steps of {summary['steps']}, "
      f"mean tick {summary['mean_tick_ms']:.2f} ms, "
      f"{summary['quarantined']} learners quarantined")

records = read_excursions(os.path.join(outdir, "excursions_000.csv"))
series = nmsre_by_excursion(records)
counts = {qid: len(v) for qid, v in series.items()}
print(f"\nexcursions scored: {sum(counts.values())} question-scorings over "
      f"{min(counts.values())}..{max(counts.values())} relevant excursions per question")

finals = np.array([v[-1] for v in series.values()])
print(f"final NMSRE over {len(finals)} questions: "
      f"mean {finals.mean():.3f}, median {np.median(finals):.3f}, "
      f"{(finals < 1).mean():.0%} of questions below 1.0")

for k in (5, 20, 50):
    vals = [v[k - 1] for v in series.values() if len(v) >= k]
    print(f"after {k:3d} relevant excursions: mean NMSRE {np.mean(vals):.3f} "
          f"({len(vals)} questions)")
