"""Real-time check: a thousand random-policy predictions per tick.

A thousand questions, each with its own randomly generated Gibbs target
policy (60 nonzero parameters in per-action feature blocks), learn from one
behaviour stream over the full-scale feature space (6065 indices, 457
active). Gibbs policies put positive probability on every action, so every
learner runs the full GTD(lambda) update every tick; learning progress is
tracked by the one-float-per-question scalar MSPBE estimate. The robot's
duty cycle leaves a 100 ms budget per tick.
"""

from horde import preset
from horde.cli import bench

config = preset("paper-gibbs-1000")

for questions in (1000, 500):
    config.gibbs_count = questions
    stats = bench(config, ticks=100, warmup=10)
    print(
        f"{stats['questions']:5d} questions, n={stats['n']}, "
        f"{stats['active']} active: mean {stats['mean_ms']:6.2f} ms/tick, "
        f"median {stats['median_ms']:6.2f}, p95 {stats['p95_ms']:6.2f}"
    )
print("\nbudget: 100 ms per tick")
