"""Online MSPBE estimates versus the exact MSPBE on the 7-state chain.

A single GTD(0) learner follows a leftward behaviour policy (right with
probability 0.2) while predicting for a rightward target policy (right with
probability 0.95). Every episode we log four measures of its error: the
exact MSPBE from the known MDP, the sample MSPBE (covariance inverse), and
the two online estimates. At episode 1000 the primary weights are reset to
random values in [0, 1]; the secondary weights and traces are not, and all
four measures react together.

Uses 15 runs for speed; the full 100-run protocol is
`horde run preset:paper-chain --outdir ...`.
"""

import numpy as np

from horde import preset
from horde.engine import run_chain_single

config = preset("paper-chain")
config.runs = 15
config.episodes = 1300

rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(config.runs)]
curves = {k: [] for k in ("true", "sample", "vector", "scalar")}
for rng in rngs:
    result = run_chain_single(config, rng)
    for k in curves:
        curves[k].append(result[k])
avg = {k: np.mean(v, axis=0) for k, v in curves.items()}

m0 = avg["true"][0]
print(f"MSPBE at theta = 0 (averaged over first-episode measurements): {m0:.5f}")
print("\nepisode    true      sample    vector    scalar")
for ep in (10, 100, 300, 600, 999, 1000, 1010, 1050, 1100, 1299):
    print(
        f"{ep:7d}  {avg['true'][ep]:.6f}  {avg['sample'][ep]:.6f}  "
        f"{avg['vector'][ep]:.6f}  {avg['scalar'][ep]:.6f}"
    )

pre, post = avg["true"][999], avg["true"][1000]
print(f"\ntheta reset at episode 1000: true MSPBE jumped {post / pre:.0f}x")
sl = slice(200, 1000)
for name in ("vector", "scalar"):
    err = np.mean(np.abs(avg[name][sl] - avg["true"][sl]))
    corr = np.corrcoef(avg[name][sl], avg["true"][sl])[0, 1]
    print(f"{name:6s} estimate, episodes 200-1000: "
          f"mean |error| = {err:.5f} ({err / m0:.1%} of initial MSPBE), corr = {corr:.3f}")
