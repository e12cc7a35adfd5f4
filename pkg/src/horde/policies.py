"""GVF questions, target policies, and the behaviour policy.

A question pairs a target policy with a discount and a reward signal (one
component of the observation vector).  Target policies come in three
flavours: deterministic constant-action policies, state-independent fixed
distributions (used by the chain experiments), and Gibbs policies that are
linear in per-action copies of the feature vector.  The behaviour policy is
the persistent-random policy: repeat the previous action with probability
0.5, otherwise pick uniformly.

Importance-sampling ratios pi(a|phi)/b(a|phi) correct for the mismatch
between target and behaviour; the behaviour probability of the executed
action must therefore be tracked exactly, which sample_action() does from
the two-branch mixture rather than empirically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, InputError, SamplingSupportError
from .features import SparseFeatures

__all__ = [
    "ActionSet",
    "DEFAULT_ACTIONS",
    "CHAIN_ACTIONS",
    "ConstantAction",
    "FixedDistribution",
    "GibbsPolicy",
    "policy_probs",
    "policy_prob",
    "importance_ratio",
    "PersistentRandomPolicy",
    "generate_random_gibbs",
    "GVFQuestion",
    "question_bank_constant",
    "question_bank_gibbs",
    "StackedGibbsScores",
]


@dataclass(frozen=True)
class ActionSet:
    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise ConfigurationError("action set must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise ConfigurationError("action names must be distinct")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


DEFAULT_ACTIONS = ActionSet(("forward", "reverse", "rotate_cw", "rotate_ccw", "stop"))
CHAIN_ACTIONS = ActionSet(("left", "right"))


@dataclass(frozen=True)
class ConstantAction:
    """Deterministic policy: probability 1 on one action."""

    action: int


@dataclass(frozen=True)
class FixedDistribution:
    """State-independent stochastic policy over the action set."""

    probs: tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.probs)
        if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-12):
            raise ConfigurationError(f"probabilities must be a distribution, got {self.probs}")


class GibbsPolicy:
    """Softmax policy linear in stacked per-action feature blocks.

    The parameter vector u has dimension n * n_actions; the effective score
    for action a is the dot of u's a-th block with the feature vector, and
    pi(a) = exp(-score_a) / sum_a' exp(-score_a').  Block structure means
    blocks of u for other actions never touch score_a.  Parameters are kept
    sparse (the generator only sets 60 components).
    """

    def __init__(self, n: int, n_actions: int, indices, values):
        self.n = int(n)
        self.n_actions = int(n_actions)
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if indices.size != values.size:
            raise ConfigurationError("indices and values must have equal length")
        if indices.size and (indices.min() < 0 or indices.max() >= n * n_actions):
            raise ConfigurationError("Gibbs parameter index out of range")
        order = np.argsort(indices, kind="stable")
        self.indices = indices[order]
        self.values = values[order]
        # per-action view: local feature index within the block, plus value
        self._blocks = []
        block = self.indices // self.n
        local = self.indices % self.n
        for a in range(n_actions):
            m = block == a
            self._blocks.append((local[m], self.values[m]))

    def scores(self, feats: SparseFeatures) -> np.ndarray:
        if feats.n != self.n:
            raise InputError(f"features of dim {feats.n}, policy expects {self.n}")
        active = set(feats.indices.tolist())
        out = np.zeros(self.n_actions)
        for a, (local, vals) in enumerate(self._blocks):
            s = 0.0
            for i, v in zip(local.tolist(), vals.tolist()):
                if i in active:
                    s += v
            out[a] = s
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, GibbsPolicy)
            and self.n == other.n
            and self.n_actions == other.n_actions
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )


PolicySpec = ConstantAction | FixedDistribution | GibbsPolicy


def _softmax_neg(scores: np.ndarray) -> np.ndarray:
    z = -scores
    z = z - z.max()
    ez = np.exp(z)
    return ez / ez.sum()


def policy_probs(spec: PolicySpec, feats: SparseFeatures | None, n_actions: int) -> np.ndarray:
    """Action distribution of a policy at the given features."""
    if isinstance(spec, ConstantAction):
        p = np.zeros(n_actions)
        p[spec.action] = 1.0
        return p
    if isinstance(spec, FixedDistribution):
        if len(spec.probs) != n_actions:
            raise ConfigurationError("distribution arity does not match the action set")
        return np.asarray(spec.probs, dtype=float)
    if isinstance(spec, GibbsPolicy):
        if spec.n_actions != n_actions:
            raise ConfigurationError("Gibbs policy arity does not match the action set")
        return _softmax_neg(spec.scores(feats))
    raise ConfigurationError(f"unknown policy spec {type(spec).__name__}")


def policy_prob(spec: PolicySpec, feats: SparseFeatures | None, action: int, n_actions: int) -> float:
    if not 0 <= action < n_actions:
        raise InputError(f"action {action} out of range [0, {n_actions})")
    return float(policy_probs(spec, feats, n_actions)[action])


def importance_ratio(
    target: PolicySpec,
    behaviour_prob: float,
    feats: SparseFeatures | None,
    action: int,
    n_actions: int,
) -> float:
    """pi(a|phi) / b(a|phi).  The behaviour must have chosen a with prob > 0."""
    if behaviour_prob <= 0.0:
        raise SamplingSupportError(f"behaviour probability {behaviour_prob} is not positive")
    return policy_prob(target, feats, action, n_actions) / behaviour_prob


class PersistentRandomPolicy:
    """Behaviour policy: repeat the last action w.p. repeat_probability,
    otherwise draw uniformly (possibly re-drawing the same action).

    The probability of the emitted action is computed exactly from the
    mixture: repeat_probability * [a == last] + (1 - repeat_probability)/A.
    The first action is purely uniform.
    """

    def __init__(self, n_actions: int, repeat_probability: float = 0.5, rng=None):
        if not 0.0 <= repeat_probability <= 1.0:
            raise ConfigurationError("repeat probability must be in [0, 1]")
        self.n_actions = n_actions
        self.repeat_probability = repeat_probability
        self.rng = rng if rng is not None else np.random.default_rng()
        self.last_action: int | None = None

    def action_prob(self, action: int) -> float:
        uniform = 1.0 / self.n_actions
        if self.last_action is None:
            return uniform
        repeat = self.repeat_probability if action == self.last_action else 0.0
        return repeat + (1.0 - self.repeat_probability) * uniform

    def sample(self) -> tuple[int, float]:
        """Returns (action, exact probability of that action)."""
        if self.last_action is not None and self.rng.random() < self.repeat_probability:
            action = self.last_action
        else:
            action = int(self.rng.integers(self.n_actions))
        prob = self.action_prob(action)
        self.last_action = action
        return action, prob


def generate_random_gibbs(
    n: int, n_actions: int, rng, nonzeros: int = 60
) -> GibbsPolicy:
    """Random Gibbs policy: ``nonzeros`` distinct components of u, each U[0,1]."""
    total = n * n_actions
    if total < nonzeros:
        raise ConfigurationError(f"need n * n_actions >= {nonzeros}, got {total}")
    idx = rng.choice(total, size=nonzeros, replace=False)
    vals = rng.uniform(0.0, 1.0, size=nonzeros)
    return GibbsPolicy(n, n_actions, idx, vals)


@dataclass(frozen=True)
class GVFQuestion:
    """One prediction: discounted sum of a reward signal under a target policy."""

    qid: str
    target: PolicySpec = field(compare=False)
    gamma: float
    reward_index: int

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1), got {self.gamma}")
        if self.reward_index < 0:
            raise ConfigurationError("reward index must be non-negative")


def question_bank_constant(
    gammas, sensor_count: int, action_set: ActionSet
) -> list[GVFQuestion]:
    """Cartesian product of discounts x sensors x constant-action policies."""
    bank = []
    for g in gammas:
        for s in range(sensor_count):
            for a, name in enumerate(action_set.names):
                bank.append(
                    GVFQuestion(
                        qid=f"g{g:g}_s{s:02d}_{name}",
                        target=ConstantAction(a),
                        gamma=float(g),
                        reward_index=s,
                    )
                )
    return bank


def question_bank_gibbs(
    count: int,
    n: int,
    action_set: ActionSet,
    gammas,
    sensor_count: int,
    rng,
    nonzeros: int = 60,
) -> list[GVFQuestion]:
    """Random questions: gamma and reward sensor sampled, one fresh Gibbs policy each."""
    gammas = list(gammas)
    bank = []
    for k in range(count):
        g = float(gammas[rng.integers(len(gammas))])
        s = int(rng.integers(sensor_count))
        pol = generate_random_gibbs(n, len(action_set), rng, nonzeros)
        bank.append(GVFQuestion(qid=f"gibbs{k:04d}_g{g:g}_s{s:02d}", target=pol, gamma=g, reward_index=s))
    return bank


class StackedGibbsScores:
    """Batched score evaluation for many Gibbs policies sharing one feature stream.

    Stacks every policy's sparse parameters into one CSR matrix of shape
    (Q * A, n) so a single sparse matvec against the binary feature mask
    yields all Q x A scores per step.
    """

    def __init__(self, policies: list[GibbsPolicy], n: int, n_actions: int):
        self.n = n
        self.n_actions = n_actions
        self.count = len(policies)
        rows, cols, data = [], [], []
        for q, pol in enumerate(policies):
            if pol.n != n or pol.n_actions != n_actions:
                raise ConfigurationError("all stacked policies must share n and the action set")
            block = pol.indices // n
            local = pol.indices % n
            rows.extend((q * n_actions + block).tolist())
            cols.extend(local.tolist())
            data.extend(pol.values.tolist())
        self._mat = sp.csr_matrix(
            (data, (rows, cols)), shape=(self.count * n_actions, n), dtype=float
        )
        self._mask = np.zeros(n)

    def probs(self, active_indices: np.ndarray) -> np.ndarray:
        """(Q, A) action distributions at the given active feature indices."""
        self._mask[active_indices] = 1.0
        scores = self._mat.dot(self._mask).reshape(self.count, self.n_actions)
        self._mask[active_indices] = 0.0
        z = -scores
        z -= z.max(axis=1, keepdims=True)
        np.exp(z, out=z)
        z /= z.sum(axis=1, keepdims=True)
        return z
