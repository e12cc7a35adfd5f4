"""Learning-progress measures.

Two families live here.  Return-based: the normalized mean squared return
error (NMSRE) compares a prediction made at the start of an on-policy test
excursion against the truncated sample return gathered during it, squared,
exponentially averaged, and divided by the variance of those returns; 1
means the predictor explains none of the return variance, 0 all of it.
Objective-based: the mean squared projected Bellman error (MSPBE), which is
what GTD(lambda) actually minimizes.  It can be computed exactly when the
MDP is known:

    MSPBE(theta) = E_b[delta phi]^T  E_b[phi phi^T]^{-1}  E_b[delta phi]

and estimated online from the very quantities the learner already computes:
the expected TD update E_b[delta phi] is sampled by delta_t * e_t (the
importance weighting rides inside the trace), giving

    vector estimate:  trace(delta e)^T w_t        (n floats per question)
    scalar estimate:  trace(delta e^T w)          (one float per question)

plus the expensive sample estimate that replaces w with an explicit
covariance inverse.  All running averages use the exponential trace
    trace(x, t) = (1/tau) x_t + (1 - 1/tau) trace(x, t-1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError

__all__ = [
    "ExponentialTrace",
    "trace_update",
    "truncated_return",
    "NMSRETracker",
    "nmsre_update",
    "offline_nmsre",
    "MSPBETrackers",
    "mspbe_vector",
    "mspbe_scalar",
    "FeatureCovarianceEstimate",
    "mspbe_sample",
    "MDPSpec",
    "chain_mdp_spec",
    "mspbe_true",
    "BankMSPBETrackers",
    "BankNMSRE",
]


class ExponentialTrace:
    """Exponentially weighted running average with time constant tau >= 1.

    After k updates from a zero start, the weights on the samples sum to
    1 - (1 - 1/tau)^k; tau = 1 reduces to "last sample".
    """

    def __init__(self, tau: float, shape=None):
        if tau < 1.0:
            raise ConfigurationError("tau must be >= 1")
        self.tau = float(tau)
        self.value = 0.0 if shape is None else np.zeros(shape)
        self.count = 0

    def update(self, sample):
        k = 1.0 / self.tau
        self.value = k * sample + (1.0 - k) * self.value
        self.count += 1
        return self.value


def trace_update(trace: ExponentialTrace, sample):
    """Functional form of ExponentialTrace.update."""
    return trace.update(sample)


def truncated_return(rewards, gamma: float, horizon: int = 50) -> float:
    """Discounted sum of rewards over exactly k = 0..horizon (horizon+1 terms)."""
    if not 0.0 <= gamma < 1.0:
        raise InputError("gamma must be in [0, 1)")
    r = np.asarray(rewards, dtype=float)
    need = horizon + 1
    if r.size < need:
        raise InputError(f"need {need} rewards, got {r.size}")
    return float(gamma ** np.arange(need) @ r[:need])


class NMSRETracker:
    """Per-question NMSRE: trace of squared return errors over relevant
    excursions, normalized by the variance of the observed returns.

    The normalizer here is a running (Welford) variance so the value can be
    displayed live; the exact offline form recomputes it over all recorded
    returns at the end (offline_nmsre).  With fewer than two returns, or
    zero variance, the NMSRE is defined to be one.
    """

    def __init__(self, tau: float = 20.0):
        self.err_trace = ExponentialTrace(tau)
        self.count = 0
        self._mean = 0.0
        self._m2 = 0.0

    def update(self, prediction: float, g_hat: float) -> float:
        self.err_trace.update((prediction - g_hat) ** 2)
        self.count += 1
        d = g_hat - self._mean
        self._mean += d / self.count
        self._m2 += d * (g_hat - self._mean)
        return self.value

    @property
    def return_variance(self) -> float:
        if self.count < 2:
            return 0.0
        return self._m2 / (self.count - 1)

    @property
    def value(self) -> float:
        var = self.return_variance
        if var <= 0.0:
            return 1.0
        return self.err_trace.value / var


def nmsre_update(tracker: NMSRETracker, prediction: float, g_hat: float) -> float:
    return tracker.update(prediction, g_hat)


def offline_nmsre(predictions, g_hats, tau: float = 20.0) -> float:
    """Exact end-of-run NMSRE: trace replayed over every recorded
    (prediction, return) pair, variance over all returns at once."""
    predictions = np.asarray(predictions, dtype=float)
    g_hats = np.asarray(g_hats, dtype=float)
    if g_hats.size < 2:
        return 1.0
    var = float(np.var(g_hats, ddof=1))
    if var <= 0.0:
        return 1.0
    tr = ExponentialTrace(tau)
    for p, g in zip(predictions, g_hats):
        tr.update((p - g) ** 2)
    return tr.value / var


class MSPBETrackers:
    """Online MSPBE state for a single learner: a vector trace of delta*e
    and a scalar trace of delta*(e.w), updated on learning steps only.

    The importance weighting is already inside e; ``rho_weighted=True``
    additionally multiplies each sample by rho (for sensitivity studies).
    """

    def __init__(self, n: int, tau: float, rho_weighted: bool = False):
        self.vec_trace = ExponentialTrace(tau, shape=n)
        self.scalar_trace = ExponentialTrace(tau)
        self.rho_weighted = rho_weighted

    def update(self, delta: float, e: np.ndarray, w: np.ndarray = None, rho: float = 1.0, edw: float = None):
        """Fold in one step's samples.  ``edw`` should be e_t . w_t as used by
        the learner (w before its update); pass it when available, otherwise
        it is recomputed from the given w."""
        weight = rho if self.rho_weighted else 1.0
        if edw is None:
            edw = float(e @ w)
        self.vec_trace.update(weight * delta * e)
        self.scalar_trace.update(weight * delta * edw)


def mspbe_vector(trackers: MSPBETrackers, w: np.ndarray) -> float:
    """trace(delta e)^T w_t.  Dots the trace with the current secondary weights."""
    return float(trackers.vec_trace.value @ w)


def mspbe_scalar(trackers: MSPBETrackers) -> float:
    """trace(delta e^T w); needs one stored float per question."""
    return float(trackers.scalar_trace.value)


class FeatureCovarianceEstimate:
    """Running sample mean of phi phi^T, for the sample MSPBE (small n only)."""

    def __init__(self, n: int):
        self.n = n
        self.count = 0
        self._sum = np.zeros((n, n))

    def update(self, phi: np.ndarray):
        phi = np.asarray(phi, dtype=float)
        self._sum += np.outer(phi, phi)
        self.count += 1

    @property
    def matrix(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros((self.n, self.n))
        return self._sum / self.count


def mspbe_sample(
    cov: FeatureCovarianceEstimate, td_update_trace: np.ndarray, epsilon: float = 1e-8
) -> float:
    """trace(delta e)^T (C_hat + eps I)^{-1} trace(delta e).

    Quadratic in n; intended for domains small enough to carry an explicit
    covariance.  Raises if the regularized estimate is still singular.
    """
    c = cov.matrix + epsilon * np.eye(cov.n)
    v = np.asarray(td_update_trace, dtype=float)
    try:
        sol = np.linalg.solve(c, v)
    except np.linalg.LinAlgError as err:
        rank = np.linalg.matrix_rank(cov.matrix)
        raise np.linalg.LinAlgError(
            f"covariance singular even after regularization (rank {rank} of {cov.n})"
        ) from err
    return float(v @ sol)


@dataclass(frozen=True)
class MDPSpec:
    """A fully known episodic MDP restricted to its non-terminal states.

    transition_target rows may sum to less than one; the missing mass is
    absorption.  rewards[s] is the expected immediate reward under the
    target policy from s.  d_behaviour is the state-visitation distribution
    of the behaviour policy with instant restart at the start state.
    """

    transition_target: np.ndarray
    rewards: np.ndarray
    gamma: float
    features: np.ndarray
    d_behaviour: np.ndarray

    def __post_init__(self):
        s = self.transition_target.shape[0]
        if self.transition_target.shape != (s, s) or self.features.shape[0] != s:
            raise ConfigurationError("inconsistent MDP dimensions")
        if abs(self.d_behaviour.sum() - 1.0) > 1e-9:
            raise ConfigurationError("behaviour distribution must sum to 1")


def _restart_stationary(p: np.ndarray, start: int) -> np.ndarray:
    """Stationary distribution of an episodic chain whose absorbed mass
    restarts instantly at ``start``."""
    s = p.shape[0]
    t = p.copy()
    t[:, start] += 1.0 - p.sum(axis=1)
    a = t.T - np.eye(s)
    a[-1, :] = 1.0
    b = np.zeros(s)
    b[-1] = 1.0
    d = np.linalg.solve(a, b)
    if np.any(d < -1e-12):
        raise ConfigurationError("restart chain has no proper stationary distribution")
    return np.clip(d, 0.0, None) / d.sum()


def chain_mdp_spec(
    p_right_target: float = 0.95,
    p_right_behaviour: float = 0.2,
    gamma: float = 0.9,
    feature_kind: str = "inverted",
    start: int = 2,
) -> MDPSpec:
    """The 7-state random-walk chain as seen by its 5 non-terminal states.

    Moving right from the last state enters the rewarding terminal (+1);
    moving left from the first state enters the zero terminal.
    """
    from .features import chain_feature_matrix

    def kernel(p_right):
        p = np.zeros((5, 5))
        r = np.zeros(5)
        for i in range(5):
            if i < 4:
                p[i, i + 1] = p_right
            else:
                r[i] = p_right
            if i > 0:
                p[i, i - 1] = 1.0 - p_right
        return p, r

    p_pi, r_pi = kernel(p_right_target)
    p_b, _ = kernel(p_right_behaviour)
    d_b = _restart_stationary(p_b, start)
    return MDPSpec(
        transition_target=p_pi,
        rewards=r_pi,
        gamma=gamma,
        features=chain_feature_matrix(feature_kind),
        d_behaviour=d_b,
    )


def mspbe_quadratic(
    phi: np.ndarray,
    weighting: np.ndarray,
    transition: np.ndarray,
    rewards: np.ndarray,
    gamma: float,
    theta: np.ndarray,
    lam: float = 0.0,
) -> float:
    """The MSPBE quadratic form for an arbitrary (not necessarily
    normalized) state weighting; homogeneous of degree one in it."""
    cov = phi.T @ (weighting[:, None] * phi)
    if np.linalg.matrix_rank(cov) < cov.shape[0]:
        raise ConfigurationError(
            f"feature covariance is singular (rank {np.linalg.matrix_rank(cov)} of {cov.shape[0]})"
        )
    v = phi @ theta
    s = transition.shape[0]
    t_lam_v = np.linalg.solve(
        np.eye(s) - lam * gamma * transition,
        rewards + (1.0 - lam) * gamma * (transition @ v),
    )
    expected_update = phi.T @ (weighting * (t_lam_v - v))
    return float(expected_update @ np.linalg.solve(cov, expected_update))


def mspbe_true(mdp: MDPSpec, theta: np.ndarray, lam: float = 0.0) -> float:
    """Exact MSPBE by matrix algebra over the known MDP.

    Uses the lambda-weighted Bellman operator
        T^lam V = (I - lam*gamma*P)^{-1} (R + (1 - lam)*gamma*P V)
    which reduces to R + gamma*P V at lam = 0 and to the true value
    function's fixed point at lam = 1.
    """
    return mspbe_quadratic(
        mdp.features,
        mdp.d_behaviour,
        mdp.transition_target,
        mdp.rewards,
        mdp.gamma,
        theta,
        lam,
    )


class BankMSPBETrackers:
    """Vectorized MSPBE traces for a bank of Q learners.

    The scalar traces are a plain (Q,) recurrence.  The vector traces
    share their support with the bank's eligibility rows, so the decay
    factor (1 - 1/tau), identical for every row and step, is carried in a
    per-row scale rather than multiplied through the (Q, n) matrix each
    step; rows are renormalized long before the scale can underflow.
    The samples for rows whose trace died this step are exactly zero, so
    only live rows are touched.
    """

    RENORM_BELOW = 1e-140

    def __init__(self, q: int, n: int, tau: float, vector: bool = True, rho_weighted: bool = False):
        if tau < 1.0:
            raise ConfigurationError("tau must be >= 1")
        self.q = q
        self.n = n
        self.tau = float(tau)
        self.rho_weighted = rho_weighted
        self.scalar = np.zeros(q)
        self.vector_enabled = vector
        if vector:
            self.vec_hat = np.zeros((q, n))
            self.vec_scale = np.ones(q)

    def update(self, delta: np.ndarray, edw: np.ndarray, e: np.ndarray, rows: np.ndarray, rho=None):
        """Fold one learning step in.  ``rows`` are the live rows; their
        post-step traces are read from the bank's e matrix."""
        k = 1.0 / self.tau
        sample_scale = rho[rows] if (self.rho_weighted and rho is not None) else 1.0
        self.scalar *= 1.0 - k
        if rows.size:
            self.scalar[rows] += k * (sample_scale * delta[rows] * edw[rows])
        if self.vector_enabled:
            self.vec_scale *= 1.0 - k
            if rows.size:
                coef = k * sample_scale * delta[rows] / self.vec_scale[rows]
                self.vec_hat[rows] += coef[:, None] * e[rows]
            low = self.vec_scale < self.RENORM_BELOW
            if np.any(low):
                self.vec_hat[low] *= self.vec_scale[low, None]
                self.vec_scale[low] = 1.0

    def vector_estimates(self, w: np.ndarray) -> np.ndarray:
        """trace(delta e)^T w_t for every question."""
        if not self.vector_enabled:
            raise ConfigurationError("vector estimator was disabled for this run")
        return (self.vec_hat * w).sum(axis=1) * self.vec_scale

    def scalar_estimates(self) -> np.ndarray:
        return self.scalar.copy()


class BankNMSRE:
    """Vectorized NMSRE state for a bank of Q questions."""

    def __init__(self, q: int, tau: float = 20.0):
        self.tau = float(tau)
        self.err_trace = np.zeros(q)
        self.trace_count = np.zeros(q, dtype=np.int64)
        self.count = np.zeros(q, dtype=np.int64)
        self.mean = np.zeros(q)
        self.m2 = np.zeros(q)

    def update(self, rows: np.ndarray, predictions: np.ndarray, g_hats: np.ndarray):
        """Score rows whose target matched the completed excursion."""
        if rows.size == 0:
            return
        k = 1.0 / self.tau
        err = (predictions - g_hats) ** 2
        self.err_trace[rows] = k * err + (1.0 - k) * self.err_trace[rows]
        self.trace_count[rows] += 1
        self.count[rows] += 1
        d = g_hats - self.mean[rows]
        self.mean[rows] += d / self.count[rows]
        self.m2[rows] += d * (g_hats - self.mean[rows])

    def values(self) -> np.ndarray:
        """Current NMSRE per question; 1 where variance is undefined or zero."""
        out = np.ones(self.err_trace.shape[0])
        ok = self.count >= 2
        var = np.zeros_like(out)
        var[ok] = self.m2[ok] / (self.count[ok] - 1)
        ok &= var > 0.0
        out[ok] = self.err_trace[ok] / var[ok]
        return out
