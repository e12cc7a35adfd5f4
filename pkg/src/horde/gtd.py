"""GTD(lambda): gradient temporal-difference learning with eligibility traces.

One learner holds primary weights theta (the prediction), secondary weights
w (a quasi-stationary estimate of the feature-covariance-inverse times the
expected TD update), and an eligibility trace e.  Given a transition
(phi_t, a_t, phi_{t+1}, r_{t+1}) and the importance ratio rho, a step
applies, in this order:

    delta <- r + gamma * theta.phi' - theta.phi
    e     <- rho * (phi + gamma * lambda * e)
    theta <- theta + alpha_v * (delta * e - gamma * (1 - lambda) * (e.w) * phi')
    w     <- w + alpha_w * (delta * e - (phi.w) * phi)

Both weight updates read w from before the step.  The step returns delta so
progress trackers can reuse it without recomputation.

``GTDLearner`` is the plain single-question form (dense or sparse features).
``GTDBank`` runs many learners over one shared sparse feature stream with
(Q, n) weight matrices.  Per step it only touches rows whose trace is live
(rho = 0 kills the whole trace, so a row is live only if its question's
policy put weight on the executed action this step or the previous one);
every non-quarantined row still receives the w decay term, which does not
involve e.  The hot rows go through a fused numba kernel that makes a
single pass over each row (trace decay, e.w accumulation, theta and w
updates), which is what keeps 1000 dense-rho learners inside a 100 ms
cycle on desktop memory bandwidth.  A pure-numpy twin of the kernel exists
for verification.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, InputError
from .features import SparseFeatures

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


__all__ = ["GTDLearner", "GTDBank", "BankStep"]


DIVERGENCE_LIMIT = 1e6


def _as_indices(feats) -> np.ndarray:
    if isinstance(feats, SparseFeatures):
        return feats.indices
    return np.asarray(feats, dtype=np.int64)


class GTDLearner:
    """A single GTD(lambda) learner over an n-dimensional feature space."""

    def __init__(self, n: int, alpha_theta: float, alpha_w: float, lam: float, gamma: float):
        if alpha_theta <= 0 or alpha_w <= 0:
            raise ConfigurationError("step sizes must be positive")
        if not 0.0 <= lam <= 1.0:
            raise ConfigurationError("lambda must be in [0, 1]")
        if not 0.0 <= gamma <= 1.0:
            raise ConfigurationError("gamma must be in [0, 1]")
        self.n = n
        self.alpha_theta = alpha_theta
        self.alpha_w = alpha_w
        self.lam = lam
        self.gamma = gamma
        self.theta = np.zeros(n)
        self.w = np.zeros(n)
        self.e = np.zeros(n)
        self.diverged = False
        self.last_edw = 0.0  # e_t . w_t of the latest step, before w moved

    def start_episode(self):
        """Clear the trace at an episode boundary (episodic domains)."""
        self.e[:] = 0.0

    def predict(self, phi) -> float:
        phi = self._dense(phi)
        return float(self.theta @ phi)

    def step(self, phi_t, phi_tp1, reward: float, rho: float, gamma_tp1: float | None = None) -> float:
        """One update from dense feature vectors; returns the pre-update delta.

        ``gamma_tp1`` overrides the bootstrap discount for this step only
        (0 at episodic termination).  It scales both the bootstrap term of
        delta and the gradient-correction term, which vanish together when
        the successor state contributes no value.
        """
        if rho < 0:
            raise InputError("importance ratio must be non-negative")
        phi_t = self._dense(phi_t)
        phi_tp1 = self._dense(phi_tp1)
        gb = self.gamma if gamma_tp1 is None else gamma_tp1

        delta = reward + gb * float(self.theta @ phi_tp1) - float(self.theta @ phi_t)
        self.e *= rho * self.gamma * self.lam
        self.e += rho * phi_t
        edw = float(self.e @ self.w)
        self.last_edw = edw
        wdphi = float(self.w @ phi_t)
        self.theta += self.alpha_theta * delta * self.e
        self.theta -= self.alpha_theta * gb * (1.0 - self.lam) * edw * phi_tp1
        self.w += self.alpha_w * delta * self.e
        self.w -= self.alpha_w * wdphi * phi_t
        self._check_divergence()
        return delta

    def step_indices(
        self, active_t, active_tp1, reward: float, rho: float, gamma_tp1: float | None = None
    ) -> float:
        """Same update from sparse binary features given as index arrays."""
        if rho < 0:
            raise InputError("importance ratio must be non-negative")
        at = _as_indices(active_t)
        atp1 = _as_indices(active_tp1)
        gb = self.gamma if gamma_tp1 is None else gamma_tp1

        pred_t = float(self.theta[at].sum()) if at.size else 0.0
        pred_tp1 = float(self.theta[atp1].sum()) if atp1.size else 0.0
        delta = reward + gb * pred_tp1 - pred_t
        self.e *= rho * self.gamma * self.lam
        self.e[at] += rho
        edw = float((self.e * self.w).sum())
        self.last_edw = edw
        wdphi = float(self.w[at].sum()) if at.size else 0.0
        self.theta += self.alpha_theta * delta * self.e
        self.theta[atp1] -= self.alpha_theta * gb * (1.0 - self.lam) * edw
        self.w += self.alpha_w * delta * self.e
        self.w[at] -= self.alpha_w * wdphi
        self._check_divergence()
        return delta

    def reset_primary(self, rng=None, low: float = 0.0, high: float = 0.0):
        """Reinitialize theta only; w and e are deliberately left in place."""
        if low > high:
            raise InputError("low must be <= high")
        if low == high:
            self.theta[:] = low
        else:
            self.theta[:] = rng.uniform(low, high, self.n)

    def _dense(self, phi) -> np.ndarray:
        if isinstance(phi, SparseFeatures):
            return phi.to_dense()
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.n,):
            raise InputError(f"feature vector of shape {phi.shape}, expected ({self.n},)")
        return phi

    def _check_divergence(self):
        m = max(np.abs(self.theta).max(), np.abs(self.w).max())
        if not np.isfinite(m) or m > DIVERGENCE_LIMIT:
            self.diverged = True


@njit(cache=True, nogil=True)
def _fused_rows(E, W, Theta, rows, decay, add, a_coef, b_coef, active, edw_out):
    """Per-row single pass: e <- decay*e then e[active] += add, accumulate
    e.w, theta += a*e, w += b*e.  Scatter terms are applied outside."""
    n = E.shape[1]
    for ri in range(rows.shape[0]):
        q = rows[ri]
        d = decay[q]
        for j in range(n):
            E[q, j] *= d
        r = add[q]
        for k in range(active.shape[0]):
            E[q, active[k]] += r
        acc = 0.0
        aq = a_coef[q]
        bq = b_coef[q]
        for j in range(n):
            e = E[q, j]
            acc += e * W[q, j]
            Theta[q, j] += aq * e
            W[q, j] += bq * e
        edw_out[q] = acc


def _fused_rows_numpy(E, W, Theta, rows, decay, add, a_coef, b_coef, active, edw_out):
    """Vectorized twin of the fused kernel, used for verification."""
    sub = E[rows] * decay[rows, None]
    sub[:, active] += add[rows, None]
    edw_out[rows] = (sub * W[rows]).sum(axis=1)
    Theta[rows] += a_coef[rows, None] * sub
    W[rows] += b_coef[rows, None] * sub
    E[rows] = sub


class BankStep:
    """Outcome of one bank update: per-question delta and e.w for the rows
    that ran the full update, plus bookkeeping counts."""

    __slots__ = ("delta", "edw", "updated_rows", "updated", "skipped", "new_quarantined")

    def __init__(self, delta, edw, updated_rows, skipped, new_quarantined):
        self.delta = delta
        self.edw = edw
        self.updated_rows = updated_rows
        self.updated = int(updated_rows.size)
        self.skipped = int(skipped)
        self.new_quarantined = new_quarantined


class GTDBank:
    """Q independent GTD(lambda) learners over one shared feature stream.

    Rows share the feature dimension n but own their gamma, lambda, step
    sizes, theta, w, and e.  Learners whose weights blow past
    DIVERGENCE_LIMIT are quarantined: frozen entirely and excluded from all
    subsequent updates, while the rest keep learning.
    """

    def __init__(self, n: int, gammas, lambdas, alpha_theta, alpha_w, use_kernel: bool | None = None):
        gammas = np.asarray(gammas, dtype=float)
        q = gammas.size
        self.n = int(n)
        self.q = int(q)
        self.gammas = gammas
        self.lambdas = np.broadcast_to(np.asarray(lambdas, dtype=float), (q,)).copy()
        self.alpha_theta = np.broadcast_to(np.asarray(alpha_theta, dtype=float), (q,)).copy()
        self.alpha_w = np.broadcast_to(np.asarray(alpha_w, dtype=float), (q,)).copy()
        if np.any(self.alpha_theta <= 0) or np.any(self.alpha_w <= 0):
            raise ConfigurationError("step sizes must be positive")
        self.theta = np.zeros((q, n))
        self.w = np.zeros((q, n))
        self.e = np.zeros((q, n))
        self.quarantined = np.zeros(q, dtype=bool)
        self._live = np.zeros(q, dtype=bool)  # rows with nonzero trace
        if use_kernel is None:
            use_kernel = _HAVE_NUMBA
        self._kernel = _fused_rows if use_kernel else _fused_rows_numpy

    def predictions(self, active) -> np.ndarray:
        """theta.phi for every question at the given active indices."""
        at = _as_indices(active)
        if at.size == 0:
            return np.zeros(self.q)
        return self.theta[:, at].sum(axis=1)

    def clear_traces(self):
        self.e[:] = 0.0
        self._live[:] = False

    def reset_primary(self, rng=None, low: float = 0.0, high: float = 0.0):
        """Reinitialize every row's theta; w and e stay."""
        if low == high:
            self.theta[:] = low
        else:
            self.theta[:] = rng.uniform(low, high, (self.q, self.n))

    def step(self, active_t, active_tp1, rewards, rho, row_slices=None, pool=None) -> BankStep:
        """Fan one shared transition out to all live learners.

        rewards and rho are per-question vectors.  Rows with rho = 0 skip
        the trace/theta work (their trace is annihilated) but still receive
        the w decay, exactly as the full update would produce.  Passing
        ``row_slices`` (a list of index arrays) runs the fused kernel over
        those partitions, concurrently when ``pool`` is given; arithmetic
        is per-row, so any partition yields identical results.
        """
        at = _as_indices(active_t)
        atp1 = _as_indices(active_tp1)
        rho = np.asarray(rho, dtype=float)
        rewards = np.asarray(rewards, dtype=float)
        if rho.shape != (self.q,) or rewards.shape != (self.q,):
            raise InputError("rho and rewards must have one entry per question")
        if np.any(rho < 0):
            raise InputError("importance ratios must be non-negative")

        ok = ~self.quarantined
        update = (rho > 0.0) & ok
        rows = np.flatnonzero(update | (self._live & ok))
        updated_rows = np.flatnonzero(update)

        # delta only matters where the trace survives; elsewhere e = 0 and
        # the delta*e terms vanish identically.
        delta = np.zeros(self.q)
        if updated_rows.size:
            pred_t = self.theta[np.ix_(updated_rows, at)].sum(axis=1)
            pred_tp1 = self.theta[np.ix_(updated_rows, atp1)].sum(axis=1)
            delta[updated_rows] = (
                rewards[updated_rows] + self.gammas[updated_rows] * pred_tp1 - pred_t
            )

        # phi.w for the w decay, from w before any modification
        wdphi = self.w[:, at].sum(axis=1)

        decay = np.where(update, rho * self.gammas * self.lambdas, 0.0)
        add = np.where(update, rho, 0.0)
        a_coef = self.alpha_theta * delta
        b_coef = self.alpha_w * delta
        edw = np.zeros(self.q)

        if rows.size:
            if row_slices is None:
                self._kernel(self.e, self.w, self.theta, rows, decay, add, a_coef, b_coef, at, edw)
            else:
                member = np.zeros(self.q, dtype=bool)
                member[rows] = True
                parts = [part[member[part]] for part in row_slices]
                parts = [sel for sel in parts if sel.size]
                if pool is not None and len(parts) > 1:
                    futures = [
                        pool.submit(
                            self._kernel, self.e, self.w, self.theta, sel,
                            decay, add, a_coef, b_coef, at, edw,
                        )
                        for sel in parts
                    ]
                    for fut in futures:
                        fut.result()
                else:
                    for sel in parts:
                        self._kernel(
                            self.e, self.w, self.theta, sel, decay, add, a_coef, b_coef, at, edw
                        )

        # scatter terms, in the same order the scalar update applies them:
        # theta correction after the delta*e term, w decay after its delta*e term
        if updated_rows.size:
            corr = (
                self.alpha_theta[updated_rows]
                * self.gammas[updated_rows]
                * (1.0 - self.lambdas[updated_rows])
                * edw[updated_rows]
            )
            self.theta[np.ix_(updated_rows, atp1)] -= corr[:, None]
        live_or_ok = np.flatnonzero(ok)
        self.w[np.ix_(live_or_ok, at)] -= (self.alpha_w[live_or_ok] * wdphi[live_or_ok])[:, None]

        self._live[:] = False
        self._live[updated_rows] = True

        new_q = self._flag_divergence(updated_rows, delta)
        skipped = self.q - updated_rows.size
        return BankStep(delta, edw, updated_rows, skipped, new_q)

    def full_divergence_scan(self) -> np.ndarray:
        """Check every component of every live row; returns newly flagged rows."""
        bad = (
            (np.abs(self.theta).max(axis=1) > DIVERGENCE_LIMIT)
            | (np.abs(self.w).max(axis=1) > DIVERGENCE_LIMIT)
            | ~np.isfinite(self.theta.sum(axis=1))
            | ~np.isfinite(self.w.sum(axis=1))
        )
        fresh = np.flatnonzero(bad & ~self.quarantined)
        self.quarantined[fresh] = True
        return fresh

    def _flag_divergence(self, updated_rows, delta) -> np.ndarray:
        if updated_rows.size == 0:
            return updated_rows[:0]
        d = delta[updated_rows]
        bad = ~np.isfinite(d) | (np.abs(d) > DIVERGENCE_LIMIT)
        fresh = updated_rows[bad]
        self.quarantined[fresh] = True
        return fresh

    def snapshot_rows(self):
        """(theta, w) views for serialization."""
        return self.theta, self.w
