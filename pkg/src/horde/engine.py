"""The parallel prediction loop and the experiment drivers.

Per tick the engine takes one transition from the behaviour stream, tile
codes it once, and fans it out to every learner: each question computes its
importance ratio for the executed action, live learners apply the full
GTD(lambda) update and feed the progress traces, learners whose ratio is
zero receive only the secondary-weight decay (which the full update would
also have produced, so the shortcut is exact).  Questions are statically
partitioned round-robin over workers; per-learner arithmetic is sequential,
so any worker count produces identical weights.

Phases: during LEARN ticks learners update.  A TEST excursion suspends
learning, records every question's prediction at its first step, follows
one constant-action policy, and keeps a return buffer open until it holds
test_steps + 1 post-decision rewards (the last one falls on the first
RECENTER tick); the truncated returns then score the questions whose
target matches the excursion policy.  RECENTER drives back to the pen
centre, learning still suspended.

Outputs per run: a metric log (one row per question per logging interval),
a journal of per-tick reports, an excursion record (every prediction/return
pair, so return variances can be recomputed exactly offline), and final
weight snapshots.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .environments import (
    ChainEnv,
    ExcursionSchedule,
    LogReplay,
    LogWriter,
    PenSimEnv,
    Phase,
    RecenterController,
    Scheduler,
    SENSOR_COUNT,
)
from .errors import ConfigurationError
from .evaluation import (
    BankMSPBETrackers,
    BankNMSRE,
    FeatureCovarianceEstimate,
    MSPBETrackers,
    chain_mdp_spec,
    mspbe_sample,
    mspbe_scalar,
    mspbe_true,
    mspbe_vector,
)
from .features import (
    TileCoder,
    chain_features,
    compact_tile_config,
    paper_scale_tile_config,
)
from .gtd import GTDBank, GTDLearner
from .policies import (
    ConstantAction,
    DEFAULT_ACTIONS,
    FixedDistribution,
    GibbsPolicy,
    GVFQuestion,
    PersistentRandomPolicy,
    StackedGibbsScores,
    question_bank_constant,
    question_bank_gibbs,
)

__all__ = [
    "QuestionBank",
    "TickReport",
    "HordeEngine",
    "run_chain_single",
    "run_experiment",
    "build_coder",
    "build_questions",
]

METRIC_COLUMNS = (
    "step",
    "question_id",
    "nmsre",
    "mspbe_vector",
    "mspbe_scalar",
    "mspbe_sample",
    "mspbe_true",
)
JOURNAL_COLUMNS = ("step", "phase", "duration_ms", "updated", "skipped", "diverged")
EXCURSION_COLUMNS = ("step", "excursion_action", "question_id", "prediction", "g_hat")

DIVERGENCE_SCAN_EVERY = 128


@dataclass
class TickReport:
    step: int
    phase: Phase
    duration_s: float
    updated: int
    skipped: int
    diverged: int


class QuestionBank:
    """The questions, their learners, and their progress trackers.

    All learners share the feature dimension and the executed action
    stream; each owns gamma, the reward component it predicts, and its
    target policy.  Constant-action targets resolve their importance
    ratios by a mask lookup; Gibbs targets go through one stacked sparse
    matvec for the whole bank.
    """

    def __init__(
        self,
        questions: list[GVFQuestion],
        n: int,
        alpha_theta: float,
        alpha_w: float,
        lam: float,
        n_actions: int = len(DEFAULT_ACTIONS),
        mspbe_tau: float = 1000.0,
        nmsre_tau: float = 20.0,
        vector_estimate: bool = True,
        rho_weighted: bool = False,
        use_kernel: bool | None = None,
    ):
        self.questions = list(questions)
        q = len(self.questions)
        self.n = n
        self.n_actions = n_actions
        gammas = np.array([qu.gamma for qu in self.questions])
        self.reward_indices = np.array([qu.reward_index for qu in self.questions], dtype=np.int64)
        self.learners = GTDBank(n, gammas, lam, alpha_theta, alpha_w, use_kernel=use_kernel)
        self.mspbe = BankMSPBETrackers(q, n, mspbe_tau, vector=vector_estimate, rho_weighted=rho_weighted)
        self.nmsre = BankNMSRE(q, nmsre_tau)

        self._rows_by_action = [[] for _ in range(n_actions)]
        fixed_rows, fixed_probs = [], []
        gibbs_rows, gibbs_policies = [], []
        for row, qu in enumerate(self.questions):
            t = qu.target
            if isinstance(t, ConstantAction):
                self._rows_by_action[t.action].append(row)
            elif isinstance(t, FixedDistribution):
                fixed_rows.append(row)
                fixed_probs.append(t.probs)
            elif isinstance(t, GibbsPolicy):
                gibbs_rows.append(row)
                gibbs_policies.append(t)
            else:
                raise ConfigurationError(f"unsupported target policy {type(t).__name__}")
        self._rows_by_action = [np.array(r, dtype=np.int64) for r in self._rows_by_action]
        self._fixed_rows = np.array(fixed_rows, dtype=np.int64)
        self._fixed_probs = np.array(fixed_probs) if fixed_rows else None
        self._gibbs_rows = np.array(gibbs_rows, dtype=np.int64)
        self._gibbs = (
            StackedGibbsScores(gibbs_policies, n, n_actions) if gibbs_policies else None
        )

    @property
    def size(self) -> int:
        return len(self.questions)

    def rho(self, active_indices: np.ndarray, action: int, behaviour_prob: float) -> np.ndarray:
        """Importance ratio of every question for the executed action."""
        out = np.zeros(self.size)
        rows = self._rows_by_action[action]
        if rows.size:
            out[rows] = 1.0 / behaviour_prob
        if self._fixed_rows.size:
            out[self._fixed_rows] = self._fixed_probs[:, action] / behaviour_prob
        if self._gibbs is not None:
            probs = self._gibbs.probs(active_indices)
            out[self._gibbs_rows] = probs[:, action] / behaviour_prob
        return out

    def match_rows(self, action: int) -> np.ndarray:
        """Constant-action questions scored by an excursion under ``action``."""
        return self._rows_by_action[action]

    def rewards(self, obs: np.ndarray) -> np.ndarray:
        return obs[self.reward_indices]


class _RunWriters:
    """CSV sinks for one run.  Floats are written in shortest round-trip
    form so identical runs produce byte-identical files."""

    def __init__(self, out_dir: str | None, run_index: int, journal: bool):
        self.metric_path = None
        self._metrics = self._journal = self._excursions = None
        if out_dir is None:
            return
        os.makedirs(out_dir, exist_ok=True)
        tag = f"{run_index:03d}"
        self.metric_path = os.path.join(out_dir, f"metrics_{tag}.csv")
        self._metrics = open(self.metric_path, "w", encoding="utf-8", newline="")
        self._metrics.write(",".join(METRIC_COLUMNS) + "\n")
        if journal:
            self._journal = open(os.path.join(out_dir, f"journal_{tag}.csv"), "w", encoding="utf-8")
            self._journal.write(",".join(JOURNAL_COLUMNS) + "\n")
        self._excursions = open(
            os.path.join(out_dir, f"excursions_{tag}.csv"), "w", encoding="utf-8"
        )
        self._excursions.write(",".join(EXCURSION_COLUMNS) + "\n")

    @staticmethod
    def _num(x) -> str:
        return repr(float(x))

    def metric_rows(self, step, qids, nmsre=None, vec=None, scalar=None, sample=None, true=None):
        if self._metrics is None:
            return
        chunks = []
        for i, qid in enumerate(qids):
            chunks.append(
                f"{step},{qid},"
                f"{self._num(nmsre[i]) if nmsre is not None else ''},"
                f"{self._num(vec[i]) if vec is not None else ''},"
                f"{self._num(scalar[i]) if scalar is not None else ''},"
                f"{self._num(sample[i]) if sample is not None else ''},"
                f"{self._num(true[i]) if true is not None else ''}\n"
            )
        self._metrics.write("".join(chunks))

    def journal_row(self, report: TickReport):
        if self._journal is None:
            return
        self._journal.write(
            f"{report.step},{report.phase.value},{self._num(report.duration_s * 1e3)},"
            f"{report.updated},{report.skipped},{report.diverged}\n"
        )

    def excursion_rows(self, step, action, qids, predictions, g_hats):
        if self._excursions is None:
            return
        chunks = [
            f"{step},{action},{qid},{self._num(p)},{self._num(g)}\n"
            for qid, p, g in zip(qids, predictions, g_hats)
        ]
        self._excursions.write("".join(chunks))

    def close(self):
        for fh in (self._metrics, self._journal, self._excursions):
            if fh is not None:
                fh.close()


class _PendingExcursion:
    __slots__ = ("action", "start_step", "predictions", "observations")

    def __init__(self, action: int, start_step: int, predictions: np.ndarray):
        self.action = action
        self.start_step = start_step
        self.predictions = predictions
        self.observations: list[np.ndarray] = []


class HordeEngine:
    """Drives one behaviour stream through a question bank."""

    def __init__(
        self,
        bank: QuestionBank,
        coder: TileCoder,
        schedule: ExcursionSchedule,
        behaviour: PersistentRandomPolicy,
        rng,
        workers: int = 1,
        writers: _RunWriters | None = None,
        log_every: int = 500,
        reset_step: int | None = None,
        reset_kind: str = "zero",
        learn_during_recenter: bool = False,
        clear_traces_on_test: bool = False,
        realtime: bool = False,
        tick_seconds: float = 0.1,
        rng_reset=None,
    ):
        self.bank = bank
        self.coder = coder
        self.schedule = schedule
        self.behaviour = behaviour
        self.rng = rng
        self.workers = workers
        self.writers = writers
        self.log_every = log_every
        self.reset_step = reset_step
        self.reset_kind = reset_kind
        self.learn_during_recenter = learn_during_recenter
        self.clear_traces_on_test = clear_traces_on_test
        self.realtime = realtime
        self.tick_seconds = tick_seconds
        self.rng_reset = rng_reset if rng_reset is not None else rng
        self.recenter = RecenterController()
        self.learn_steps = 0
        self.total_quarantined = 0
        self.tick_durations: list[float] = []
        self._partitions = None
        self._pool = None
        if workers > 1:
            self._partitions = [np.arange(bank.size)[w::workers] for w in range(workers)]
            self._pool = ThreadPoolExecutor(max_workers=workers)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def learn_tick(self, active_t, active_tp1, obs_tp1, action, behaviour_prob, step) -> TickReport:
        """One learning update fanned out to the whole bank."""
        t0 = time.perf_counter()
        rho = self.bank.rho(active_t, action, behaviour_prob)
        result = self.bank.learners.step(
            active_t, active_tp1, self.bank.rewards(obs_tp1), rho,
            row_slices=self._partitions, pool=self._pool,
        )
        self.bank.mspbe.update(
            result.delta, result.edw, self.bank.learners.e, result.updated_rows, rho
        )
        self.learn_steps += 1
        fresh = result.new_quarantined.size
        if step % DIVERGENCE_SCAN_EVERY == 0:
            fresh += self.bank.learners.full_divergence_scan().size
        self.total_quarantined += fresh
        return TickReport(step, Phase.LEARN, time.perf_counter() - t0,
                          result.updated, result.skipped, fresh)

    def run_env(self, env, steps: int, recorder: LogWriter | None = None) -> dict:
        """Run the full phase protocol against a live environment."""
        scheduler = Scheduler(self.schedule, self.bank.n_actions, self.rng)
        obs = env.reset()
        phi = self.coder.encode(obs)
        pending: _PendingExcursion | None = None
        need = self.schedule.test_steps + 1

        for step in range(steps):
            t0 = time.perf_counter()
            if self.reset_step is not None and step == self.reset_step:
                self._apply_reset()
            info = scheduler.begin_tick()
            if info.phase is Phase.LEARN:
                action, bprob = self.behaviour.sample()
            elif info.phase is Phase.TEST:
                action, bprob = info.excursion_action, 1.0
            else:
                action, bprob = self.recenter.action(env.pose), 1.0

            if info.excursion_started:
                if self.clear_traces_on_test:
                    self.bank.learners.clear_traces()
                pending = _PendingExcursion(
                    info.excursion_action, step, self.bank.learners.predictions(phi.indices)
                )

            obs2 = env.step(action)
            phi2 = self.coder.encode(obs2)
            if recorder is not None:
                recorder.write(step, action, bprob, obs)

            learning = info.phase is Phase.LEARN or (
                info.phase is Phase.RECENTER and self.learn_during_recenter
            )
            if learning:
                report = self.learn_tick(phi.indices, phi2.indices, obs2, action, bprob, step)
                report.phase = info.phase
            else:
                report = TickReport(step, info.phase, 0.0, 0, self.bank.size, 0)

            if pending is not None:
                pending.observations.append(obs2)
                if len(pending.observations) >= need:
                    self._close_excursion(pending)
                    pending = None

            report.duration_s = time.perf_counter() - t0
            self.tick_durations.append(report.duration_s)
            if self.writers is not None:
                self.writers.journal_row(report)
                if (step + 1) % self.log_every == 0 or step + 1 == steps:
                    self._log_metrics(step)
            if self.realtime:
                leftover = self.tick_seconds - (time.perf_counter() - t0)
                if leftover > 0:
                    time.sleep(leftover)
            obs, phi = obs2, phi2

        if recorder is not None and steps > 0:
            # trailing row so replay reconstructs the final transition
            recorder.write(steps, action, bprob, obs)
        return self._summary(steps)

    def run_replay(self, replay: LogReplay) -> dict:
        """Continuous learning over a recorded stream (no excursions)."""
        rows = replay.rows()
        try:
            _, action, bprob, obs = next(rows)
        except StopIteration:
            return self._summary(0)
        phi = self.coder.encode(obs)
        step = 0
        last_logged = -1
        for _, next_action, next_prob, obs2 in rows:
            t0 = time.perf_counter()
            if self.reset_step is not None and step == self.reset_step:
                self._apply_reset()
            phi2 = self.coder.encode(obs2)
            report = self.learn_tick(phi.indices, phi2.indices, obs2, action, bprob, step)
            report.duration_s = time.perf_counter() - t0
            self.tick_durations.append(report.duration_s)
            if self.writers is not None:
                self.writers.journal_row(report)
                if (step + 1) % self.log_every == 0:
                    self._log_metrics(step)
                    last_logged = step
            phi, action, bprob = phi2, next_action, next_prob
            step += 1
        if self.writers is not None and step and last_logged != step - 1:
            self._log_metrics(step - 1)
        return self._summary(step)

    def _apply_reset(self):
        if self.reset_kind == "zero":
            self.bank.learners.reset_primary(low=0.0, high=0.0)
        else:
            self.bank.learners.reset_primary(self.rng_reset, 0.0, 1.0)

    def _close_excursion(self, pending: _PendingExcursion):
        rows = self.bank.match_rows(pending.action)
        if rows.size == 0:
            return
        rewards = np.stack(pending.observations)  # (test_steps+1, sensors)
        horizon = rewards.shape[0] - 1
        ks = np.arange(horizon + 1)
        ghat_by_gamma = {}
        for g in np.unique(self.bank.learners.gammas[rows]):
            ghat_by_gamma[g] = (g**ks) @ rewards
        gammas = self.bank.learners.gammas
        ridx = self.bank.reward_indices
        g_hats = np.array([ghat_by_gamma[gammas[r]][ridx[r]] for r in rows])
        predictions = pending.predictions[rows]
        self.bank.nmsre.update(rows, predictions, g_hats)
        if self.writers is not None:
            qids = [self.bank.questions[r].qid for r in rows]
            self.writers.excursion_rows(
                pending.start_step, pending.action, qids, predictions, g_hats
            )

    def _log_metrics(self, step: int):
        qids = [q.qid for q in self.bank.questions]
        nmsre = self.bank.nmsre.values()
        scalar = self.bank.mspbe.scalar_estimates()
        vec = None
        if self.bank.mspbe.vector_enabled:
            vec = self.bank.mspbe.vector_estimates(self.bank.learners.w)
        self.writers.metric_rows(step, qids, nmsre=nmsre, vec=vec, scalar=scalar)

    def _summary(self, steps: int) -> dict:
        durations = np.array(self.tick_durations) if self.tick_durations else np.zeros(1)
        return {
            "steps": steps,
            "learn_steps": self.learn_steps,
            "quarantined": int(self.bank.learners.quarantined.sum()),
            "mean_tick_ms": float(durations.mean() * 1e3),
            "max_tick_ms": float(durations.max() * 1e3),
        }


def snapshot_bank(bank: QuestionBank, out_dir: str, step: int):
    """snapshots/<step>/<question_id>.weights: id and n, then theta, then w."""
    d = os.path.join(out_dir, "snapshots", str(step))
    os.makedirs(d, exist_ok=True)
    theta, w = bank.learners.snapshot_rows()
    for row, q in enumerate(bank.questions):
        path = os.path.join(d, f"{q.qid}.weights")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{q.qid},{bank.n}\n")
            fh.write(",".join(repr(float(v)) for v in theta[row]) + "\n")
            fh.write(",".join(repr(float(v)) for v in w[row]) + "\n")


def load_snapshot(path: str):
    """Returns (question_id, n, theta, w) from a .weights file."""
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline().strip().split(",")
        qid, n = head[0], int(head[1])
        theta = np.array([float(v) for v in fh.readline().strip().split(",")])
        w = np.array([float(v) for v in fh.readline().strip().split(",")])
    if theta.size != n or w.size != n:
        raise ConfigurationError(f"snapshot {path} does not match its declared dimension")
    return qid, n, theta, w


# ---------------------------------------------------------------------------
# chain experiment driver

def run_chain_single(config: ExperimentConfig, rng) -> dict:
    """One chain run: GTD on the 7-state walk with per-episode estimator logs.

    Returns per-episode arrays for the true, sample, vector, and scalar
    MSPBE, all measured at episode end.
    """
    mdp = chain_mdp_spec(
        config.chain_p_right_target,
        config.chain_p_right_behaviour,
        config.chain_gamma,
        config.chain_feature_kind,
    )
    lam = config.lam
    alpha_theta = config.resolve_alpha_theta(1)
    alpha_w = config.resolve_alpha_w(1)
    learner = GTDLearner(5, alpha_theta, alpha_w, lam, config.chain_gamma)
    trackers = MSPBETrackers(5, config.mspbe_tau, rho_weighted=config.rho_weighted_traces)
    cov = FeatureCovarianceEstimate(5)
    env = ChainEnv()
    p_b = config.chain_p_right_behaviour
    p_pi = config.chain_p_right_target
    feats = [chain_features(i, config.chain_feature_kind) for i in range(5)]

    episodes = config.episodes
    out = {k: np.zeros(episodes) for k in ("true", "sample", "vector", "scalar")}
    for ep in range(episodes):
        if config.reset_episode is not None and ep == config.reset_episode:
            if config.reset_kind == "uniform01":
                learner.reset_primary(rng, 0.0, 1.0)
            else:
                learner.reset_primary(low=0.0, high=0.0)
        env.reset()
        learner.start_episode()
        while not env.terminal:
            pos = env.position
            right = rng.random() < p_b
            action = 1 if right else 0
            bprob = p_b if right else 1.0 - p_b
            rho = (p_pi if right else 1.0 - p_pi) / bprob
            nxt, reward, terminal = env.step(action)
            phi = feats[pos - 1]
            phi2 = np.zeros(5) if terminal else feats[nxt - 1]
            gamma_tp1 = 0.0 if terminal else None
            delta = learner.step(phi, phi2, reward, rho, gamma_tp1)
            trackers.update(delta, learner.e, rho=rho, edw=learner.last_edw)
            cov.update(phi)
        out["true"][ep] = mspbe_true(mdp, learner.theta, lam)
        out["sample"][ep] = mspbe_sample(
            cov, trackers.vec_trace.value, config.covariance_epsilon
        )
        out["vector"][ep] = mspbe_vector(trackers, learner.w)
        out["scalar"][ep] = mspbe_scalar(trackers)
    out["theta"] = learner.theta.copy()
    out["w"] = learner.w.copy()
    out["diverged"] = learner.diverged
    return out


# ---------------------------------------------------------------------------
# experiment orchestration

def build_coder(config: ExperimentConfig) -> TileCoder:
    if config.features == "paper-scale":
        return TileCoder(paper_scale_tile_config())
    return TileCoder(
        compact_tile_config(
            SENSOR_COUNT,
            config.compact_single_tilings,
            config.compact_single_tiles,
            config.compact_pair_tilings,
            config.compact_pair_tiles,
        )
    )


def build_questions(config: ExperimentConfig, n: int, rng) -> list[GVFQuestion]:
    if config.questions == "constant":
        return question_bank_constant(config.gammas, SENSOR_COUNT, DEFAULT_ACTIONS)
    return question_bank_gibbs(
        config.gibbs_count, n, DEFAULT_ACTIONS, config.gammas,
        SENSOR_COUNT, rng, config.gibbs_nonzeros,
    )


def build_bank(config: ExperimentConfig, coder: TileCoder, rng) -> QuestionBank:
    questions = build_questions(config, coder.n, rng)
    active = coder.active_count
    return QuestionBank(
        questions,
        coder.n,
        alpha_theta=config.resolve_alpha_theta(active),
        alpha_w=config.resolve_alpha_w(active),
        lam=config.lam,
        mspbe_tau=config.mspbe_tau,
        nmsre_tau=config.nmsre_tau,
        vector_estimate=config.vector_estimate,
        rho_weighted=config.rho_weighted_traces,
    )


def _spawn_rngs(seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def run_experiment(config: ExperimentConfig, out_dir: str | None) -> dict:
    """Run the configured experiment, writing logs and snapshots to out_dir."""
    from .config import serialize_config, validate

    problems = validate(config)
    if problems:
        from .errors import ConfigValidationError

        raise ConfigValidationError(problems)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.ini"), "w", encoding="utf-8") as fh:
            fh.write(serialize_config(config))

    if config.environment == "chain":
        return _run_chain_experiment(config, out_dir)
    return _run_stream_experiment(config, out_dir)


def _run_chain_experiment(config: ExperimentConfig, out_dir: str | None) -> dict:
    rngs = _spawn_rngs(config.seed, config.runs)
    finals = []
    diverged = 0
    for run, rng in enumerate(rngs):
        result = run_chain_single(config, rng)
        diverged += int(result["diverged"])
        finals.append(result["true"][-1])
        if out_dir is not None:
            writers = _RunWriters(out_dir, run, journal=False)
            for ep in range(config.episodes):
                writers.metric_rows(
                    ep, ["chain"],
                    vec=[result["vector"][ep]],
                    scalar=[result["scalar"][ep]],
                    sample=[result["sample"][ep]],
                    true=[result["true"][ep]],
                )
            writers.close()
    return {
        "environment": "chain",
        "runs": config.runs,
        "episodes": config.episodes,
        "final_true_mspbe": finals,
        "diverged_runs": diverged,
        "quarantined": diverged,
    }


def _run_stream_experiment(config: ExperimentConfig, out_dir: str | None) -> dict:
    rng_env, rng_sched, rng_behaviour, rng_questions, rng_reset = _spawn_rngs(config.seed, 5)
    coder = build_coder(config)
    bank = build_bank(config, coder, rng_questions)
    schedule = ExcursionSchedule(
        mean_interval=config.mean_interval,
        test_steps=config.test_steps,
        recenter_steps=config.recenter_steps,
        enabled=config.excursions,
    )
    behaviour = PersistentRandomPolicy(
        len(DEFAULT_ACTIONS), config.repeat_probability, rng_behaviour
    )
    writers = _RunWriters(out_dir, 0, config.journal) if out_dir is not None else None
    engine = HordeEngine(
        bank,
        coder,
        schedule,
        behaviour,
        rng_sched,
        workers=config.workers,
        writers=writers,
        log_every=config.log_every,
        reset_step=config.reset_step,
        reset_kind=config.reset_kind,
        learn_during_recenter=config.learn_during_recenter,
        clear_traces_on_test=config.clear_traces_on_test,
        realtime=config.realtime,
        rng_reset=rng_reset,
    )
    try:
        if config.environment == "pen":
            env = PenSimEnv(_child_seed(config.seed, "pen"), config.pen_sensor_noise)
            recorder = None
            if config.record_path:
                recorder = LogWriter(config.record_path, SENSOR_COUNT, DEFAULT_ACTIONS.names)
            try:
                summary = engine.run_env(env, config.steps, recorder)
            finally:
                if recorder is not None:
                    recorder.close()
        else:
            with LogReplay(config.replay_path) as replay:
                summary = engine.run_replay(replay)
    finally:
        engine.close()
        if writers is not None:
            writers.close()
    if out_dir is not None and config.snapshots:
        snapshot_bank(bank, out_dir, summary["steps"])
    summary["environment"] = config.environment
    summary["questions"] = bank.size
    return summary


def _child_seed(seed: int, label: str) -> int:
    h = np.random.SeedSequence([seed, sum(ord(c) for c in label)])
    return int(h.generate_state(1)[0])
