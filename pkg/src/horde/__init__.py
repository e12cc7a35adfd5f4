"""Parallel off-policy prediction with GTD(lambda).

Many general value functions (each a target policy, a discount, and a
reward signal) are learned simultaneously from one behaviour stream over a
shared sparse feature vector, with online MSPBE estimates tracking learning
progress without interrupting behaviour, and interspersed on-policy test
excursions providing return-error ground truth where affordable.
"""

from .config import ExperimentConfig, parse_config, preset, serialize_config
from .engine import (
    HordeEngine,
    QuestionBank,
    TickReport,
    run_chain_single,
    run_experiment,
)
from .environments import (
    ChainEnv,
    ExcursionSchedule,
    LogReplay,
    LogWriter,
    PenSimEnv,
    Phase,
    Scheduler,
)
from .evaluation import (
    BankMSPBETrackers,
    BankNMSRE,
    ExponentialTrace,
    FeatureCovarianceEstimate,
    MDPSpec,
    MSPBETrackers,
    NMSRETracker,
    chain_mdp_spec,
    mspbe_sample,
    mspbe_scalar,
    mspbe_true,
    mspbe_vector,
    nmsre_update,
    offline_nmsre,
    trace_update,
    truncated_return,
)
from .features import (
    SparseFeatures,
    TileCoder,
    TileCoderConfig,
    TilingGroup,
    chain_features,
    compact_tile_config,
    dot_sparse,
    paper_scale_tile_config,
    tile_code,
)
from .gtd import GTDBank, GTDLearner
from .policies import (
    ActionSet,
    CHAIN_ACTIONS,
    ConstantAction,
    DEFAULT_ACTIONS,
    FixedDistribution,
    GibbsPolicy,
    GVFQuestion,
    PersistentRandomPolicy,
    generate_random_gibbs,
    importance_ratio,
    policy_prob,
    policy_probs,
    question_bank_constant,
    question_bank_gibbs,
)

__version__ = "0.1.0"
