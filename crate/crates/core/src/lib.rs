//! Tabular Markov-game laboratory.
//!
//! The crate bundles the pieces needed to study decentralized equilibrium
//! learning in small, fully enumerable Markov games: the game model itself
//! with exact Bellman evaluation, adversarial-bandit subroutines, V-learning
//! style learners for coarse correlated and correlated equilibria, certified
//! output policies with exact audits, single-controller baselines for Nash
//! points in potential games, hard-instance generators built from covering
//! codes, and one-step equilibrium gap evaluators.

pub mod bandit;
pub mod certified;
pub mod error;
pub mod evaluators;
pub mod game;
pub mod hard;
pub mod learners;
pub mod mpg;
pub mod rng;
pub mod schedule;

pub use bandit::{
    ftrl_distribution, loss_estimate, stationary_distribution, swap_regret_actions,
    swap_regret_distributions, weighted_external_regret, FtrlState, MixedExpertPolicy,
    MixedExpertState,
};
pub use certified::{
    certified_exact_value, certified_monte_carlo_value, certified_omniscient_deviation,
    gap_bound_from_confidence, CertifiedPolicySampler, DeviationMode, MAX_CERTIFIED_EPISODES,
};
pub use error::{Error, Result};
pub use evaluators::{one_step_cce_gap, one_step_ce_gap, GapMethod, GapReport, PlayerGaps};
pub use game::{
    best_response_value, exact_state_values, exact_value, ne_gap, random_cooperative_game,
    random_game, sample_episode, sample_episode_under_policy, with_player_policy,
    DeterministicPolicy, EpisodeTrace, GameJson, JointActionSpace, MarkovGame,
    MarkovProductPolicy, RewardSpec, StepRecord,
};
pub use hard::{
    bernoulli_kl, bernoulli_kl_eps, block_one_net, build_hard_game, embed_one_step_game,
    hamming_one_net, kl_decomposition_check, permute_game, pure_ne_set, verify_one_net,
    verify_pure_ne_set, OneStepHardGame,
};
pub use learners::{
    ce_v_learning, cce_v_learning, run_v_learning, LearnerConfig, LearnerKind, PlayerLearner,
    RunHistory, VisitRecord, RUN_HISTORY_VERSION,
};
pub use mpg::{
    bernstein_bonus, exact_mdp_view, monte_carlo_value, nash_ca, ucbvi_uplow, NashCaConfig,
    NashCaIteration, NashCaResult, SampledMdp, SamplingMdpView, UcbviParams, UcbviRun,
};
pub use rng::StreamSeed;
