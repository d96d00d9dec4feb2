//! Decentralized V-learning for coarse correlated and correlated equilibria.
//!
//! All players learn simultaneously from the same episode stream. Each
//! player's state is updated only from its own observations (own action, own
//! reward, visited states); the shared driver merely samples the environment
//! and hands every player the same trace. Each player also draws its actions
//! from its own named RNG stream, so a single player's run can be replayed
//! in isolation from the recorded trace.

use serde::{Deserialize, Serialize};

use crate::bandit::{FtrlState, MixedExpertPolicy, MixedExpertState};
use crate::error::{Error, Result};
use crate::game::{sample_index, MarkovGame};
use crate::rng::StreamSeed;
use crate::schedule::{alpha_step, ScheduleParams};

pub const RUN_HISTORY_VERSION: u32 = 1;

/// One visit of one (h, s) pair: everything the certified policy and the
/// structural tests need to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    /// episode index, 0-based
    pub episode: usize,
    /// per player: the action distribution in force at this visit
    pub dists: Vec<Vec<f64>>,
    pub joint_action: Vec<usize>,
    /// per player: realized reward
    pub rewards: Vec<f64>,
    pub next_state: usize,
    /// per player: the upper estimate of the next state's value that this
    /// visit's update consumed
    pub next_upper: Vec<f64>,
    /// per player: the upper estimate at (h, s) right after the update
    pub upper_after: Vec<f64>,
}

/// Full archive of a learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub version: u32,
    pub horizon: usize,
    pub num_players: usize,
    pub num_states: usize,
    pub action_counts: Vec<usize>,
    pub initial_state: usize,
    pub episodes: usize,
    /// [h][s] -> chronological visit records
    pub visits: Vec<Vec<Vec<VisitRecord>>>,
    /// per episode, per player: (upper, lower) estimates at (1, s1) taken at
    /// episode start
    pub value_snapshots: Vec<Vec<(f64, f64)>>,
    /// [h][player][s] -> the distribution each player would use on the next
    /// visit after the run ended
    pub final_policies: Vec<Vec<Vec<Vec<f64>>>>,
}

impl RunHistory {
    /// Number of visits to (h, s) strictly before episode k.
    pub fn visit_count_before(&self, h: usize, s: usize, k: usize) -> usize {
        self.visits[h][s].iter().take_while(|v| v.episode < k).count()
    }

    /// The l-th (1-based) visit record of (h, s).
    pub fn visit(&self, h: usize, s: usize, l: usize) -> &VisitRecord {
        &self.visits[h][s][l - 1]
    }

    /// Mean upper-minus-lower confidence width at (1, s1), per player.
    pub fn mean_confidence_gap(&self) -> Vec<f64> {
        let k = self.value_snapshots.len() as f64;
        let mut out = vec![0.0; self.num_players];
        for snap in &self.value_snapshots {
            for (o, &(up, lo)) in out.iter_mut().zip(snap) {
                *o += (up - lo) / k;
            }
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("run history serialization")
    }

    pub fn from_json_str(s: &str) -> Result<RunHistory> {
        let h: RunHistory =
            serde_json::from_str(s).map_err(|e| Error::MissingData(format!("history json: {e}")))?;
        if h.version != RUN_HISTORY_VERSION {
            return Err(Error::MissingData(format!("unsupported history version {}", h.version)));
        }
        Ok(h)
    }
}

/// Which equilibrium the run targets; decides the inner bandit and the
/// bonus/learning-rate schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Cce,
    Ce,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub episodes: usize,
    /// bonus scale
    pub c: f64,
    /// failure probability in the confidence term
    pub p: f64,
    /// accuracy target in the confidence term
    pub eps: f64,
    /// overrides the computed confidence term when set
    pub iota_override: Option<f64>,
}

impl LearnerConfig {
    pub fn new(episodes: usize) -> Self {
        LearnerConfig { episodes, c: 0.5, p: 0.05, eps: 0.05, iota_override: None }
    }

    pub fn params(&self, game: &MarkovGame) -> Result<ScheduleParams> {
        let max_a = *game.action_counts().iter().max().expect("players");
        let mut p = ScheduleParams::new(
            game.num_players(),
            max_a,
            game.horizon(),
            game.num_states(),
            self.episodes,
            self.p,
            self.eps,
            self.c,
        )?;
        if let Some(iota) = self.iota_override {
            p.iota = iota;
        }
        Ok(p)
    }
}

enum Inner {
    Cce(Vec<Vec<FtrlState>>),
    Ce(Vec<Vec<MixedExpertState>>),
}

/// One player's complete learning state: optimistic and pessimistic value
/// tables, visit counts, and one bandit per (h, s).
pub struct PlayerLearner {
    player: usize,
    horizon: usize,
    actions: usize,
    params: ScheduleParams,
    /// [h][s]; row h = horizon is the all-zero terminal layer
    upper: Vec<Vec<f64>>,
    lower: Vec<Vec<f64>>,
    counts: Vec<Vec<usize>>,
    inner: Inner,
    /// CE only: the expert policy and sampled sub-expert of the pending visit
    pending: Option<(MixedExpertPolicy, usize)>,
    rng: rand_chacha::ChaCha12Rng,
}

impl PlayerLearner {
    pub fn new(
        kind: LearnerKind,
        player: usize,
        horizon: usize,
        states: usize,
        actions: usize,
        params: ScheduleParams,
        max_visits: usize,
        stream: StreamSeed,
    ) -> Result<Self> {
        let inner = match kind {
            LearnerKind::Cce => Inner::Cce(
                (0..horizon)
                    .map(|_| {
                        (0..states)
                            .map(|_| FtrlState::new(horizon, actions, horizon as f64 * params.iota))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            LearnerKind::Ce => Inner::Ce(
                (0..horizon)
                    .map(|_| {
                        (0..states)
                            .map(|_| MixedExpertState::new(horizon, actions, params.iota, max_visits))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        let mut upper = vec![vec![horizon as f64; states]; horizon + 1];
        upper[horizon] = vec![0.0; states];
        Ok(PlayerLearner {
            player,
            horizon,
            actions,
            params,
            upper,
            lower: vec![vec![0.0; states]; horizon + 1],
            counts: vec![vec![0; states]; horizon],
            inner,
            pending: None,
            rng: stream.rng(),
        })
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn upper_value(&self, h: usize, s: usize) -> f64 {
        self.upper[h][s]
    }

    pub fn lower_value(&self, h: usize, s: usize) -> f64 {
        self.lower[h][s]
    }

    pub fn visit_count(&self, h: usize, s: usize) -> usize {
        self.counts[h][s]
    }

    /// Distribution the player would use on its next visit to (h, s),
    /// without committing to a visit.
    pub fn peek_policy(&self, h: usize, s: usize) -> Result<Vec<f64>> {
        match &self.inner {
            Inner::Cce(f) => Ok(f[h][s].current_policy()),
            Inner::Ce(m) => Ok(m[h][s].peek_policy()?.mixture),
        }
    }

    /// Commit to a visit of (h, s): produce this visit's action distribution
    /// and sample the player's action from its own stream.
    pub fn act(&mut self, h: usize, s: usize) -> Result<(usize, Vec<f64>)> {
        match &mut self.inner {
            Inner::Cce(f) => {
                let dist = f[h][s].current_policy();
                let a = sample_index(&dist, &mut self.rng);
                Ok((a, dist))
            }
            Inner::Ce(m) => {
                let policy = m[h][s].advance_policy()?;
                let (b, a) = m[h][s].sample(&policy, &mut self.rng);
                let dist = policy.mixture.clone();
                self.pending = Some((policy, b));
                Ok((a, dist))
            }
        }
    }

    /// Fold in the observation for the visit opened by `act`. Returns the
    /// upper estimate of the next state's value that the update consumed.
    pub fn learn(
        &mut self,
        h: usize,
        s: usize,
        action: usize,
        reward: f64,
        next_state: usize,
    ) -> Result<f64> {
        self.counts[h][s] += 1;
        let t = self.counts[h][s];
        let alpha = alpha_step(self.horizon, t);
        let next_upper = self.upper[h + 1][next_state];
        let next_lower = self.lower[h + 1][next_state];
        // steps remaining after this one; also the clip level for the loss
        let remaining = (self.horizon - h - 1) as f64;
        let clipped_next = next_upper.min(remaining);
        let (bonus, loss) = match &self.inner {
            Inner::Cce(_) => (
                self.params.cce_bonus(self.actions, t),
                (remaining + 1.0 - reward - clipped_next) / self.horizon as f64,
            ),
            Inner::Ce(_) => (
                self.params.ce_bonus(self.actions, t),
                (remaining + 1.0 - (reward + clipped_next)) / self.horizon as f64,
            ),
        };
        self.upper[h][s] = (1.0 - alpha) * self.upper[h][s] + alpha * (reward + next_upper + bonus);
        let lower = (1.0 - alpha) * self.lower[h][s] + alpha * (reward + next_lower - bonus);
        self.lower[h][s] = lower.clamp(0.0, self.horizon as f64);
        match &mut self.inner {
            Inner::Cce(f) => f[h][s].observe(action, loss),
            Inner::Ce(m) => {
                let (policy, b) = self
                    .pending
                    .take()
                    .ok_or_else(|| Error::MissingData("learn without a pending visit".into()))?;
                m[h][s].observe(&policy, b, action, loss);
            }
        }
        Ok(next_upper)
    }

    /// CE only: per-(h,s) sub-expert visit counters.
    pub fn expert_visits(&self, h: usize, s: usize) -> Option<&[usize]> {
        match &self.inner {
            Inner::Ce(m) => Some(m[h][s].expert_visits()),
            Inner::Cce(_) => None,
        }
    }
}

impl MixedExpertState {
    /// Policy of the hypothetical next visit, without advancing the state.
    pub fn peek_policy(&self) -> Result<MixedExpertPolicy> {
        let mut probe = self.clone();
        probe.advance_policy()
    }
}

/// Run CCE-V-learning for all players; see `run_v_learning`.
pub fn cce_v_learning(game: &MarkovGame, cfg: &LearnerConfig, seed: StreamSeed) -> Result<RunHistory> {
    run_v_learning(LearnerKind::Cce, game, cfg, seed)
}

/// Run CE-V-learning for all players; see `run_v_learning`.
pub fn ce_v_learning(game: &MarkovGame, cfg: &LearnerConfig, seed: StreamSeed) -> Result<RunHistory> {
    run_v_learning(LearnerKind::Ce, game, cfg, seed)
}

/// Shared driver: roll episodes, let every player act from its own bandit
/// state and learn from its own observations, and archive every visit.
pub fn run_v_learning(
    kind: LearnerKind,
    game: &MarkovGame,
    cfg: &LearnerConfig,
    seed: StreamSeed,
) -> Result<RunHistory> {
    if cfg.episodes == 0 {
        return Err(Error::InvalidParameter("need at least one episode".into()));
    }
    let params = cfg.params(game)?;
    let m = game.num_players();
    let mut players: Vec<PlayerLearner> = (0..m)
        .map(|i| {
            PlayerLearner::new(
                kind,
                i,
                game.horizon(),
                game.num_states(),
                game.action_counts()[i],
                params,
                cfg.episodes,
                seed.labeled("player").child(i as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut env_rng = seed.labeled("env").rng();
    let mut visits: Vec<Vec<Vec<VisitRecord>>> =
        vec![vec![Vec::new(); game.num_states()]; game.horizon()];
    let mut value_snapshots = Vec::with_capacity(cfg.episodes);
    let s1 = game.initial_state();
    for k in 0..cfg.episodes {
        value_snapshots.push(
            players.iter().map(|p| (p.upper_value(0, s1), p.lower_value(0, s1))).collect(),
        );
        let mut s = s1;
        for h in 0..game.horizon() {
            let mut joint_action = Vec::with_capacity(m);
            let mut dists = Vec::with_capacity(m);
            for p in players.iter_mut() {
                let (a, dist) = p.act(h, s)?;
                joint_action.push(a);
                dists.push(dist);
            }
            let joint = game.joint_actions().encode(&joint_action);
            let rewards: Vec<f64> =
                (0..m).map(|i| game.reward(h, s, joint, i).realize(&mut env_rng)).collect();
            let next_state = sample_index(game.transition(h, s, joint), &mut env_rng);
            let mut next_upper = Vec::with_capacity(m);
            let mut upper_after = Vec::with_capacity(m);
            for (i, p) in players.iter_mut().enumerate() {
                next_upper.push(p.learn(h, s, joint_action[i], rewards[i], next_state)?);
                upper_after.push(p.upper_value(h, s));
            }
            visits[h][s].push(VisitRecord {
                episode: k,
                dists,
                joint_action,
                rewards,
                next_state,
                next_upper,
                upper_after,
            });
            s = next_state;
        }
    }
    let final_policies = (0..game.horizon())
        .map(|h| {
            players
                .iter()
                .map(|p| {
                    (0..game.num_states()).map(|s| p.peek_policy(h, s)).collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunHistory {
        version: RUN_HISTORY_VERSION,
        horizon: game.horizon(),
        num_players: m,
        num_states: game.num_states(),
        action_counts: game.action_counts().to_vec(),
        initial_state: s1,
        episodes: cfg.episodes,
        visits,
        value_snapshots,
        final_policies,
    })
}
