//! Tabular episodic Markov games: model, policies, simulation, and exact
//! Bellman machinery.
//!
//! Joint actions are stored as a single mixed-radix index with player 0 in the
//! least significant position, which fixes the iteration order used by every
//! brute-force loop in the workspace.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Desk-scale caps enforced at construction.
pub const MAX_JOINT_ACTIONS: usize = 1 << 20;
pub const MAX_STATE_STEPS: usize = 100_000;

const PROB_TOL: f64 = 1e-12;

/// Reward at one (h, s, joint action, player) cell. Evaluators always use the
/// mean; simulators realize Bernoulli noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RewardSpec {
    Deterministic { value: f64 },
    Bernoulli { mean: f64 },
}

impl RewardSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            RewardSpec::Deterministic { value } => value,
            RewardSpec::Bernoulli { mean } => mean,
        }
    }

    pub fn realize<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardSpec::Deterministic { value } => value,
            RewardSpec::Bernoulli { mean } => {
                if rng.gen::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.mean();
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(Error::InvalidGame(format!("reward mean {v} outside [0,1]")));
        }
        Ok(())
    }
}

/// Mixed-radix indexing of joint actions; player 0 is least significant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointActionSpace {
    counts: Vec<usize>,
    total: usize,
}

impl JointActionSpace {
    pub fn new(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() || counts.iter().any(|&a| a == 0) {
            return Err(Error::InvalidGame("every player needs at least one action".into()));
        }
        let mut total = 1usize;
        for &a in counts {
            total = total
                .checked_mul(a)
                .filter(|&t| t <= MAX_JOINT_ACTIONS)
                .ok_or_else(|| Error::CapExceeded(format!("joint action space over {MAX_JOINT_ACTIONS}")))?;
        }
        Ok(JointActionSpace { counts: counts.to_vec(), total })
    }

    pub fn num_players(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn encode(&self, actions: &[usize]) -> usize {
        debug_assert_eq!(actions.len(), self.counts.len());
        let mut idx = 0usize;
        for (i, &a) in actions.iter().enumerate().rev() {
            debug_assert!(a < self.counts[i]);
            idx = idx * self.counts[i] + a;
        }
        idx
    }

    pub fn decode(&self, mut idx: usize) -> Vec<usize> {
        debug_assert!(idx < self.total);
        let mut out = Vec::with_capacity(self.counts.len());
        for &a in &self.counts {
            out.push(idx % a);
            idx /= a;
        }
        out
    }

    /// Action of one player inside an encoded joint action.
    pub fn component(&self, idx: usize, player: usize) -> usize {
        let mut rest = idx;
        for &a in &self.counts[..player] {
            rest /= a;
        }
        rest % self.counts[player]
    }

    /// Replace one player's action inside an encoded joint action.
    pub fn with_component(&self, idx: usize, player: usize, action: usize) -> usize {
        let mut stride = 1usize;
        for &a in &self.counts[..player] {
            stride *= a;
        }
        let old = self.component(idx, player);
        idx - old * stride + action * stride
    }
}

/// Tabular episodic general-sum Markov game.
#[derive(Debug, Clone)]
pub struct MarkovGame {
    num_players: usize,
    horizon: usize,
    num_states: usize,
    actions: JointActionSpace,
    /// [h][s][joint] -> distribution over next states, flattened.
    transitions: Vec<f64>,
    /// [h][s][joint][player], flattened.
    rewards: Vec<RewardSpec>,
    initial_state: usize,
}

impl MarkovGame {
    pub fn new(
        num_players: usize,
        horizon: usize,
        num_states: usize,
        action_counts: &[usize],
        transitions: Vec<f64>,
        rewards: Vec<RewardSpec>,
        initial_state: usize,
    ) -> Result<Self> {
        if action_counts.len() != num_players {
            return Err(Error::InvalidGame("action_counts length must equal player count".into()));
        }
        if horizon == 0 || num_states == 0 {
            return Err(Error::InvalidGame("horizon and state count must be positive".into()));
        }
        if num_states * horizon > MAX_STATE_STEPS {
            return Err(Error::CapExceeded(format!("S*H over {MAX_STATE_STEPS}")));
        }
        if initial_state >= num_states {
            return Err(Error::InvalidGame("initial state out of range".into()));
        }
        let actions = JointActionSpace::new(action_counts)?;
        let cells = horizon * num_states * actions.len();
        if transitions.len() != cells * num_states {
            return Err(Error::DimensionMismatch(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                cells * num_states
            )));
        }
        if rewards.len() != cells * num_players {
            return Err(Error::DimensionMismatch(format!(
                "reward tensor has {} entries, expected {}",
                rewards.len(),
                cells * num_players
            )));
        }
        for row in transitions.chunks(num_states) {
            let mut sum = 0.0;
            for &p in row {
                if !(0.0..=1.0 + PROB_TOL).contains(&p) || !p.is_finite() {
                    return Err(Error::InvalidGame(format!("transition probability {p} invalid")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidGame(format!("transition row sums to {sum}")));
            }
        }
        for r in &rewards {
            r.validate()?;
        }
        Ok(MarkovGame {
            num_players,
            horizon,
            num_states,
            actions,
            transitions,
            rewards,
            initial_state,
        })
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action_counts(&self) -> &[usize] {
        self.actions.counts()
    }

    pub fn joint_actions(&self) -> &JointActionSpace {
        &self.actions
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    #[inline]
    fn cell(&self, h: usize, s: usize, joint: usize) -> usize {
        (h * self.num_states + s) * self.actions.len() + joint
    }

    /// Transition distribution at (h, s, joint).
    #[inline]
    pub fn transition(&self, h: usize, s: usize, joint: usize) -> &[f64] {
        let c = self.cell(h, s, joint);
        &self.transitions[c * self.num_states..(c + 1) * self.num_states]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, joint: usize, player: usize) -> RewardSpec {
        self.rewards[self.cell(h, s, joint) * self.num_players + player]
    }

    #[inline]
    pub fn reward_mean(&self, h: usize, s: usize, joint: usize, player: usize) -> f64 {
        self.reward(h, s, joint, player).mean()
    }

    /// True when all players share identical rewards everywhere.
    pub fn is_cooperative(&self) -> bool {
        self.rewards.chunks(self.num_players).all(|cell| {
            cell.iter().all(|r| (r.mean() - cell[0].mean()).abs() == 0.0)
        })
    }
}

/// Markov product policy: per (h, player, state) a distribution over own actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovProductPolicy {
    /// [h][player][state] -> probability vector over A_i.
    probs: Vec<Vec<Vec<Vec<f64>>>>,
}

impl MarkovProductPolicy {
    pub fn new(probs: Vec<Vec<Vec<Vec<f64>>>>) -> Result<Self> {
        for per_h in &probs {
            for per_player in per_h {
                for v in per_player {
                    let sum: f64 = v.iter().sum();
                    if (sum - 1.0).abs() > PROB_TOL || v.iter().any(|&p| p < 0.0) {
                        return Err(Error::InvalidGame(format!("policy vector sums to {sum}")));
                    }
                }
            }
        }
        Ok(MarkovProductPolicy { probs })
    }

    pub fn uniform(game: &MarkovGame) -> Self {
        let probs = (0..game.horizon())
            .map(|_| {
                game.action_counts()
                    .iter()
                    .map(|&a| vec![vec![1.0 / a as f64; a]; game.num_states()])
                    .collect()
            })
            .collect();
        MarkovProductPolicy { probs }
    }

    /// Deterministic policy from an action table [h][player][state].
    pub fn pure(game: &MarkovGame, table: &[Vec<Vec<usize>>]) -> Result<Self> {
        if table.len() != game.horizon() {
            return Err(Error::DimensionMismatch("pure policy horizon".into()));
        }
        let mut probs = Vec::with_capacity(table.len());
        for per_h in table {
            if per_h.len() != game.num_players() {
                return Err(Error::DimensionMismatch("pure policy player count".into()));
            }
            let mut hp = Vec::with_capacity(per_h.len());
            for (i, per_s) in per_h.iter().enumerate() {
                let a_i = game.action_counts()[i];
                let mut sp = Vec::with_capacity(per_s.len());
                for &a in per_s {
                    if a >= a_i {
                        return Err(Error::DimensionMismatch("pure policy action out of range".into()));
                    }
                    let mut v = vec![0.0; a_i];
                    v[a] = 1.0;
                    sp.push(v);
                }
                if sp.len() != game.num_states() {
                    return Err(Error::DimensionMismatch("pure policy state count".into()));
                }
                hp.push(sp);
            }
            probs.push(hp);
        }
        Ok(MarkovProductPolicy { probs })
    }

    /// Constant pure policy: every player plays the same fixed action index at
    /// every (h, s).
    pub fn constant_pure(game: &MarkovGame, action: usize) -> Result<Self> {
        let table: Vec<Vec<Vec<usize>>> = (0..game.horizon())
            .map(|_| (0..game.num_players()).map(|_| vec![action; game.num_states()]).collect())
            .collect();
        MarkovProductPolicy::pure(game, &table)
    }

    pub fn action_probs(&self, h: usize, player: usize, s: usize) -> &[f64] {
        &self.probs[h][player][s]
    }

    pub fn set_action_probs(&mut self, h: usize, player: usize, s: usize, v: Vec<f64>) {
        self.probs[h][player][s] = v;
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    pub fn is_pure(&self) -> bool {
        self.probs.iter().flatten().flatten().all(|v| v.iter().any(|&p| p == 1.0))
    }

    /// Probability the product policy plays the encoded joint action.
    pub fn joint_prob(&self, space: &JointActionSpace, h: usize, s: usize, joint: usize) -> f64 {
        let mut p = 1.0;
        let mut rest = joint;
        for (i, &a) in space.counts().iter().enumerate() {
            p *= self.probs[h][i][s][rest % a];
            rest /= a;
        }
        p
    }

    pub fn matches(&self, game: &MarkovGame) -> Result<()> {
        if self.probs.len() != game.horizon() {
            return Err(Error::DimensionMismatch("policy horizon".into()));
        }
        for per_h in &self.probs {
            if per_h.len() != game.num_players() {
                return Err(Error::DimensionMismatch("policy player count".into()));
            }
            for (i, per_s) in per_h.iter().enumerate() {
                if per_s.len() != game.num_states()
                    || per_s.iter().any(|v| v.len() != game.action_counts()[i])
                {
                    return Err(Error::DimensionMismatch("policy state/action dims".into()));
                }
            }
        }
        Ok(())
    }

    pub fn sample_action<R: Rng>(&self, h: usize, player: usize, s: usize, rng: &mut R) -> usize {
        sample_index(&self.probs[h][player][s], rng)
    }
}

/// Draw an index from an explicit probability vector.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One step of a realized episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: usize,
    pub joint_action: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<StepRecord>,
}

impl EpisodeTrace {
    pub fn total_rewards(&self, num_players: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_players];
        for step in &self.steps {
            for (o, r) in out.iter_mut().zip(&step.rewards) {
                *o += r;
            }
        }
        out
    }
}

/// Roll out one episode, querying `actor` for the joint action at each (h, s).
pub fn sample_episode<R, F>(game: &MarkovGame, mut actor: F, rng: &mut R) -> EpisodeTrace
where
    R: Rng,
    F: FnMut(usize, usize, &mut R) -> Vec<usize>,
{
    let mut s = game.initial_state();
    let mut steps = Vec::with_capacity(game.horizon());
    for h in 0..game.horizon() {
        let action = actor(h, s, rng);
        let joint = game.joint_actions().encode(&action);
        let rewards: Vec<f64> = (0..game.num_players())
            .map(|i| game.reward(h, s, joint, i).realize(rng))
            .collect();
        let next = sample_index(game.transition(h, s, joint), rng);
        steps.push(StepRecord { state: s, joint_action: action, rewards, next_state: next });
        s = next;
    }
    EpisodeTrace { steps }
}

/// Roll out one episode under a Markov product policy.
pub fn sample_episode_under_policy<R: Rng>(
    game: &MarkovGame,
    policy: &MarkovProductPolicy,
    rng: &mut R,
) -> EpisodeTrace {
    sample_episode(
        game,
        |h, s, rng| (0..game.num_players()).map(|i| policy.sample_action(h, i, s, rng)).collect(),
        rng,
    )
}

/// Full per-state value tables V[h][s][player] for a product policy, with
/// V[H] = 0. Uses reward means for Bernoulli cells.
pub fn exact_state_values(game: &MarkovGame, policy: &MarkovProductPolicy) -> Result<Vec<Vec<Vec<f64>>>> {
    policy.matches(game)?;
    let (hn, sn, m) = (game.horizon(), game.num_states(), game.num_players());
    let mut values = vec![vec![vec![0.0; m]; sn]; hn + 1];
    for h in (0..hn).rev() {
        for s in 0..sn {
            for joint in 0..game.joint_actions().len() {
                let p = policy.joint_prob(game.joint_actions(), h, s, joint);
                if p == 0.0 {
                    continue;
                }
                let trans = game.transition(h, s, joint);
                for i in 0..m {
                    let mut q = game.reward_mean(h, s, joint, i);
                    for (s2, &tp) in trans.iter().enumerate() {
                        if tp > 0.0 {
                            q += tp * values[h + 1][s2][i];
                        }
                    }
                    values[h][s][i] += p * q;
                }
            }
        }
    }
    Ok(values)
}

/// Per-player value of the product policy at the initial state.
pub fn exact_value(game: &MarkovGame, policy: &MarkovProductPolicy) -> Result<Vec<f64>> {
    Ok(exact_state_values(game, policy)?[0][game.initial_state()].clone())
}

/// Deterministic single-player policy: [h][s] -> own action.
pub type DeterministicPolicy = Vec<Vec<usize>>;

/// Best response of `player` against the other players' fixed marginals.
///
/// Backward DP over (h, s); argmax ties break to the lowest action index.
pub fn best_response_value(
    game: &MarkovGame,
    policy: &MarkovProductPolicy,
    player: usize,
) -> Result<(f64, DeterministicPolicy)> {
    policy.matches(game)?;
    let (hn, sn) = (game.horizon(), game.num_states());
    let a_i = game.action_counts()[player];
    let space = game.joint_actions();
    let mut next = vec![0.0; sn];
    let mut br: DeterministicPolicy = vec![vec![0; sn]; hn];
    for h in (0..hn).rev() {
        let mut cur = vec![0.0; sn];
        for s in 0..sn {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..a_i {
                let mut q = 0.0;
                for joint in 0..space.len() {
                    if space.component(joint, player) != a {
                        continue;
                    }
                    // probability of the opponents' part of the joint action
                    let mut p = 1.0;
                    let mut rest = joint;
                    for (j, &aj) in space.counts().iter().enumerate() {
                        let act = rest % aj;
                        rest /= aj;
                        if j != player {
                            p *= policy.action_probs(h, j, s)[act];
                        }
                    }
                    if p == 0.0 {
                        continue;
                    }
                    let mut v = game.reward_mean(h, s, joint, player);
                    for (s2, &tp) in game.transition(h, s, joint).iter().enumerate() {
                        if tp > 0.0 {
                            v += tp * next[s2];
                        }
                    }
                    q += p * v;
                }
                if q > best {
                    best = q;
                    best_a = a;
                }
            }
            cur[s] = best;
            br[h][s] = best_a;
        }
        next = cur;
    }
    Ok((next[game.initial_state()], br))
}

/// Product policy equal to `policy` with `player`'s part replaced by a
/// deterministic policy.
pub fn with_player_policy(
    game: &MarkovGame,
    policy: &MarkovProductPolicy,
    player: usize,
    det: &DeterministicPolicy,
) -> Result<MarkovProductPolicy> {
    let mut out = policy.clone();
    let a_i = game.action_counts()[player];
    for h in 0..game.horizon() {
        for s in 0..game.num_states() {
            let mut v = vec![0.0; a_i];
            v[det[h][s]] = 1.0;
            out.set_action_probs(h, player, s, v);
        }
    }
    Ok(out)
}

/// NE-gap: max over players of best-response value minus achieved value at s1.
pub fn ne_gap(game: &MarkovGame, policy: &MarkovProductPolicy) -> Result<f64> {
    let base = exact_value(game, policy)?;
    let mut gap: f64 = 0.0;
    for i in 0..game.num_players() {
        let (br, _) = best_response_value(game, policy, i)?;
        gap = gap.max(br - base[i]);
    }
    Ok(gap)
}

/// On-disk form of a game: nested arrays indexed [h][s][joint] with the joint
/// index using player 0 as the least significant digit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameJson {
    pub m: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub action_counts: Vec<usize>,
    #[serde(rename = "P")]
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "R")]
    pub rewards: Vec<Vec<Vec<Vec<RewardSpec>>>>,
    pub s1: usize,
}

impl From<&MarkovGame> for GameJson {
    fn from(g: &MarkovGame) -> Self {
        let joints = g.joint_actions().len();
        let transitions = (0..g.horizon)
            .map(|h| {
                (0..g.num_states)
                    .map(|s| (0..joints).map(|j| g.transition(h, s, j).to_vec()).collect())
                    .collect()
            })
            .collect();
        let rewards = (0..g.horizon)
            .map(|h| {
                (0..g.num_states)
                    .map(|s| {
                        (0..joints)
                            .map(|j| (0..g.num_players).map(|i| g.reward(h, s, j, i)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        GameJson {
            m: g.num_players,
            horizon: g.horizon,
            num_states: g.num_states,
            action_counts: g.action_counts().to_vec(),
            transitions,
            rewards,
            s1: g.initial_state,
        }
    }
}

impl TryFrom<GameJson> for MarkovGame {
    type Error = Error;

    fn try_from(j: GameJson) -> Result<MarkovGame> {
        let flat_t: Vec<f64> = j
            .transitions
            .into_iter()
            .flatten()
            .flatten()
            .flatten()
            .collect();
        let flat_r: Vec<RewardSpec> = j.rewards.into_iter().flatten().flatten().flatten().collect();
        MarkovGame::new(j.m, j.horizon, j.num_states, &j.action_counts, flat_t, flat_r, j.s1)
    }
}

impl MarkovGame {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&GameJson::from(self)).expect("game serialization")
    }

    pub fn from_json_str(s: &str) -> Result<MarkovGame> {
        let j: GameJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidGame(format!("json: {e}")))?;
        MarkovGame::try_from(j)
    }
}

/// Random dense game with deterministic rewards, for tests and benchmarks.
pub fn random_game<R: Rng>(
    num_players: usize,
    horizon: usize,
    num_states: usize,
    action_counts: &[usize],
    rng: &mut R,
) -> MarkovGame {
    random_game_with(num_players, horizon, num_states, action_counts, false, rng)
}

/// Random cooperative game: identical deterministic rewards for all players.
pub fn random_cooperative_game<R: Rng>(
    num_players: usize,
    horizon: usize,
    num_states: usize,
    action_counts: &[usize],
    rng: &mut R,
) -> MarkovGame {
    random_game_with(num_players, horizon, num_states, action_counts, true, rng)
}

fn random_game_with<R: Rng>(
    num_players: usize,
    horizon: usize,
    num_states: usize,
    action_counts: &[usize],
    cooperative: bool,
    rng: &mut R,
) -> MarkovGame {
    let space = JointActionSpace::new(action_counts).expect("valid action counts");
    let cells = horizon * num_states * space.len();
    let mut transitions = Vec::with_capacity(cells * num_states);
    for _ in 0..cells {
        let mut row: Vec<f64> = (0..num_states).map(|_| -(rng.gen::<f64>()).ln()).collect();
        let sum: f64 = row.iter().sum();
        for p in &mut row {
            *p /= sum;
        }
        transitions.extend(row);
    }
    let mut rewards = Vec::with_capacity(cells * num_players);
    for _ in 0..cells {
        let shared: f64 = rng.gen();
        for _ in 0..num_players {
            let value = if cooperative { shared } else { rng.gen() };
            rewards.push(RewardSpec::Deterministic { value });
        }
    }
    MarkovGame::new(num_players, horizon, num_states, action_counts, transitions, rewards, 0)
        .expect("random game construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamSeed;

    fn one_step_game(m: usize, actions: &[usize], reward_fn: impl Fn(usize, usize) -> f64) -> MarkovGame {
        let space = JointActionSpace::new(actions).unwrap();
        let transitions = vec![1.0; space.len()];
        let mut rewards = Vec::with_capacity(space.len() * m);
        for joint in 0..space.len() {
            for i in 0..m {
                rewards.push(RewardSpec::Deterministic { value: reward_fn(joint, i) });
            }
        }
        MarkovGame::new(m, 1, 1, actions, transitions, rewards, 0).unwrap()
    }

    fn coordination_game() -> MarkovGame {
        // r_i = 1 if both players play the same action
        let space = JointActionSpace::new(&[2, 2]).unwrap();
        one_step_game(2, &[2, 2], move |joint, _| {
            let a = space.decode(joint);
            if a[0] == a[1] {
                1.0
            } else {
                0.0
            }
        })
    }

    #[test]
    fn joint_action_roundtrip() {
        let space = JointActionSpace::new(&[2, 3, 2]).unwrap();
        assert_eq!(space.len(), 12);
        for idx in 0..space.len() {
            let a = space.decode(idx);
            assert_eq!(space.encode(&a), idx);
            for (i, &ai) in a.iter().enumerate() {
                assert_eq!(space.component(idx, i), ai);
            }
        }
        // player 0 is least significant
        assert_eq!(space.decode(1), vec![1, 0, 0]);
        assert_eq!(space.with_component(0, 1, 2), space.encode(&[0, 2, 0]));
    }

    #[test]
    fn deterministic_single_step_reward() {
        let g = one_step_game(2, &[2, 2], |_, _| 0.7);
        let mut rng = StreamSeed::new(1).rng();
        let trace = sample_episode(&g, |_, _, _| vec![1, 1], &mut rng);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].rewards, vec![0.7, 0.7]);
    }

    #[test]
    fn seeded_episode_is_deterministic() {
        let mut rng = StreamSeed::new(3).rng();
        let g = random_game(2, 3, 2, &[2, 2], &mut rng);
        let pol = MarkovProductPolicy::uniform(&g);
        let t1 = sample_episode_under_policy(&g, &pol, &mut StreamSeed::new(9).rng());
        let t2 = sample_episode_under_policy(&g, &pol, &mut StreamSeed::new(9).rng());
        assert_eq!(t1, t2);
    }

    #[test]
    fn constant_reward_value() {
        let g = one_step_game(2, &[2, 2], |_, i| if i == 0 { 0.5 } else { 0.25 });
        let v = exact_value(&g, &MarkovProductPolicy::uniform(&g)).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-12);
        assert!((v[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn deterministic_chain_value() {
        // H=2, S=2: action (1,1) moves to state 1, which pays 1 at step 2.
        let actions = [2, 2];
        let space = JointActionSpace::new(&actions).unwrap();
        let star = space.encode(&[1, 1]);
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for h in 0..2 {
            for s in 0..2 {
                for joint in 0..space.len() {
                    let to_good = h == 0 && s == 0 && joint == star;
                    let stay = if s == 1 || to_good { 1 } else { 0 };
                    let mut row = vec![0.0, 0.0];
                    row[stay] = 1.0;
                    transitions.extend(row);
                    let r = if h == 1 && s == 1 { 1.0 } else { 0.0 };
                    rewards.extend([RewardSpec::Deterministic { value: r }; 2]);
                }
            }
        }
        let g = MarkovGame::new(2, 2, 2, &actions, transitions, rewards, 0).unwrap();
        let pol = MarkovProductPolicy::constant_pure(&g, 1).unwrap();
        let v = exact_value(&g, &pol).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12);
        // not playing the chain action yields 0
        let zero = MarkovProductPolicy::constant_pure(&g, 0).unwrap();
        assert!(exact_value(&g, &zero).unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn exact_value_matches_monte_carlo() {
        let mut rng = StreamSeed::new(11).rng();
        let g = random_game(2, 3, 2, &[2, 2], &mut rng);
        let pol = MarkovProductPolicy::uniform(&g);
        let exact = exact_value(&g, &pol).unwrap();
        let n = 1_000_000usize;
        let mut sum = vec![0.0; 2];
        let mut sumsq = vec![0.0; 2];
        let mut mc_rng = StreamSeed::new(12).rng();
        for _ in 0..n {
            let ret = sample_episode_under_policy(&g, &pol, &mut mc_rng).total_rewards(2);
            for i in 0..2 {
                sum[i] += ret[i];
                sumsq[i] += ret[i] * ret[i];
            }
        }
        for i in 0..2 {
            let mean = sum[i] / n as f64;
            let var = (sumsq[i] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - exact[i]).abs() <= 3.0 * se + 1e-9,
                "player {i}: mc {mean} vs exact {}",
                exact[i]
            );
        }
    }

    #[test]
    fn best_response_matching_game() {
        let g = coordination_game();
        // opponent uniform: either action gives 0.5
        let pol = MarkovProductPolicy::uniform(&g);
        let (v, _) = best_response_value(&g, &pol, 0).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        // opponent plays action 1 deterministically: match it for value 1
        let mut pol = MarkovProductPolicy::uniform(&g);
        pol.set_action_probs(0, 1, 0, vec![0.0, 1.0]);
        let (v, br) = best_response_value(&g, &pol, 0).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(br[0][0], 1);
    }

    #[test]
    fn best_response_dominates_random_deviations() {
        let mut rng = StreamSeed::new(21).rng();
        let g = random_game(3, 3, 3, &[2, 2, 2], &mut rng);
        let pol = MarkovProductPolicy::uniform(&g);
        let player = 1;
        let (brv, brpol) = best_response_value(&g, &pol, player).unwrap();
        for _ in 0..50 {
            let det: DeterministicPolicy = (0..g.horizon())
                .map(|_| (0..g.num_states()).map(|_| rng.gen_range(0..2)).collect())
                .collect();
            let dev = with_player_policy(&g, &pol, player, &det).unwrap();
            let v = exact_value(&g, &dev).unwrap()[player];
            assert!(brv >= v - 1e-10);
        }
        let best = with_player_policy(&g, &pol, player, &brpol).unwrap();
        let v = exact_value(&g, &best).unwrap()[player];
        assert!((v - brv).abs() < 1e-10);
    }

    #[test]
    fn ne_gap_cases() {
        let g = coordination_game();
        // both play action 0: pure NE
        let pol = MarkovProductPolicy::constant_pure(&g, 0).unwrap();
        assert!(ne_gap(&g, &pol).unwrap().abs() < 1e-12);
        // mismatched pure actions: each player gains 1 by switching
        let table = vec![vec![vec![0], vec![1]]];
        let pol = MarkovProductPolicy::pure(&g, &table).unwrap();
        assert!((ne_gap(&g, &pol).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_player_best_response_has_zero_gap() {
        let mut rng = StreamSeed::new(31).rng();
        let g = random_game(1, 3, 3, &[3], &mut rng);
        let uniform = MarkovProductPolicy::uniform(&g);
        let (_, br) = best_response_value(&g, &uniform, 0).unwrap();
        let pol = with_player_policy(&g, &uniform, 0, &br).unwrap();
        assert!(ne_gap(&g, &pol).unwrap().abs() < 1e-10);
    }

    #[test]
    fn cooperative_values_are_equal() {
        let mut rng = StreamSeed::new(41).rng();
        let g = random_cooperative_game(3, 2, 2, &[2, 2, 2], &mut rng);
        assert!(g.is_cooperative());
        let v = exact_value(&g, &MarkovProductPolicy::uniform(&g)).unwrap();
        for i in 1..3 {
            assert!((v[i] - v[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn value_is_linear_in_reward_means() {
        let mut rng = StreamSeed::new(51).rng();
        let base = random_game(2, 2, 2, &[2, 2], &mut rng);
        // halve all means so doubling stays in [0,1]
        let mut halved_rewards = Vec::new();
        let mut doubled_rewards = Vec::new();
        for h in 0..base.horizon() {
            for s in 0..base.num_states() {
                for joint in 0..base.joint_actions().len() {
                    for i in 0..base.num_players() {
                        let v = base.reward_mean(h, s, joint, i) / 2.0;
                        halved_rewards.push(RewardSpec::Deterministic { value: v });
                        doubled_rewards.push(RewardSpec::Deterministic { value: 2.0 * v });
                    }
                }
            }
        }
        let trans: Vec<f64> = (0..base.horizon() * base.num_states() * base.joint_actions().len())
            .flat_map(|c| {
                let h = c / (base.num_states() * base.joint_actions().len());
                let rest = c % (base.num_states() * base.joint_actions().len());
                base.transition(h, rest / base.joint_actions().len(), rest % base.joint_actions().len())
                    .to_vec()
            })
            .collect();
        let g1 = MarkovGame::new(2, 2, 2, &[2, 2], trans.clone(), halved_rewards, 0).unwrap();
        let g2 = MarkovGame::new(2, 2, 2, &[2, 2], trans, doubled_rewards, 0).unwrap();
        let pol = MarkovProductPolicy::uniform(&g1);
        let v1 = exact_value(&g1, &pol).unwrap();
        let v2 = exact_value(&g2, &pol).unwrap();
        for i in 0..2 {
            assert!((v2[i] - 2.0 * v1[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn json_roundtrip_preserves_values() {
        let mut rng = StreamSeed::new(61).rng();
        let g = random_game(2, 2, 3, &[2, 3], &mut rng);
        let s = g.to_json_string();
        let g2 = MarkovGame::from_json_str(&s).unwrap();
        let pol = MarkovProductPolicy::uniform(&g);
        assert_eq!(exact_value(&g, &pol).unwrap(), exact_value(&g2, &pol).unwrap());
        assert_eq!(g.to_json_string(), g2.to_json_string());
    }

    #[test]
    fn invalid_transition_rejected() {
        let err = MarkovGame::new(
            1,
            1,
            1,
            &[1],
            vec![0.9],
            vec![RewardSpec::Deterministic { value: 0.0 }],
            0,
        );
        assert!(err.is_err());
    }
}
