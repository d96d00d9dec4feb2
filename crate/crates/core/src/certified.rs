//! Certified output policy built from a learning run, with exact evaluation.
//!
//! The policy replays the run's archive: pick a random episode, then at every
//! step resample one of the past visits of the current (step, state) pair with
//! the stepsize weights and play the distributions that were in force at that
//! visit. States with no recorded visit fall back to uniform play for the rest
//! of the episode.
//!
//! Evaluation exploits that the policy's continuation depends on the latent
//! episode index only through the visit count at the current pair, so a
//! backward pass over (step, state, visit count) is exact and linear in the
//! total number of recorded visits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{sample_index, MarkovGame};
use crate::learners::RunHistory;
use crate::rng::StreamSeed;
use crate::schedule::{relative_weight_cap, RelativeWeights};

pub const MAX_CERTIFIED_EPISODES: usize = 100_000;

/// How the audited deviating player exploits the policy.
///
/// Both modes let the deviator observe the latent visit index, which only
/// overstates what a real deviation (seeing nothing but the play) can earn,
/// so the reported gaps are conservative upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationMode {
    /// free best response at every step
    BestResponse,
    /// swap the recommended action through the pointwise best remap
    BestModification,
}

fn check_history(game: &MarkovGame, history: &RunHistory) -> Result<()> {
    if history.horizon != game.horizon()
        || history.num_states != game.num_states()
        || history.action_counts != game.action_counts()
        || history.initial_state != game.initial_state()
    {
        return Err(Error::DimensionMismatch("history does not match the game".into()));
    }
    if history.episodes == 0 {
        return Err(Error::MissingData("history holds no episodes".into()));
    }
    if history.episodes > MAX_CERTIFIED_EPISODES {
        return Err(Error::CapExceeded(format!(
            "exact certified evaluation capped at {MAX_CERTIFIED_EPISODES} episodes"
        )));
    }
    Ok(())
}

/// Visits of (h, s) up to and including episode k.
fn visits_through(history: &RunHistory, h: usize, s: usize, k: usize) -> usize {
    history.visits[h][s].partition_point(|v| v.episode <= k)
}

/// Executes the certified policy one episode at a time.
pub struct CertifiedPolicySampler<'a> {
    history: &'a RunHistory,
    rng: rand_chacha::ChaCha12Rng,
    episode: usize,
    step: usize,
    uniform_rest: bool,
    /// per (h, s): cumulative relative visit weights; the stepsize weights
    /// over the first t visits are proportional to the increments, for
    /// every t at once, so one prefix array serves all visit counts
    cum_weights: Vec<Vec<Vec<f64>>>,
}

impl<'a> CertifiedPolicySampler<'a> {
    pub fn new(history: &'a RunHistory, seed: StreamSeed) -> Result<Self> {
        if history.episodes == 0 {
            return Err(Error::MissingData("history holds no episodes".into()));
        }
        let cap = relative_weight_cap(history.horizon, history.episodes);
        let cum_weights = history
            .visits
            .iter()
            .map(|per_s| {
                per_s
                    .iter()
                    .map(|recs| {
                        let mut rel = RelativeWeights::new(history.horizon);
                        let mut cum = Vec::with_capacity(recs.len());
                        let mut total = 0.0;
                        for _ in recs {
                            rel.advance();
                            total += rel.current(cap);
                            cum.push(total);
                        }
                        cum
                    })
                    .collect()
            })
            .collect();
        let mut sampler = CertifiedPolicySampler {
            history,
            rng: seed.rng(),
            episode: 0,
            step: 0,
            uniform_rest: false,
            cum_weights,
        };
        sampler.begin_episode();
        Ok(sampler)
    }

    /// Draw a fresh latent episode index and reset the step cursor.
    pub fn begin_episode(&mut self) {
        self.episode = rand::Rng::gen_range(&mut self.rng, 0..self.history.episodes);
        self.step = 0;
        self.uniform_rest = false;
    }

    pub fn latent_episode(&self) -> usize {
        self.episode
    }

    /// Produce the joint action for the current step in state `s`.
    pub fn act(&mut self, s: usize) -> Result<Vec<usize>> {
        if self.step >= self.history.horizon {
            return Err(Error::InvalidParameter("episode already finished".into()));
        }
        let h = self.step;
        self.step += 1;
        let t = visits_through(self.history, h, s, self.episode);
        if self.uniform_rest || t == 0 {
            self.uniform_rest = true;
            return Ok(self
                .history
                .action_counts
                .iter()
                .map(|&a| rand::Rng::gen_range(&mut self.rng, 0..a))
                .collect());
        }
        let cum = &self.cum_weights[h][s];
        let r = rand::Rng::gen_range(&mut self.rng, 0.0..cum[t - 1]);
        let l = (cum[..t].partition_point(|&c| c <= r) + 1).min(t);
        let rec = &self.history.visits[h][s][l - 1];
        self.episode = rec.episode;
        Ok(rec.dists.iter().map(|d| sample_index(d, &mut self.rng)).collect())
    }
}

/// Exact per-player value of the certified policy at the initial state.
pub fn certified_exact_value(game: &MarkovGame, history: &RunHistory) -> Result<Vec<f64>> {
    check_history(game, history)?;
    let (hn, sn, m) = (game.horizon(), game.num_states(), game.num_players());
    // values under uniform play for the rest of the episode
    let mut uniform = vec![vec![vec![0.0; m]; sn]; hn + 1];
    for h in (0..hn).rev() {
        for s in 0..sn {
            let dists: Vec<Vec<f64>> =
                game.action_counts().iter().map(|&a| vec![1.0 / a as f64; a]).collect();
            uniform[h][s] = value_target(game, h, s, &dists, &uniform[h + 1]);
        }
    }
    // table[s][t]: per-player continuation at (h, s) with visit context t
    let mut next_table: Vec<Vec<Vec<f64>>> = vec![vec![vec![0.0; m]]; sn];
    for h in (0..hn).rev() {
        let mut table = Vec::with_capacity(sn);
        for s in 0..sn {
            let recs = &history.visits[h][s];
            let mut rows = Vec::with_capacity(recs.len() + 1);
            rows.push(uniform[h][s].clone());
            for (idx, rec) in recs.iter().enumerate() {
                let t = idx + 1;
                let cont: Vec<Vec<f64>> = if h + 1 == hn {
                    vec![vec![0.0; m]; sn]
                } else {
                    (0..sn)
                        .map(|s2| {
                            let t2 = visits_through(history, h + 1, s2, rec.episode);
                            next_table[s2][t2].clone()
                        })
                        .collect()
                };
                let target = value_target(game, h, s, &rec.dists, &cont);
                let alpha = crate::schedule::alpha_step(hn, t);
                let prev = &rows[t - 1];
                rows.push(
                    target
                        .iter()
                        .zip(prev)
                        .map(|(tv, pv)| (1.0 - alpha) * pv + alpha * tv)
                        .collect(),
                );
            }
            table.push(rows);
        }
        next_table = table;
    }
    let s1 = game.initial_state();
    let mut out = vec![0.0; m];
    for k in 0..history.episodes {
        let t = visits_through(history, 0, s1, k);
        for (o, v) in out.iter_mut().zip(&next_table[s1][t]) {
            *o += v / history.episodes as f64;
        }
    }
    Ok(out)
}

/// Value for `player` of the strongest deviation of the given mode against
/// the certified policy, with the deviator observing the latent episode
/// index. Upper-bounds the value of any deviation that only observes play.
pub fn certified_omniscient_deviation(
    game: &MarkovGame,
    history: &RunHistory,
    player: usize,
    mode: DeviationMode,
) -> Result<f64> {
    check_history(game, history)?;
    if player >= game.num_players() {
        return Err(Error::InvalidParameter(format!("no player {player}")));
    }
    let (hn, sn) = (game.horizon(), game.num_states());
    // best response against uniform play for the rest of the episode
    let mut uniform = vec![vec![0.0; sn]; hn + 1];
    for h in (0..hn).rev() {
        for s in 0..sn {
            let dists: Vec<Vec<f64>> =
                game.action_counts().iter().map(|&a| vec![1.0 / a as f64; a]).collect();
            uniform[h][s] =
                deviation_target(game, h, s, &dists, player, DeviationMode::BestResponse, &uniform[h + 1]);
        }
    }
    let mut next_table: Vec<Vec<f64>> = vec![vec![0.0]; sn];
    for h in (0..hn).rev() {
        let mut table = Vec::with_capacity(sn);
        for s in 0..sn {
            let recs = &history.visits[h][s];
            let mut rows = Vec::with_capacity(recs.len() + 1);
            rows.push(uniform[h][s]);
            for (idx, rec) in recs.iter().enumerate() {
                let t = idx + 1;
                let cont: Vec<f64> = if h + 1 == hn {
                    vec![0.0; sn]
                } else {
                    (0..sn)
                        .map(|s2| next_table[s2][visits_through(history, h + 1, s2, rec.episode)])
                        .collect()
                };
                let target = deviation_target(game, h, s, &rec.dists, player, mode, &cont);
                let alpha = crate::schedule::alpha_step(hn, t);
                rows.push((1.0 - alpha) * rows[t - 1] + alpha * target);
            }
            table.push(rows);
        }
        next_table = table;
    }
    let s1 = game.initial_state();
    let mut out = 0.0;
    for k in 0..history.episodes {
        out += next_table[s1][visits_through(history, 0, s1, k)] / history.episodes as f64;
    }
    Ok(out)
}

/// Per-player mean width of the learner's value brackets at the initial
/// state; an a-priori bound on the certified policy's equilibrium gap.
pub fn gap_bound_from_confidence(history: &RunHistory) -> Result<Vec<f64>> {
    if history.value_snapshots.len() != history.episodes || history.episodes == 0 {
        return Err(Error::MissingData("history is missing value snapshots".into()));
    }
    Ok(history.mean_confidence_gap())
}

/// Monte Carlo estimate of the certified policy's per-player value; returns
/// (means, standard errors).
pub fn certified_monte_carlo_value(
    game: &MarkovGame,
    history: &RunHistory,
    episodes: usize,
    seed: StreamSeed,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_history(game, history)?;
    if episodes == 0 {
        return Err(Error::InvalidParameter("need at least one rollout".into()));
    }
    let m = game.num_players();
    let mut sampler = CertifiedPolicySampler::new(history, seed.labeled("policy"))?;
    let mut env = seed.labeled("env").rng();
    let mut sum = vec![0.0; m];
    let mut sumsq = vec![0.0; m];
    for _ in 0..episodes {
        sampler.begin_episode();
        let mut s = game.initial_state();
        let mut total = vec![0.0; m];
        for h in 0..game.horizon() {
            let joint = sampler.act(s)?;
            let idx = game.joint_actions().encode(&joint);
            for (i, tot) in total.iter_mut().enumerate() {
                *tot += game.reward(h, s, idx, i).realize(&mut env);
            }
            s = sample_index(game.transition(h, s, idx), &mut env);
        }
        for i in 0..m {
            sum[i] += total[i];
            sumsq[i] += total[i] * total[i];
        }
    }
    let n = episodes as f64;
    let means: Vec<f64> = sum.iter().map(|x| x / n).collect();
    let ses = sumsq
        .iter()
        .zip(&means)
        .map(|(sq, mean)| ((sq / n - mean * mean).max(0.0) / n).sqrt())
        .collect();
    Ok((means, ses))
}

/// Per-player expected one-step payoff plus continuation under a product of
/// action distributions; `cont[s'][i]` is the continuation value.
fn value_target(
    game: &MarkovGame,
    h: usize,
    s: usize,
    dists: &[Vec<f64>],
    cont: &[Vec<f64>],
) -> Vec<f64> {
    let space = game.joint_actions();
    let m = game.num_players();
    let mut out = vec![0.0; m];
    for joint in 0..space.len() {
        let mut p = 1.0;
        for (i, d) in dists.iter().enumerate() {
            p *= d[space.component(joint, i)];
        }
        if p == 0.0 {
            continue;
        }
        let trans = game.transition(h, s, joint);
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = game.reward_mean(h, s, joint, i);
            for (s2, &tp) in trans.iter().enumerate() {
                if tp > 0.0 {
                    v += tp * cont[s2][i];
                }
            }
            *o += p * v;
        }
    }
    out
}

/// Deviating player's best attainable one-step payoff plus continuation when
/// the opponents draw from `dists`; `cont[s']` is the deviator's continuation.
fn deviation_target(
    game: &MarkovGame,
    h: usize,
    s: usize,
    dists: &[Vec<f64>],
    player: usize,
    mode: DeviationMode,
    cont: &[f64],
) -> f64 {
    let space = game.joint_actions();
    let a_i = game.action_counts()[player];
    let mut per_action = vec![0.0; a_i];
    for joint in 0..space.len() {
        let mut p = 1.0;
        for (j, d) in dists.iter().enumerate() {
            if j != player {
                p *= d[space.component(joint, j)];
            }
        }
        if p == 0.0 {
            continue;
        }
        let mut v = game.reward_mean(h, s, joint, player);
        for (s2, &tp) in game.transition(h, s, joint).iter().enumerate() {
            if tp > 0.0 {
                v += tp * cont[s2];
            }
        }
        per_action[space.component(joint, player)] += p * v;
    }
    let best = per_action.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match mode {
        DeviationMode::BestResponse => best,
        // the remap target is recommendation-independent here, so this sums
        // to the same number; kept in recommendation-weighted form to mirror
        // its definition
        DeviationMode::BestModification => dists[player].iter().map(|mu| mu * best).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{
        best_response_value, exact_value, random_game, DeterministicPolicy, MarkovProductPolicy,
        RewardSpec,
    };
    use crate::learners::{cce_v_learning, LearnerConfig, RunHistory, VisitRecord, RUN_HISTORY_VERSION};
    use crate::schedule::alpha_weights;

    /// Deterministic-transition game and a single-episode archive whose
    /// stored distributions are point masses along the realized path.
    fn deterministic_fixture() -> (MarkovGame, RunHistory, Vec<Vec<Vec<usize>>>) {
        let hn = 2;
        let sn = 2;
        let counts = vec![2usize, 2];
        let space = crate::game::JointActionSpace::new(&counts).unwrap();
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for h in 0..hn {
            for s in 0..sn {
                for joint in 0..space.len() {
                    // both-agree actions move to state 1, otherwise state 0
                    let acts = space.decode(joint);
                    let s2 = usize::from(acts[0] == acts[1]);
                    let mut row = vec![0.0; sn];
                    row[s2] = 1.0;
                    transitions.extend(row);
                    for i in 0..2 {
                        rewards.push(RewardSpec::Deterministic {
                            value: ((h + s + joint + i) % 3) as f64 / 3.0,
                        });
                    }
                }
            }
        }
        let game = MarkovGame::new(2, hn, sn, &counts, transitions, rewards, 0).unwrap();
        // path: play (1, 0) at (0, 0) -> state 0, then (0, 0) at (1, 0)
        let plan = vec![vec![1usize, 0], vec![0, 0]];
        let mut visits = vec![vec![Vec::new(); sn]; hn];
        let mut s = 0usize;
        for (h, acts) in plan.iter().enumerate() {
            let joint = game.joint_actions().encode(acts);
            let next = sample_index(game.transition(h, s, joint), &mut StreamSeed::new(0).rng());
            visits[h][s].push(VisitRecord {
                episode: 0,
                dists: acts
                    .iter()
                    .map(|&a| {
                        let mut d = vec![0.0; 2];
                        d[a] = 1.0;
                        d
                    })
                    .collect(),
                joint_action: acts.clone(),
                rewards: (0..2).map(|i| game.reward_mean(h, s, joint, i)).collect(),
                next_state: next,
                next_upper: vec![0.0; 2],
                upper_after: vec![0.0; 2],
            });
            s = next;
        }
        let history = RunHistory {
            version: RUN_HISTORY_VERSION,
            horizon: hn,
            num_players: 2,
            num_states: sn,
            action_counts: vec![2, 2],
            initial_state: 0,
            episodes: 1,
            visits,
            value_snapshots: vec![vec![(hn as f64, 0.0); 2]],
            final_policies: vec![vec![vec![vec![0.5, 0.5]; sn]; 2]; hn],
        };
        // product policy playing the plan on the path, arbitrary elsewhere
        let table: Vec<Vec<Vec<usize>>> = (0..hn)
            .map(|h| (0..2).map(|i| vec![plan[h][i]; sn]).collect())
            .collect();
        (game, history, table)
    }

    #[test]
    fn single_episode_point_masses_match_product_policy() {
        let (game, history, table) = deterministic_fixture();
        let policy = MarkovProductPolicy::pure(&game, &table).unwrap();
        let certified = certified_exact_value(&game, &history).unwrap();
        let direct = exact_value(&game, &policy).unwrap();
        for i in 0..2 {
            assert!((certified[i] - direct[i]).abs() < 1e-12);
        }
        for i in 0..2 {
            let (br, _): (f64, DeterministicPolicy) =
                best_response_value(&game, &policy, i).unwrap();
            let omniscient = certified_omniscient_deviation(
                &game,
                &history,
                i,
                DeviationMode::BestResponse,
            )
            .unwrap();
            assert!((br - omniscient).abs() < 1e-12, "player {i}: {br} vs {omniscient}");
        }
    }

    #[test]
    fn sampler_replays_the_single_stored_visit() {
        let (game, history, _) = deterministic_fixture();
        let mut sampler = CertifiedPolicySampler::new(&history, StreamSeed::new(5)).unwrap();
        for _ in 0..20 {
            sampler.begin_episode();
            assert_eq!(sampler.act(0).unwrap(), vec![1, 0]);
            assert_eq!(sampler.act(0).unwrap(), vec![0, 0]);
            assert!(sampler.act(0).is_err());
        }
        let _ = game;
    }

    #[test]
    fn unvisited_state_falls_back_to_uniform_for_the_rest() {
        let (_, history, _) = deterministic_fixture();
        let mut sampler = CertifiedPolicySampler::new(&history, StreamSeed::new(6)).unwrap();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            sampler.begin_episode();
            // state 1 has no recorded visit at step 0
            seen.insert(sampler.act(1).unwrap());
            // and the fallback sticks even though (1, 0) was visited
            seen.insert(sampler.act(0).unwrap());
        }
        assert_eq!(seen.len(), 4, "uniform play should reach every joint action");
    }

    #[test]
    fn one_step_value_unrolls_the_visit_weights() {
        let mut rng = StreamSeed::new(11).rng();
        let game = random_game(2, 1, 1, &[2, 2], &mut rng);
        let cfg = LearnerConfig::new(12);
        let history = cce_v_learning(&game, &cfg, StreamSeed::new(12)).unwrap();
        let certified = certified_exact_value(&game, &history).unwrap();
        let mut expect = vec![0.0; 2];
        for k in 0..cfg.episodes {
            let t = k + 1;
            let w = alpha_weights(1, t);
            for (l, rec) in history.visits[0][0][..t].iter().enumerate() {
                let mean = value_target(&game, 0, 0, &rec.dists, &vec![vec![0.0; 2]; 1]);
                for i in 0..2 {
                    expect[i] += w[l + 1] * mean[i] / cfg.episodes as f64;
                }
            }
        }
        for i in 0..2 {
            assert!((certified[i] - expect[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn monte_carlo_agrees_with_exact_value() {
        let mut rng = StreamSeed::new(21).rng();
        let game = random_game(2, 2, 2, &[2, 2], &mut rng);
        let cfg = LearnerConfig::new(50);
        let history = cce_v_learning(&game, &cfg, StreamSeed::new(22)).unwrap();
        let exact = certified_exact_value(&game, &history).unwrap();
        let (means, ses) =
            certified_monte_carlo_value(&game, &history, 200_000, StreamSeed::new(23)).unwrap();
        for i in 0..2 {
            assert!(
                (means[i] - exact[i]).abs() <= 3.0 * ses[i] + 1e-9,
                "player {i}: mc {} vs exact {} (se {})",
                means[i],
                exact[i],
                ses[i]
            );
        }
    }

    #[test]
    fn deviations_dominate_the_policy_value() {
        for seed in 0..5 {
            let mut rng = StreamSeed::new(31 + seed).rng();
            let game = random_game(2, 2, 2, &[2, 3], &mut rng);
            let cfg = LearnerConfig::new(40);
            let history = cce_v_learning(&game, &cfg, StreamSeed::new(41 + seed)).unwrap();
            let value = certified_exact_value(&game, &history).unwrap();
            for i in 0..2 {
                let br = certified_omniscient_deviation(
                    &game,
                    &history,
                    i,
                    DeviationMode::BestResponse,
                )
                .unwrap();
                let bm = certified_omniscient_deviation(
                    &game,
                    &history,
                    i,
                    DeviationMode::BestModification,
                )
                .unwrap();
                assert!(bm >= value[i] - 1e-12);
                assert!(br >= bm - 1e-12);
            }
        }
    }

    #[test]
    fn omniscient_bound_beats_random_markov_deviations() {
        let mut rng = StreamSeed::new(51).rng();
        let game = random_game(2, 2, 2, &[2, 2], &mut rng);
        let cfg = LearnerConfig::new(30);
        let history = cce_v_learning(&game, &cfg, StreamSeed::new(52)).unwrap();
        let player = 0usize;
        let br =
            certified_omniscient_deviation(&game, &history, player, DeviationMode::BestResponse)
                .unwrap();
        let mut dev_rng = StreamSeed::new(53).rng();
        for trial in 0..50 {
            let dev: DeterministicPolicy = (0..game.horizon())
                .map(|_| {
                    (0..game.num_states())
                        .map(|_| rand::Rng::gen_range(&mut dev_rng, 0..2))
                        .collect()
                })
                .collect();
            let rollouts = 4000usize;
            let mut sampler =
                CertifiedPolicySampler::new(&history, StreamSeed::new(60 + trial)).unwrap();
            let mut env = StreamSeed::new(160 + trial).rng();
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..rollouts {
                sampler.begin_episode();
                let mut s = game.initial_state();
                let mut total = 0.0;
                for h in 0..game.horizon() {
                    let mut joint = sampler.act(s).unwrap();
                    joint[player] = dev[h][s];
                    let idx = game.joint_actions().encode(&joint);
                    total += game.reward(h, s, idx, player).realize(&mut env);
                    s = sample_index(game.transition(h, s, idx), &mut env);
                }
                sum += total;
                sumsq += total * total;
            }
            let mean = sum / rollouts as f64;
            let se = ((sumsq / rollouts as f64 - mean * mean).max(0.0) / rollouts as f64).sqrt();
            assert!(
                mean <= br + 3.0 * se + 1e-9,
                "trial {trial}: deviation earns {mean} past the bound {br}"
            );
        }
    }

    #[test]
    fn confidence_bound_starts_at_horizon_and_stays_nonnegative() {
        let mut rng = StreamSeed::new(61).rng();
        let game = random_game(2, 3, 2, &[2, 2], &mut rng);
        let one = cce_v_learning(&game, &LearnerConfig::new(1), StreamSeed::new(62)).unwrap();
        assert_eq!(gap_bound_from_confidence(&one).unwrap(), vec![3.0, 3.0]);
        // the optimism bonus can push the early widths past H, so only
        // nonnegativity and shrinkage are stable claims
        let short = cce_v_learning(&game, &LearnerConfig::new(50), StreamSeed::new(63)).unwrap();
        let long = cce_v_learning(&game, &LearnerConfig::new(2000), StreamSeed::new(63)).unwrap();
        let short_gap = gap_bound_from_confidence(&short).unwrap();
        let long_gap = gap_bound_from_confidence(&long).unwrap();
        for (lg, sg) in long_gap.iter().zip(&short_gap) {
            assert!(*lg >= 0.0 && lg.is_finite());
            assert!(lg < sg, "expected the averaged width to shrink: {lg} vs {sg}");
        }
    }

    #[test]
    fn oversized_history_is_rejected() {
        let (game, mut history, _) = deterministic_fixture();
        history.episodes = MAX_CERTIFIED_EPISODES + 1;
        assert!(matches!(
            certified_exact_value(&game, &history),
            Err(Error::CapExceeded(_))
        ));
    }
}
