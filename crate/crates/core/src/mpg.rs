//! Coordinate-ascent Nash search for Markov potential and cooperative games.
//!
//! One player at a time is handed the single-agent problem induced by
//! freezing everyone else, solves it with an optimistic/pessimistic value
//! iteration learner, and the switch is accepted only when the Monte Carlo
//! improvement clears half the target gap. On potential games every accepted
//! switch raises the potential, so the loop terminates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    sample_episode_under_policy, sample_index, DeterministicPolicy, MarkovGame,
    MarkovProductPolicy, RewardSpec,
};
use crate::rng::StreamSeed;

/// A single-agent episodic environment that only yields samples.
pub trait SampledMdp {
    fn horizon(&self) -> usize;
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn initial_state(&self) -> usize;
    /// One interaction: realized reward and next state.
    fn step<R: Rng>(&self, h: usize, s: usize, action: usize, rng: &mut R) -> (f64, usize);
}

/// The game as seen by one player when the others play a fixed product
/// policy; opponent actions are drawn fresh at every interaction.
pub struct SamplingMdpView<'a> {
    game: &'a MarkovGame,
    policy: &'a MarkovProductPolicy,
    player: usize,
}

impl<'a> SamplingMdpView<'a> {
    pub fn new(
        game: &'a MarkovGame,
        policy: &'a MarkovProductPolicy,
        player: usize,
    ) -> Result<Self> {
        policy.matches(game)?;
        if player >= game.num_players() {
            return Err(Error::InvalidParameter(format!("no player {player}")));
        }
        Ok(SamplingMdpView { game, policy, player })
    }
}

impl SampledMdp for SamplingMdpView<'_> {
    fn horizon(&self) -> usize {
        self.game.horizon()
    }

    fn num_states(&self) -> usize {
        self.game.num_states()
    }

    fn num_actions(&self) -> usize {
        self.game.action_counts()[self.player]
    }

    fn initial_state(&self) -> usize {
        self.game.initial_state()
    }

    fn step<R: Rng>(&self, h: usize, s: usize, action: usize, rng: &mut R) -> (f64, usize) {
        let joint: Vec<usize> = (0..self.game.num_players())
            .map(|j| {
                if j == self.player {
                    action
                } else {
                    sample_index(self.policy.action_probs(h, j, s), rng)
                }
            })
            .collect();
        let idx = self.game.joint_actions().encode(&joint);
        let r = self.game.reward(h, s, idx, self.player).realize(rng);
        let s2 = sample_index(self.game.transition(h, s, idx), rng);
        (r, s2)
    }
}

/// Analytic counterpart of `SamplingMdpView`: a one-player game whose
/// tensors are the original ones marginalized over the opponents.
pub fn exact_mdp_view(
    game: &MarkovGame,
    policy: &MarkovProductPolicy,
    player: usize,
) -> Result<MarkovGame> {
    policy.matches(game)?;
    if player >= game.num_players() {
        return Err(Error::InvalidParameter(format!("no player {player}")));
    }
    let (hn, sn) = (game.horizon(), game.num_states());
    let a_i = game.action_counts()[player];
    let space = game.joint_actions();
    let mut transitions = Vec::with_capacity(hn * sn * a_i * sn);
    let mut rewards = Vec::with_capacity(hn * sn * a_i);
    for h in 0..hn {
        for s in 0..sn {
            for a in 0..a_i {
                let mut row = vec![0.0; sn];
                let mut mean = 0.0;
                for joint in 0..space.len() {
                    if space.component(joint, player) != a {
                        continue;
                    }
                    let mut p = 1.0;
                    for j in 0..game.num_players() {
                        if j != player {
                            p *= policy.action_probs(h, j, s)[space.component(joint, j)];
                        }
                    }
                    if p == 0.0 {
                        continue;
                    }
                    mean += p * game.reward_mean(h, s, joint, player);
                    for (s2, &tp) in game.transition(h, s, joint).iter().enumerate() {
                        row[s2] += p * tp;
                    }
                }
                transitions.extend(row);
                rewards.push(RewardSpec::Deterministic { value: mean });
            }
        }
    }
    MarkovGame::new(1, hn, sn, &[a_i], transitions, rewards, game.initial_state())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UcbviParams {
    /// bonus and correction scale
    pub c: f64,
    /// log confidence term
    pub iota: f64,
}

impl UcbviParams {
    pub fn new(horizon: usize, states: usize, actions: usize, episodes: usize, p: f64) -> Self {
        UcbviParams {
            c: 0.5,
            iota: ((horizon * states * actions * episodes) as f64 / p).ln(),
        }
    }
}

/// Variance-aware exploration bonus.
pub fn bernstein_bonus(t: usize, sigma_sq: f64, horizon: usize, states: usize, p: &UcbviParams) -> f64 {
    let t = t as f64;
    let h = horizon as f64;
    p.c * ((sigma_sq * p.iota / t).sqrt() + h * h * states as f64 * p.iota / t)
}

#[derive(Debug, Clone)]
pub struct UcbviRun {
    /// greedy policy of the episode with the tightest value bracket
    pub policy: DeterministicPolicy,
    /// episode index the returned policy comes from
    pub best_episode: usize,
    /// per episode: (upper, lower) value estimates at the initial state
    pub snapshots: Vec<(f64, f64)>,
}

/// Optimistic/pessimistic value iteration on a sampled MDP.
///
/// Every episode rebuilds the Q bracket for all visited state-action pairs
/// from the empirical model, rolls out the greedy policy of the upper bound,
/// and finally returns the greedy policy of the episode whose initial-state
/// bracket was tightest.
pub fn ucbvi_uplow<M: SampledMdp, R: Rng>(
    env: &M,
    episodes: usize,
    params: &UcbviParams,
    rng: &mut R,
) -> Result<UcbviRun> {
    if episodes == 0 {
        return Err(Error::InvalidParameter("need at least one episode".into()));
    }
    let (hn, sn, an) = (env.horizon(), env.num_states(), env.num_actions());
    let hf = hn as f64;
    let mut counts = vec![vec![vec![0usize; an]; sn]; hn];
    let mut trans_counts = vec![vec![vec![vec![0usize; sn]; an]; sn]; hn];
    let mut reward_sum = vec![vec![vec![0.0f64; an]; sn]; hn];
    let mut snapshots = Vec::with_capacity(episodes);
    let mut best: Option<(f64, usize, DeterministicPolicy)> = None;
    for k in 0..episodes {
        // full sweep over the empirical model
        let mut upper_next = vec![0.0; sn];
        let mut lower_next = vec![0.0; sn];
        let mut policy: DeterministicPolicy = vec![vec![0; sn]; hn];
        for h in (0..hn).rev() {
            let mut upper_cur = vec![0.0; sn];
            let mut lower_cur = vec![0.0; sn];
            for s in 0..sn {
                let mut best_a = 0;
                let mut best_q = f64::NEG_INFINITY;
                let mut lower_at_best = 0.0;
                for a in 0..an {
                    let t = counts[h][s][a];
                    let (q_up, q_low) = if t == 0 {
                        (hf, 0.0)
                    } else {
                        let tf = t as f64;
                        let r_hat = reward_sum[h][s][a] / tf;
                        let mut p_up = 0.0;
                        let mut p_low = 0.0;
                        let mut mid1 = 0.0;
                        let mut mid2 = 0.0;
                        for (s2, &n2) in trans_counts[h][s][a].iter().enumerate() {
                            if n2 == 0 {
                                continue;
                            }
                            let p = n2 as f64 / tf;
                            p_up += p * upper_next[s2];
                            p_low += p * lower_next[s2];
                            let mid = 0.5 * (upper_next[s2] + lower_next[s2]);
                            mid1 += p * mid;
                            mid2 += p * mid * mid;
                        }
                        let sigma_sq = (mid2 - mid1 * mid1).max(0.0);
                        let beta = bernstein_bonus(t, sigma_sq, hn, sn, params);
                        let gamma = params.c / hf * (p_up - p_low);
                        (
                            (r_hat + p_up + beta + gamma).min(hf),
                            (r_hat + p_low - beta - gamma).max(0.0),
                        )
                    };
                    if q_up > best_q {
                        best_q = q_up;
                        best_a = a;
                        lower_at_best = q_low;
                    }
                }
                policy[h][s] = best_a;
                upper_cur[s] = best_q;
                lower_cur[s] = lower_at_best;
            }
            upper_next = upper_cur;
            lower_next = lower_cur;
        }
        let upper_root = upper_next[env.initial_state()];
        let lower_root = lower_next[env.initial_state()];
        snapshots.push((upper_root, lower_root));
        let width = upper_root - lower_root;
        if best.as_ref().map_or(true, |(w, _, _)| width < *w) {
            best = Some((width, k, policy.clone()));
        }
        // roll out the optimistic greedy policy
        let mut s = env.initial_state();
        for h in 0..hn {
            let a = policy[h][s];
            let (r, s2) = env.step(h, s, a, rng);
            counts[h][s][a] += 1;
            trans_counts[h][s][a][s2] += 1;
            reward_sum[h][s][a] += r;
            s = s2;
        }
    }
    let (_, best_episode, policy) = best.expect("at least one episode");
    Ok(UcbviRun { policy, best_episode, snapshots })
}

/// Monte Carlo estimate of a policy's per-player value; returns (means,
/// standard errors).
pub fn monte_carlo_value<R: Rng>(
    game: &MarkovGame,
    policy: &MarkovProductPolicy,
    episodes: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if episodes == 0 {
        return Err(Error::InvalidParameter("need at least one episode".into()));
    }
    policy.matches(game)?;
    let m = game.num_players();
    let mut sum = vec![0.0; m];
    let mut sumsq = vec![0.0; m];
    for _ in 0..episodes {
        let trace = sample_episode_under_policy(game, policy, rng);
        for (i, r) in trace.total_rewards(m).into_iter().enumerate() {
            sum[i] += r;
            sumsq[i] += r * r;
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

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NashCaConfig {
    /// target equilibrium gap
    pub eps: f64,
    /// failure probability in the log confidence term
    pub p: f64,
    /// bonus scale handed to the inner learner
    pub c: f64,
    /// potential range bound; defaults to m * H when None
    pub phi_max: Option<f64>,
    /// scales the Monte Carlo episode budget N = mc * H^2 * iota / eps^2
    pub mc_multiplier: f64,
    /// scales the learner budget K_i = lm * H^3 * S * A_i * iota / eps^2
    pub learner_multiplier: f64,
    pub iota_override: Option<f64>,
}

impl NashCaConfig {
    pub fn new(eps: f64) -> Self {
        NashCaConfig {
            eps,
            p: 0.05,
            c: 0.5,
            phi_max: None,
            mc_multiplier: 4.0,
            learner_multiplier: 2.0,
            iota_override: None,
        }
    }

    fn iota(&self, game: &MarkovGame) -> f64 {
        self.iota_override.unwrap_or_else(|| {
            let max_a = *game.action_counts().iter().max().expect("players") as f64;
            (game.num_players() as f64 * max_a * (game.horizon() * game.num_states()) as f64
                / (self.p * self.eps))
                .ln()
        })
    }

    pub fn mc_episodes(&self, game: &MarkovGame) -> usize {
        let h = game.horizon() as f64;
        (self.mc_multiplier * h * h * self.iota(game) / (self.eps * self.eps)).ceil() as usize
    }

    pub fn learner_episodes(&self, game: &MarkovGame, player: usize) -> usize {
        let h = game.horizon() as f64;
        let budget = self.learner_multiplier
            * h
            * h
            * h
            * game.num_states() as f64
            * game.action_counts()[player] as f64
            * self.iota(game)
            / (self.eps * self.eps);
        budget.ceil() as usize
    }

    pub fn iteration_cap(&self, game: &MarkovGame) -> usize {
        let phi = self
            .phi_max
            .unwrap_or((game.num_players() * game.horizon()) as f64);
        (4.0 * phi / self.eps).ceil() as usize
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NashCaIteration {
    pub iteration: usize,
    /// player whose improvement was largest
    pub player: usize,
    pub delta: f64,
    /// that player's Monte Carlo value before the switch
    pub value_before: f64,
    /// and after the candidate switch
    pub value_after: f64,
    pub accepted: bool,
    pub episodes_consumed: usize,
}

#[derive(Debug, Clone)]
pub struct NashCaResult {
    pub policy: MarkovProductPolicy,
    pub table: Vec<Vec<Vec<usize>>>,
    /// false when the loop cap fired before the stop rule held
    pub certified: bool,
    pub audit: Vec<NashCaIteration>,
    pub episodes_consumed: usize,
}

/// Coordinate ascent over players: repeatedly let the player with the
/// largest estimated improvement switch to its learned best response, until
/// no player clears eps / 2.
pub fn nash_ca(game: &MarkovGame, cfg: &NashCaConfig, seed: StreamSeed) -> Result<NashCaResult> {
    if cfg.eps <= 0.0 {
        return Err(Error::InvalidParameter("target gap must be positive".into()));
    }
    let m = game.num_players();
    let mut table: Vec<Vec<Vec<usize>>> =
        vec![(0..m).map(|_| vec![0; game.num_states()]).collect(); game.horizon()];
    let mut rng = seed.labeled("nash-ca").rng();
    let cap = cfg.iteration_cap(game);
    let n_mc = cfg.mc_episodes(game);
    let mut audit = Vec::new();
    let mut episodes_consumed = 0usize;
    let mut certified = false;
    for iteration in 0..cap {
        let policy = MarkovProductPolicy::pure(game, &table)?;
        let (base, _) = monte_carlo_value(game, &policy, n_mc, &mut rng)?;
        episodes_consumed += n_mc;
        let mut best: Option<(usize, f64, f64, f64, DeterministicPolicy)> = None;
        for i in 0..m {
            let view = SamplingMdpView::new(game, &policy, i)?;
            let k_i = cfg.learner_episodes(game, i);
            let params = UcbviParams {
                c: cfg.c,
                iota: cfg
                    .iota_override
                    .unwrap_or_else(|| UcbviParams::new(
                        game.horizon(),
                        game.num_states(),
                        game.action_counts()[i],
                        k_i,
                        cfg.p,
                    )
                    .iota),
            };
            let run = ucbvi_uplow(&view, k_i, &params, &mut rng)?;
            episodes_consumed += k_i;
            let candidate = crate::game::with_player_policy(game, &policy, i, &run.policy)?;
            let (vals, _) = monte_carlo_value(game, &candidate, n_mc, &mut rng)?;
            episodes_consumed += n_mc;
            let delta = vals[i] - base[i];
            if best.as_ref().map_or(true, |(_, d, _, _, _)| delta > *d) {
                best = Some((i, delta, base[i], vals[i], run.policy));
            }
        }
        let (player, delta, value_before, value_after, br) = best.expect("at least one player");
        let accepted = delta > cfg.eps / 2.0;
        audit.push(NashCaIteration {
            iteration,
            player,
            delta,
            value_before,
            value_after,
            accepted,
            episodes_consumed,
        });
        if !accepted {
            certified = true;
            break;
        }
        for h in 0..game.horizon() {
            for s in 0..game.num_states() {
                table[h][player][s] = br[h][s];
            }
        }
    }
    let policy = MarkovProductPolicy::pure(game, &table)?;
    Ok(NashCaResult { policy, table, certified, audit, episodes_consumed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{
        exact_value, ne_gap, random_cooperative_game, random_game, JointActionSpace,
    };

    fn uniform_policy(game: &MarkovGame) -> MarkovProductPolicy {
        MarkovProductPolicy::uniform(game)
    }

    #[test]
    fn exact_view_matches_game_value() {
        for seed in 0..20 {
            let mut rng = StreamSeed::new(100 + seed).rng();
            let game = random_game(2, 2, 3, &[2, 3], &mut rng);
            let policy = {
                // random product policy
                let mut p = uniform_policy(&game);
                for h in 0..game.horizon() {
                    for j in 0..2 {
                        for s in 0..game.num_states() {
                            let a = game.action_counts()[j];
                            let mut v: Vec<f64> =
                                (0..a).map(|_| rand::Rng::gen_range(&mut rng, 0.1..1.0)).collect();
                            let sum: f64 = v.iter().sum();
                            v.iter_mut().for_each(|x| *x /= sum);
                            p.set_action_probs(h, j, s, v);
                        }
                    }
                }
                p
            };
            for i in 0..2 {
                let view = exact_mdp_view(&game, &policy, i).unwrap();
                let own = MarkovProductPolicy::new(
                    (0..game.horizon())
                        .map(|h| {
                            vec![(0..game.num_states())
                                .map(|s| policy.action_probs(h, i, s).to_vec())
                                .collect::<Vec<_>>()]
                        })
                        .collect(),
                )
                .unwrap();
                let via_view = exact_value(&view, &own).unwrap()[0];
                let direct = exact_value(&game, &policy).unwrap()[i];
                assert!((via_view - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn uniform_opponent_averages_the_reward() {
        // r = 1 when actions match; against a uniform opponent every own
        // action is worth one half
        let space = JointActionSpace::new(&[2, 2]).unwrap();
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for joint in 0..space.len() {
            let acts = space.decode(joint);
            transitions.extend([1.0]);
            for _ in 0..2 {
                rewards.push(RewardSpec::Deterministic {
                    value: f64::from(u8::from(acts[0] == acts[1])),
                });
            }
        }
        let game = MarkovGame::new(2, 1, 1, &[2, 2], transitions, rewards, 0).unwrap();
        let view = exact_mdp_view(&game, &uniform_policy(&game), 0).unwrap();
        for a in 0..2 {
            assert_eq!(view.reward_mean(0, 0, a, 0), 0.5);
        }
    }

    #[test]
    fn bernstein_bonus_arithmetic() {
        let p = UcbviParams { c: 1.0, iota: 1.0 };
        assert!((bernstein_bonus(4, 1.0, 2, 3, &p) - 3.5).abs() < 1e-12);
        assert!((bernstein_bonus(10, 0.0, 2, 3, &p) - 1.2).abs() < 1e-12);
        let mut last = f64::INFINITY;
        for t in 1..100 {
            let b = bernstein_bonus(t, 0.7, 3, 2, &p);
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn ucbvi_solves_a_deterministic_chain() {
        // two states, action 1 moves toward state 1 where action 1 pays 1
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        let (hn, sn, an) = (3usize, 2usize, 2usize);
        for _h in 0..hn {
            for s in 0..sn {
                for a in 0..an {
                    let s2 = usize::from(a == 1);
                    let mut row = vec![0.0; sn];
                    row[s2] = 1.0;
                    transitions.extend(row);
                    rewards.push(RewardSpec::Deterministic {
                        value: f64::from(u8::from(s == 1 && a == 1)),
                    });
                }
            }
        }
        let game = MarkovGame::new(1, hn, sn, &[an], transitions, rewards, 0).unwrap();
        let policy = uniform_policy(&game);
        let view = SamplingMdpView::new(&game, &policy, 0).unwrap();
        // the worst-case bonus never shrinks enough in 200 episodes on a
        // toy chain; a mild hand-set scale keeps exploration honest
        let params = UcbviParams { c: 0.1, iota: 1.0 };
        let mut rng = StreamSeed::new(5).rng();
        let run = ucbvi_uplow(&view, 200, &params, &mut rng).unwrap();
        for (up, low) in &run.snapshots {
            assert!(up >= low);
        }
        // optimal play reaches state 1 at step 1 and earns on steps 1 and 2
        let pure = MarkovProductPolicy::pure(&game, &run_table(&run.policy)).unwrap();
        let v = exact_value(&game, &pure).unwrap()[0];
        assert!((v - 2.0).abs() < 1e-12, "learned value {v}");
    }

    fn run_table(det: &DeterministicPolicy) -> Vec<Vec<Vec<usize>>> {
        det.iter().map(|per_s| vec![per_s.clone()]).collect()
    }

    #[test]
    fn ucbvi_finds_the_best_bernoulli_arm() {
        let mut hits = 0;
        for seed in 0..10 {
            let means = [0.3, 0.7, 0.5];
            let rewards: Vec<RewardSpec> =
                means.iter().map(|&m| RewardSpec::Bernoulli { mean: m }).collect();
            let game =
                MarkovGame::new(1, 1, 1, &[3], vec![1.0, 1.0, 1.0], rewards, 0).unwrap();
            let policy = uniform_policy(&game);
            let view = SamplingMdpView::new(&game, &policy, 0).unwrap();
            let params = UcbviParams::new(1, 1, 3, 2000, 0.05);
            let mut rng = StreamSeed::new(40 + seed).rng();
            let run = ucbvi_uplow(&view, 2000, &params, &mut rng).unwrap();
            if run.policy[0][0] == 1 {
                hits += 1;
            }
        }
        assert!(hits >= 9, "best arm found on {hits}/10 seeds");
    }

    #[test]
    fn monte_carlo_value_is_calibrated() {
        let game = MarkovGame::new(
            1,
            1,
            1,
            &[1],
            vec![1.0],
            vec![RewardSpec::Bernoulli { mean: 0.5 }],
            0,
        )
        .unwrap();
        let policy = uniform_policy(&game);
        let n = 4000usize;
        let mut hits = 0;
        for seed in 0..10 {
            let mut rng = StreamSeed::new(60 + seed).rng();
            let (means, ses) = monte_carlo_value(&game, &policy, n, &mut rng).unwrap();
            if (means[0] - 0.5).abs() <= 4.0 / (n as f64).sqrt() {
                hits += 1;
            }
            assert!(ses[0] > 0.0 && ses[0] < 0.02);
        }
        assert!(hits >= 9);
        // deterministic game: zero spread
        let det = MarkovGame::new(
            1,
            1,
            1,
            &[1],
            vec![1.0],
            vec![RewardSpec::Deterministic { value: 0.25 }],
            0,
        )
        .unwrap();
        let mut rng = StreamSeed::new(70).rng();
        let (means, ses) = monte_carlo_value(&det, &uniform_policy(&det), 100, &mut rng).unwrap();
        assert_eq!(means[0], 0.25);
        assert_eq!(ses[0], 0.0);
    }

    #[test]
    fn potential_identity_holds_in_cooperative_games() {
        let mut rng = StreamSeed::new(80).rng();
        for _ in 0..100 {
            let game = random_cooperative_game(3, 2, 2, &[2, 2, 2], &mut rng);
            let i = rand::Rng::gen_range(&mut rng, 0..3usize);
            let mut base = uniform_policy(&game);
            for h in 0..game.horizon() {
                for j in 0..3 {
                    for s in 0..game.num_states() {
                        let mut v: Vec<f64> =
                            (0..2).map(|_| rand::Rng::gen_range(&mut rng, 0.05..1.0)).collect();
                        let sum: f64 = v.iter().sum();
                        v.iter_mut().for_each(|x| *x /= sum);
                        base.set_action_probs(h, j, s, v);
                    }
                }
            }
            let det: DeterministicPolicy = (0..game.horizon())
                .map(|_| {
                    (0..game.num_states())
                        .map(|_| rand::Rng::gen_range(&mut rng, 0..2usize))
                        .collect()
                })
                .collect();
            let switched = crate::game::with_player_policy(&game, &base, i, &det).unwrap();
            let v0 = exact_value(&game, &base).unwrap();
            let v1 = exact_value(&game, &switched).unwrap();
            // identical rewards: the game's own value is the potential, so
            // the deviating player's change equals the potential change
            assert!(((v1[i] - v0[i]) - (v1[0] - v0[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn nash_ca_solves_a_coordination_game() {
        let mut hits = 0;
        for seed in 0..10 {
            // payoff 1 at the final step when both actions agree
            let space = JointActionSpace::new(&[2, 2]).unwrap();
            let mut transitions = Vec::new();
            let mut rewards = Vec::new();
            for h in 0..2 {
                for joint in 0..space.len() {
                    let acts = space.decode(joint);
                    transitions.extend([1.0]);
                    let r = f64::from(u8::from(h == 1 && acts[0] == acts[1]));
                    rewards.extend([RewardSpec::Deterministic { value: r }; 2]);
                }
            }
            let game = MarkovGame::new(2, 2, 1, &[2, 2], transitions, rewards, 0).unwrap();
            let mut cfg = NashCaConfig::new(0.2);
            cfg.mc_multiplier = 1.0;
            cfg.learner_multiplier = 0.05;
            let out = nash_ca(&game, &cfg, StreamSeed::new(90 + seed)).unwrap();
            assert!(out.audit.len() <= cfg.iteration_cap(&game));
            assert!(out.policy.is_pure());
            if ne_gap(&game, &out.policy).unwrap() < 1e-12 {
                hits += 1;
            }
        }
        assert!(hits >= 9, "coordination solved on {hits}/10 seeds");
    }

    #[test]
    fn nash_ca_single_player_is_near_optimal() {
        let mut rng = StreamSeed::new(95).rng();
        let game = random_game(1, 2, 2, &[3], &mut rng);
        let mut cfg = NashCaConfig::new(0.2);
        cfg.mc_multiplier = 1.0;
        cfg.learner_multiplier = 0.05;
        let out = nash_ca(&game, &cfg, StreamSeed::new(96)).unwrap();
        let gap = ne_gap(&game, &out.policy).unwrap();
        assert!(gap <= 0.2, "single-player gap {gap}");
    }
}
