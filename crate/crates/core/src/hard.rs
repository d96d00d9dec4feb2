//! Hard one-step Bernoulli games built from covering codes, their H-step
//! absorbing-chain embeddings, and exact KL accounting tools for
//! information-theoretic experiments.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{GameJson, JointActionSpace, MarkovGame, RewardSpec};

/// Largest k with 2^k - 1 <= m.
fn hamming_order(m: usize) -> usize {
    let mut k = 1;
    while (1usize << (k + 1)) - 1 <= m {
        k += 1;
    }
    k
}

/// Radius-1 covering of the binary cube {0,1}^m: the perfect Hamming code on
/// n = 2^k - 1 bits (largest such n <= m), extended to m bits by taking every
/// value on the remaining coordinates.
///
/// Returned as action tuples; coordinate i is player i's bit. The size is
/// 2^(m-k) <= 2^(m+1)/m.
pub fn hamming_one_net(m: usize) -> Vec<Vec<usize>> {
    assert!(m >= 1);
    let k = hamming_order(m);
    let n = (1usize << k) - 1;
    // codewords: x with zero syndrome, where position i carries column i+1 of
    // the parity-check matrix (all nonzero k-bit vectors)
    let mut base = Vec::new();
    for x in 0..(1usize << n) {
        let mut syndrome = 0usize;
        for i in 0..n {
            if (x >> i) & 1 == 1 {
                syndrome ^= i + 1;
            }
        }
        if syndrome == 0 {
            base.push(x);
        }
    }
    let mut out = Vec::with_capacity(base.len() << (m - n));
    for suffix in 0..(1usize << (m - n)) {
        for &c in &base {
            let word = c | (suffix << n);
            out.push((0..m).map(|i| (word >> i) & 1).collect());
        }
    }
    out.sort();
    out
}

/// Radius-1 covering of [2k]^m (actions 0..2k-1 per player).
///
/// The cube is split into k^m blocks of side 2; the binary net from
/// `hamming_one_net` is translated into each block whose coordinate sum is
/// divisible by k. Size <= 2 (2k)^m / (k m).
pub fn block_one_net(m: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidParameter("block net needs m >= 1, k >= 1".into()));
    }
    let total = (2 * k).checked_pow(m as u32).filter(|&t| t <= 1 << 20);
    if total.is_none() {
        return Err(Error::CapExceeded(format!("(2k)^m over {}", 1 << 20)));
    }
    if k == 1 {
        return Ok(hamming_one_net(m));
    }
    let base = hamming_one_net(m);
    let mut out = Vec::new();
    // enumerate blocks l in {0..k-1}^m with k | sum(l)
    let mut l = vec![0usize; m];
    loop {
        if l.iter().sum::<usize>() % k == 0 {
            for b in &base {
                out.push(l.iter().zip(b).map(|(&li, &bi)| 2 * li + bi).collect());
            }
        }
        let mut pos = 0;
        loop {
            if pos == m {
                out.sort();
                return Ok(out);
            }
            l[pos] += 1;
            if l[pos] < k {
                break;
            }
            l[pos] = 0;
            pos += 1;
        }
    }
}

/// Check by brute force that `net` covers every tuple of `[radix]^m` within
/// Hamming distance 1.
pub fn verify_one_net(m: usize, radix: usize, net: &[Vec<usize>]) -> bool {
    let total: usize = radix.pow(m as u32);
    let mut covered = vec![false; total];
    let encode = |tuple: &[usize]| tuple.iter().rev().fold(0, |acc, &a| acc * radix + a);
    for point in net {
        let idx = encode(point);
        covered[idx] = true;
        for i in 0..m {
            for a in 0..radix {
                let mut t = point.clone();
                t[i] = a;
                covered[encode(&t)] = true;
            }
        }
    }
    covered.iter().all(|&c| c)
}

/// One-step cooperative game whose mean reward is 1/2 + eps on a designated
/// good set of joint actions and 1/2 elsewhere, with Bernoulli realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneStepHardGame {
    pub num_players: usize,
    pub actions_per_player: usize,
    /// encoded joint-action indices of the good set
    pub good_set: BTreeSet<usize>,
    pub eps: f64,
}

impl OneStepHardGame {
    pub fn joint_actions(&self) -> JointActionSpace {
        JointActionSpace::new(&vec![self.actions_per_player; self.num_players]).expect("hard game space")
    }

    pub fn mean(&self, joint: usize) -> f64 {
        if self.good_set.contains(&joint) {
            0.5 + self.eps
        } else {
            0.5
        }
    }

    /// The lower-bound experiment semantics in the source analysis need at
    /// least 4 players; smaller instances are still valid games.
    pub fn small_m_warning(&self) -> bool {
        self.num_players < 4
    }

    /// View as an H=1, S=1 Markov game with identical Bernoulli rewards.
    pub fn to_markov_game(&self) -> MarkovGame {
        let space = self.joint_actions();
        let transitions = vec![1.0; space.len()];
        let mut rewards = Vec::with_capacity(space.len() * self.num_players);
        for joint in 0..space.len() {
            let spec = RewardSpec::Bernoulli { mean: self.mean(joint) };
            rewards.extend(std::iter::repeat(spec).take(self.num_players));
        }
        MarkovGame::new(
            self.num_players,
            1,
            1,
            &vec![self.actions_per_player; self.num_players],
            transitions,
            rewards,
            0,
        )
        .expect("hard game construction")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&HardGameJson::from(self)).expect("hard game serialization")
    }

    pub fn from_json_str(s: &str) -> Result<OneStepHardGame> {
        let j: HardGameJson =
            serde_json::from_str(s).map_err(|e| Error::InvalidGame(format!("json: {e}")))?;
        OneStepHardGame::try_from(j)
    }
}

/// On-disk form: the plain game schema plus the good-set indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardGameJson {
    #[serde(flatten)]
    pub game: GameJson,
    #[serde(rename = "D")]
    pub good_set: Vec<usize>,
}

impl From<&OneStepHardGame> for HardGameJson {
    fn from(g: &OneStepHardGame) -> Self {
        HardGameJson {
            game: GameJson::from(&g.to_markov_game()),
            good_set: g.good_set.iter().copied().collect(),
        }
    }
}

impl TryFrom<HardGameJson> for OneStepHardGame {
    type Error = Error;

    fn try_from(j: HardGameJson) -> Result<OneStepHardGame> {
        let game = MarkovGame::try_from(j.game)?;
        if game.horizon() != 1 || game.num_states() != 1 {
            return Err(Error::InvalidGame("hard game must have H=1, S=1".into()));
        }
        let a = game.action_counts()[0];
        if game.action_counts().iter().any(|&ai| ai != a) {
            return Err(Error::InvalidGame("hard game needs equal action counts".into()));
        }
        let good_set: BTreeSet<usize> = j.good_set.into_iter().collect();
        let on = good_set.iter().next().map(|&i| game.reward_mean(0, 0, i, 0)).unwrap_or(0.5);
        Ok(OneStepHardGame {
            num_players: game.num_players(),
            actions_per_player: a,
            good_set,
            eps: on - 0.5,
        })
    }
}

/// Hard game from a covering net: good set D = net, means 1/2 + eps on D.
pub fn build_hard_game(
    num_players: usize,
    actions_per_player: usize,
    net: &[Vec<usize>],
    eps: f64,
) -> Result<OneStepHardGame> {
    if !(0.0..=0.4).contains(&eps) {
        return Err(Error::InvalidParameter(format!("eps {eps} outside [0, 0.4]")));
    }
    let space = JointActionSpace::new(&vec![actions_per_player; num_players])?;
    let mut good_set = BTreeSet::new();
    for point in net {
        if point.len() != num_players || point.iter().any(|&a| a >= actions_per_player) {
            return Err(Error::DimensionMismatch("net point outside joint action space".into()));
        }
        good_set.insert(space.encode(point));
    }
    Ok(OneStepHardGame { num_players, actions_per_player, good_set, eps })
}

/// Apply one action permutation per player; the good set maps to its image.
pub fn permute_game(g: &OneStepHardGame, perms: &[Vec<usize>]) -> Result<OneStepHardGame> {
    if perms.len() != g.num_players
        || perms.iter().any(|p| {
            let mut seen = vec![false; g.actions_per_player];
            p.len() != g.actions_per_player
                || p.iter().any(|&x| x >= g.actions_per_player || std::mem::replace(&mut seen[x], true))
        })
    {
        return Err(Error::InvalidParameter("need one full permutation per player".into()));
    }
    let space = g.joint_actions();
    let good_set = g
        .good_set
        .iter()
        .map(|&joint| {
            let tuple: Vec<usize> =
                space.decode(joint).iter().enumerate().map(|(i, &a)| perms[i][a]).collect();
            space.encode(&tuple)
        })
        .collect();
    Ok(OneStepHardGame { good_set, ..g.clone() })
}

/// Brute-force pure Nash set of a one-step game given per-player mean tables:
/// a joint action survives iff no unilateral deviation strictly improves the
/// deviating player's mean.
pub fn pure_ne_set<F>(action_counts: &[usize], mean: F) -> Result<Vec<usize>>
where
    F: Fn(usize, usize) -> f64,
{
    let space = JointActionSpace::new(action_counts)?;
    let mut out = Vec::new();
    'joint: for joint in 0..space.len() {
        for (i, &a_i) in action_counts.iter().enumerate() {
            let here = mean(joint, i);
            let current = space.component(joint, i);
            for a in 0..a_i {
                if a != current && mean(space.with_component(joint, i, a), i) > here {
                    continue 'joint;
                }
            }
        }
        out.push(joint);
    }
    Ok(out)
}

/// Pure Nash set of a hard game (cooperative, so one shared mean table).
pub fn verify_pure_ne_set(g: &OneStepHardGame) -> Result<Vec<usize>> {
    pure_ne_set(&vec![g.actions_per_player; g.num_players], |joint, _| g.mean(joint))
}

/// KL divergence between Bernoulli(p) and Bernoulli(q), p, q in (0,1).
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0 && q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter("bernoulli_kl needs p, q in (0,1)".into()));
    }
    Ok(p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln())
}

/// kl(1/2 || 1/2 + eps) in closed form: (1/2) log(1 / (1 - 4 eps^2)).
pub fn bernoulli_kl_eps(eps: f64) -> f64 {
    0.5 * (1.0 / (1.0 - 4.0 * eps * eps)).ln()
}

/// Exact check of the KL chain-rule decomposition for an adaptive bandit
/// interaction: the trajectory KL between playing `rule` on Bernoulli arms
/// `p` versus arms `q` equals sum over arms of E_p[pull count] * kl(p, q).
///
/// `rule(seed, history)` must be a deterministic function of its inputs;
/// randomized rules are handled by enumerating `num_seeds` equiprobable
/// seeds. Returns (trajectory KL, decomposed sum), both by exhaustive
/// enumeration of reward sequences.
pub fn kl_decomposition_check<F>(
    p: &[f64],
    q: &[f64],
    rounds: usize,
    num_seeds: usize,
    rule: F,
) -> Result<(f64, f64)>
where
    F: Fn(u64, &[(usize, u8)]) -> usize,
{
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::DimensionMismatch("arm mean tables must match".into()));
    }
    for &x in p.iter().chain(q) {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::InvalidParameter("arm means must lie in (0,1)".into()));
        }
    }
    if rounds == 0 || (1usize << rounds) > (1 << 20) || num_seeds == 0 || num_seeds > 1024 {
        return Err(Error::CapExceeded("rounds <= 20 and seeds <= 1024 required".into()));
    }
    let arms = p.len();
    // the seed counts as part of the trajectory (the algorithm's own
    // randomness is conditioned on), so probabilities factor per (seed,
    // reward-sequence) pair and no grouping is needed
    let w_seed = 1.0 / num_seeds as f64;
    let mut expected_pulls = vec![0.0; arms];
    let mut lhs = 0.0;
    for seed in 0..num_seeds as u64 {
        for rewards in 0..(1u32 << rounds) {
            let mut hist: Vec<(usize, u8)> = Vec::with_capacity(rounds);
            let mut prob_p = w_seed;
            let mut log_ratio = 0.0;
            for t in 0..rounds {
                let a = rule(seed, &hist);
                if a >= arms {
                    return Err(Error::InvalidParameter("rule chose an arm out of range".into()));
                }
                let r = ((rewards >> t) & 1) as u8;
                let (pp, pq) =
                    if r == 1 { (p[a], q[a]) } else { (1.0 - p[a], 1.0 - q[a]) };
                prob_p *= pp;
                log_ratio += (pp / pq).ln();
                hist.push((a, r));
            }
            for &(a, _) in &hist {
                expected_pulls[a] += prob_p;
            }
            lhs += prob_p * log_ratio;
        }
    }
    let mut rhs = 0.0;
    for a in 0..arms {
        rhs += expected_pulls[a] * bernoulli_kl(p[a], q[a])?;
    }
    Ok((lhs, rhs))
}

/// Embed a one-step hard game into an H-step chain with absorbing win/loss
/// states: the good set tilts the step-1 transition toward the winning state
/// by eps / (2(H-1)), and all reward comes from sitting in that state.
pub fn embed_one_step_game(g: &OneStepHardGame, horizon: usize, eps: f64) -> Result<MarkovGame> {
    if horizon < 2 {
        return Err(Error::InvalidParameter("embedding needs horizon >= 2".into()));
    }
    let tilt = eps / (2.0 * (horizon as f64 - 1.0));
    if !(0.0..=0.5).contains(&tilt) {
        return Err(Error::InvalidParameter(format!("transition tilt {tilt} outside [0, 1/2]")));
    }
    let space = g.joint_actions();
    let m = g.num_players;
    // states: 0 = start, 1 = win (absorbing), 2 = loss (absorbing)
    let mut transitions = Vec::new();
    let mut rewards = Vec::new();
    for h in 0..horizon {
        for s in 0..3 {
            for joint in 0..space.len() {
                let row = match s {
                    0 if h == 0 => {
                        let up = if g.good_set.contains(&joint) { 0.5 + tilt } else { 0.5 };
                        vec![0.0, up, 1.0 - up]
                    }
                    0 => vec![1.0, 0.0, 0.0],
                    1 => vec![0.0, 1.0, 0.0],
                    _ => vec![0.0, 0.0, 1.0],
                };
                transitions.extend(row);
                let r = if h > 0 && s == 1 { 1.0 } else { 0.0 };
                rewards.extend(std::iter::repeat(RewardSpec::Deterministic { value: r }).take(m));
            }
        }
    }
    MarkovGame::new(m, horizon, 3, &vec![g.actions_per_player; m], transitions, rewards, 0)
}
