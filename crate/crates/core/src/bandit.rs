//! Adversarial bandit subroutines: follow-the-regularized-leader over own
//! actions, and the mixed-expert construction that turns an external-regret
//! learner into a swap-regret learner. Both are written against abstract
//! visit counts so the game learners can drive one instance per (h, s) pair.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::sample_index;
use crate::schedule::{alpha_step, relative_weight_cap, RelativeWeights};

/// Softmax of -scale * losses, computed stably.
pub fn ftrl_distribution(cum_loss: &[f64], scale: f64) -> Vec<f64> {
    let min = cum_loss.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = cum_loss.iter().map(|&l| (-scale * (l - min)).exp()).collect();
    let sum: f64 = w.iter().sum();
    for x in &mut w {
        *x /= sum;
    }
    w
}

/// Importance-weighted loss estimate for the realized action, with the
/// learning rate added to the denominator for implicit exploration.
pub fn loss_estimate(loss: f64, action_prob: f64, eta: f64) -> f64 {
    loss / (action_prob + eta)
}

/// Follow-the-regularized-leader over one action set with the (H+1)/(H+t)
/// averaging step and learning rate sqrt(eta_num / (A * t)) at visit t.
///
/// The cumulative loss vector is the step-size-weighted average of the
/// importance-weighted estimates, and the policy at visit t is the softmax of
/// that average scaled by eta_t / a_t.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FtrlState {
    horizon: usize,
    actions: usize,
    /// numerator inside the learning-rate square root (e.g. H * iota)
    eta_num: f64,
    visits: usize,
    cum_loss: Vec<f64>,
}

impl FtrlState {
    pub fn new(horizon: usize, actions: usize, eta_num: f64) -> Result<Self> {
        if actions == 0 || horizon == 0 || eta_num <= 0.0 {
            return Err(Error::InvalidParameter("ftrl needs actions, horizon, eta_num > 0".into()));
        }
        Ok(FtrlState { horizon, actions, eta_num, visits: 0, cum_loss: vec![0.0; actions] })
    }

    pub fn visits(&self) -> usize {
        self.visits
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    fn eta(&self, t: usize) -> f64 {
        (self.eta_num / (self.actions as f64 * t as f64)).sqrt()
    }

    /// Learning rate that will apply to the next visit.
    pub fn next_eta(&self) -> f64 {
        self.eta(self.visits + 1)
    }

    /// Policy for the upcoming visit (visit index visits + 1).
    pub fn current_policy(&self) -> Vec<f64> {
        let t = self.visits + 1;
        let scale = self.eta(t) / alpha_step(self.horizon, t);
        ftrl_distribution(&self.cum_loss, scale)
    }

    /// Record the realized action and its loss for the visit whose policy was
    /// produced by `current_policy`.
    pub fn observe(&mut self, action: usize, loss: f64) {
        let policy = self.current_policy();
        self.visits += 1;
        let t = self.visits;
        let alpha = alpha_step(self.horizon, t);
        let est = loss_estimate(loss, policy[action], self.eta(t));
        for l in &mut self.cum_loss {
            *l *= 1.0 - alpha;
        }
        self.cum_loss[action] += alpha * est;
    }
}

/// Stationary distribution of the row-stochastic matrix `q` (rows are the
/// per-expert action distributions): the fixed point p = p Q.
///
/// Power iteration from uniform with an infinity-norm residual target; if it
/// stalls, fall back to solving (I - Q^T) p = 0 directly with the
/// normalization constraint substituted for one row.
pub fn stationary_distribution(q: &[Vec<f64>], max_iters: usize, tol: f64) -> Result<Vec<f64>> {
    let n = q.len();
    if n == 0 || q.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch("stationary distribution needs a square matrix".into()));
    }
    let mut p = vec![1.0 / n as f64; n];
    for _ in 0..max_iters {
        let next = apply_left(&p, q);
        let res = residual(&next, q);
        if res <= tol {
            return Ok(next);
        }
        p = next;
    }
    let direct = solve_direct(q)?;
    if residual(&direct, q) <= tol {
        Ok(direct)
    } else {
        Err(Error::NumericalFailure("stationary distribution did not converge".into()))
    }
}

fn apply_left(p: &[f64], q: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n];
    for (b, row) in q.iter().enumerate() {
        let pb = p[b];
        if pb == 0.0 {
            continue;
        }
        for (a, &qa) in row.iter().enumerate() {
            out[a] += pb * qa;
        }
    }
    // renormalize to absorb accumulated rounding
    let sum: f64 = out.iter().sum();
    for x in &mut out {
        *x /= sum;
    }
    out
}

/// Infinity norm of p - pQ.
pub fn residual(p: &[f64], q: &[Vec<f64>]) -> f64 {
    let next = apply_left(p, q);
    p.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn solve_direct(q: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = q.len();
    // rows of (I - Q^T) p = 0, with the last equation replaced by sum p = 1
    let mut m = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = if i == j { 1.0 } else { 0.0 } - q[j][i];
        }
    }
    for j in 0..n {
        m[n - 1][j] = 1.0;
    }
    m[n - 1][n] = 1.0;
    // Gaussian elimination with partial pivoting
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() < 1e-300 {
            return Err(Error::NumericalFailure("singular fixed-point system".into()));
        }
        m.swap(col, pivot);
        for row in 0..n {
            if row == col {
                continue;
            }
            let f = m[row][col] / m[col][col];
            if f != 0.0 {
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    let mut p: Vec<f64> = (0..n).map(|i| (m[i][n] / m[i][i]).max(0.0)).collect();
    let sum: f64 = p.iter().sum();
    for x in &mut p {
        *x /= sum;
    }
    Ok(p)
}

pub const FIXED_POINT_TOL: f64 = 1e-9;
pub const FIXED_POINT_MAX_ITERS: usize = 100_000;

/// The quantities describing one visit of the mixed-expert learner.
#[derive(Debug, Clone)]
pub struct MixedExpertPolicy {
    /// relative visit weight u_t, saturated at the configured cap
    pub weight: f64,
    /// per-expert action distributions q^b
    pub experts: Vec<Vec<f64>>,
    /// fixed-point mixture over experts; also the marginal action distribution
    pub mixture: Vec<f64>,
    /// infinity-norm fixed-point residual actually achieved
    pub residual: f64,
}

/// Swap-regret learner: one external-regret sub-expert per own action, mixed
/// through the stationary distribution of their recommendation matrix.
///
/// Sub-expert b keeps its own visit counter and a cumulative loss vector
/// weighted by the global relative weight u_t at the time of each of its
/// updates; because u_j / u_1 never changes as t grows, those frozen
/// contributions stay mutually consistent.
#[derive(Debug, Clone)]
pub struct MixedExpertState {
    actions: usize,
    /// numerator inside the per-expert learning rate square root (e.g. iota)
    eta_num: f64,
    weight_cap: f64,
    rel: RelativeWeights,
    expert_visits: Vec<usize>,
    /// [expert][action] cumulative u-weighted loss estimates
    cum_weighted: Vec<Vec<f64>>,
}

impl MixedExpertState {
    pub fn new(horizon: usize, actions: usize, eta_num: f64, max_visits: usize) -> Result<Self> {
        if actions == 0 || horizon == 0 || eta_num <= 0.0 {
            return Err(Error::InvalidParameter("mixed expert needs actions, horizon, eta_num > 0".into()));
        }
        Ok(MixedExpertState {
            actions,
            eta_num,
            weight_cap: relative_weight_cap(horizon, max_visits),
            rel: RelativeWeights::new(horizon),
            expert_visits: vec![0; actions],
            cum_weighted: vec![vec![0.0; actions]; actions],
        })
    }

    pub fn visits(&self) -> usize {
        self.rel.t()
    }

    pub fn expert_visits(&self) -> &[usize] {
        &self.expert_visits
    }

    fn eta(&self, t_b: usize) -> f64 {
        (self.eta_num / (self.actions as f64 * t_b as f64)).sqrt()
    }

    /// Advance the global visit counter and produce this visit's policy.
    pub fn advance_policy(&mut self) -> Result<MixedExpertPolicy> {
        self.rel.advance();
        let weight = self.rel.current(self.weight_cap);
        let experts: Vec<Vec<f64>> = (0..self.actions)
            .map(|b| {
                let t_b = self.expert_visits[b];
                if t_b == 0 {
                    vec![1.0 / self.actions as f64; self.actions]
                } else {
                    ftrl_distribution(&self.cum_weighted[b], self.eta(t_b) / weight)
                }
            })
            .collect();
        let mixture = stationary_distribution(&experts, FIXED_POINT_MAX_ITERS, FIXED_POINT_TOL)?;
        let res = residual(&mixture, &experts);
        Ok(MixedExpertPolicy { weight, experts, mixture, residual: res })
    }

    /// Sample (expert, action): the expert from the mixture, the action from
    /// that expert's distribution.
    pub fn sample<R: Rng>(&self, policy: &MixedExpertPolicy, rng: &mut R) -> (usize, usize) {
        let b = sample_index(&policy.mixture, rng);
        let a = sample_index(&policy.experts[b], rng);
        (b, a)
    }

    /// Record the realized loss; only the selected expert is updated.
    pub fn observe(&mut self, policy: &MixedExpertPolicy, expert: usize, action: usize, loss: f64) {
        self.expert_visits[expert] += 1;
        let eta = self.eta(self.expert_visits[expert]);
        let est = loss_estimate(loss, policy.experts[expert][action], eta);
        self.cum_weighted[expert][action] += policy.weight * est;
    }
}

/// One full episode of the mixed-expert learner: compute this visit's
/// policy, sample an expert and an action, fetch the loss for the realized
/// action, and fold it back in. Returns the action and the visit's policy.
pub fn mixed_expert_step<R, L>(
    state: &mut MixedExpertState,
    loss_for: L,
    rng: &mut R,
) -> Result<(usize, MixedExpertPolicy)>
where
    R: Rng,
    L: FnOnce(usize) -> f64,
{
    let policy = state.advance_policy()?;
    let (b, a) = state.sample(&policy, rng);
    let loss = loss_for(a);
    state.observe(&policy, b, a, loss);
    Ok((a, policy))
}

/// Weighted swap regret of a realized action sequence: weighted incurred
/// loss minus the best per-source-action remapping in hindsight. Returns the
/// regret and the optimal map (ties prefer the identity, then the lowest
/// target index).
pub fn swap_regret_actions(
    weights: &[f64],
    actions: &[usize],
    losses: &[Vec<f64>],
) -> (f64, Vec<usize>) {
    assert_eq!(actions.len(), losses.len());
    assert_eq!(weights.len(), losses.len());
    let a_n = losses.first().map_or(0, |l| l.len());
    let mut incurred = 0.0;
    // per (source, target) total weighted loss
    let mut table = vec![vec![0.0; a_n]; a_n];
    for ((&w, &a), l) in weights.iter().zip(actions).zip(losses) {
        incurred += w * l[a];
        for (tgt, &lt) in l.iter().enumerate() {
            table[a][tgt] += w * lt;
        }
    }
    finish_swap(incurred, table)
}

/// Weighted swap regret of a sequence of action distributions: weighted
/// expected loss minus the best remapping of each source action's mass.
pub fn swap_regret_distributions(
    weights: &[f64],
    dists: &[Vec<f64>],
    losses: &[Vec<f64>],
) -> (f64, Vec<usize>) {
    assert_eq!(dists.len(), losses.len());
    assert_eq!(weights.len(), losses.len());
    let a_n = losses.first().map_or(0, |l| l.len());
    let mut incurred = 0.0;
    let mut table = vec![vec![0.0; a_n]; a_n];
    for ((&w, p), l) in weights.iter().zip(dists).zip(losses) {
        for (src, &ps) in p.iter().enumerate() {
            incurred += w * ps * l[src];
            if ps == 0.0 {
                continue;
            }
            for (tgt, &lt) in l.iter().enumerate() {
                table[src][tgt] += w * ps * lt;
            }
        }
    }
    finish_swap(incurred, table)
}

fn finish_swap(incurred: f64, table: Vec<Vec<f64>>) -> (f64, Vec<usize>) {
    let mut best_total = 0.0;
    let mut map = Vec::with_capacity(table.len());
    for (src, row) in table.iter().enumerate() {
        // ties keep the identity, then the lowest target index
        let mut best = row[src];
        let mut best_tgt = src;
        for (tgt, &v) in row.iter().enumerate() {
            if v < best {
                best = v;
                best_tgt = tgt;
            }
        }
        best_total += best;
        map.push(best_tgt);
    }
    (incurred - best_total, map)
}

/// Signed weighted external regret of a distribution sequence: weighted
/// expected loss minus the best fixed action under the same weights.
pub fn weighted_external_regret(weights: &[f64], dists: &[Vec<f64>], losses: &[Vec<f64>]) -> f64 {
    assert_eq!(weights.len(), losses.len());
    assert_eq!(dists.len(), losses.len());
    let a_n = losses.first().map_or(0, |l| l.len());
    let mut incurred = 0.0;
    let mut per_action = vec![0.0; a_n];
    for ((&w, p), l) in weights.iter().zip(dists).zip(losses) {
        for (a, &la) in l.iter().enumerate() {
            incurred += w * p[a] * la;
            per_action[a] += w * la;
        }
    }
    let best = per_action.iter().cloned().fold(f64::INFINITY, f64::min);
    incurred - best
}
