//! Step sizes and visit-count weights shared by the incremental learners.
//!
//! The base step size is a_t = (H+1)/(H+t). Averaging a sequence with these
//! steps induces weights w(t, j) over the past visits j = 0..t; those weights
//! and the ratio w(t, t)/w(t, 1) (needed by the mixed-expert machinery) are
//! computed here, the latter in log space because it grows like t^(2H).

use crate::error::{Error, Result};

/// Base step size a_t = (H+1)/(H+t); a_1 = 1.
pub fn alpha_step(horizon: usize, t: usize) -> f64 {
    debug_assert!(t >= 1);
    (horizon as f64 + 1.0) / (horizon as f64 + t as f64)
}

/// Weights (w(t,0), w(t,1), ..., w(t,t)) placed on visits 0..t after t
/// incremental updates: w(t,0) = prod_{k<=t}(1-a_k), w(t,j) = a_j *
/// prod_{k=j+1..t}(1-a_k). For t >= 1 the index-0 weight is exactly zero.
pub fn alpha_weights(horizon: usize, t: usize) -> Vec<f64> {
    let mut w = vec![1.0];
    for k in 1..=t {
        let a = alpha_step(horizon, k);
        for x in &mut w {
            *x *= 1.0 - a;
        }
        w.push(a);
    }
    w
}

/// Incremental tracker for u_t = w(t,t)/w(t,1), kept as a logarithm.
///
/// The ratio w(t,j)/w(t,1) does not depend on t, so these unnormalized
/// weights can be frozen per visit and reused later without rescaling.
#[derive(Debug, Clone)]
pub struct RelativeWeights {
    horizon: usize,
    t: usize,
    /// sum over k=2..t of log(1 - a_k)
    log_tail: f64,
}

impl RelativeWeights {
    pub fn new(horizon: usize) -> Self {
        RelativeWeights { horizon, t: 0, log_tail: 0.0 }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Move from t to t+1.
    pub fn advance(&mut self) {
        self.t += 1;
        if self.t >= 2 {
            self.log_tail += (1.0 - alpha_step(self.horizon, self.t)).ln();
        }
    }

    /// log u_t; 0 for t <= 1.
    pub fn log_current(&self) -> f64 {
        if self.t <= 1 {
            return 0.0;
        }
        alpha_step(self.horizon, self.t).ln() - self.log_tail
    }

    /// u_t, saturated at `cap` to keep downstream arithmetic finite.
    pub fn current(&self, cap: f64) -> f64 {
        self.log_current().min(cap.ln()).exp()
    }
}

/// Saturation cap (H + T)^(2H) for the relative weights, as a finite f64
/// (clamped to f64::MAX when the power overflows).
pub fn relative_weight_cap(horizon: usize, max_visits: usize) -> f64 {
    let log_cap = 2.0 * horizon as f64 * ((horizon + max_visits) as f64).ln();
    if log_cap >= f64::MAX.ln() {
        f64::MAX
    } else {
        log_cap.exp()
    }
}

/// Shared constants for the bonus and learning-rate schedules of one run.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleParams {
    pub horizon: usize,
    /// log confidence term, log(m * maxA * H * S * K / (p * eps))
    pub iota: f64,
    /// bonus scale multiplier
    pub c: f64,
}

impl ScheduleParams {
    pub fn new(
        num_players: usize,
        max_actions: usize,
        horizon: usize,
        num_states: usize,
        episodes: usize,
        p: f64,
        eps: f64,
        c: f64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&p) || p == 0.0 || eps <= 0.0 || c <= 0.0 {
            return Err(Error::InvalidParameter("p in (0,1), eps > 0, c > 0 required".into()));
        }
        let iota = ((num_players * max_actions * horizon * num_states * episodes) as f64
            / (p * eps))
            .ln();
        Ok(ScheduleParams { horizon, iota, c })
    }

    /// Learning rate for the per-state coarse learner of a player with a_i
    /// actions at visit t: sqrt(H * iota / (a_i * t)).
    pub fn cce_learning_rate(&self, a_i: usize, t: usize) -> f64 {
        (self.horizon as f64 * self.iota / (a_i as f64 * t as f64)).sqrt()
    }

    /// Optimism bonus for the coarse learner at visit t.
    pub fn cce_bonus(&self, a_i: usize, t: usize) -> f64 {
        let h = self.horizon as f64;
        let t = t as f64;
        self.c * (h.powi(3) * a_i as f64 * self.iota / t).sqrt()
            + 2.0 * self.c * h * h * self.iota / t
    }

    /// Learning rate for the swap-regret learner: sqrt(iota / (a_i * t)).
    pub fn ce_learning_rate(&self, a_i: usize, t: usize) -> f64 {
        (self.iota / (a_i as f64 * t as f64)).sqrt()
    }

    /// Optimism bonus for the swap-regret learner at visit t.
    pub fn ce_bonus(&self, a_i: usize, t: usize) -> f64 {
        let h = self.horizon as f64;
        let t = t as f64;
        self.c * h * h * a_i as f64 * (self.iota / t).sqrt()
            + 2.0 * self.c * h * h * self.iota / t
    }
}

/// Confidence term for the standalone adversarial-bandit routines:
/// 4 log(8 H A T / p).
pub fn bandit_iota(horizon: usize, actions: usize, max_rounds: usize, p: f64) -> f64 {
    4.0 * (8.0 * (horizon * actions * max_rounds) as f64 / p).ln()
}
