//! Exact equilibrium auditors for one-step games, and the report type used
//! to carry per-player gap measurements across the workspace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{JointActionSpace, MAX_JOINT_ACTIONS};

const UNREACHABLE_MASS: f64 = 1e-15;

fn check_inputs(
    action_counts: &[usize],
    means: &[Vec<f64>],
    dist: &[f64],
) -> Result<JointActionSpace> {
    let space = JointActionSpace::new(action_counts)?;
    if space.len() > MAX_JOINT_ACTIONS {
        return Err(Error::CapExceeded("joint action space too large".into()));
    }
    if means.len() != action_counts.len() || means.iter().any(|m| m.len() != space.len()) {
        return Err(Error::DimensionMismatch("mean table dims".into()));
    }
    if dist.len() != space.len() {
        return Err(Error::DimensionMismatch("distribution length".into()));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || dist.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidParameter(format!("distribution sums to {sum}")));
    }
    Ok(space)
}

/// Per-player coarse gap of a correlated distribution over joint actions:
/// the best constant own-action deviation against the induced marginal of
/// the other players, minus the achieved mean.
pub fn one_step_cce_gap(
    action_counts: &[usize],
    means: &[Vec<f64>],
    dist: &[f64],
) -> Result<Vec<f64>> {
    let space = check_inputs(action_counts, means, dist)?;
    let mut gaps = Vec::with_capacity(action_counts.len());
    for (i, &a_i) in action_counts.iter().enumerate() {
        let mut achieved = 0.0;
        let mut deviation = vec![0.0; a_i];
        for (joint, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            achieved += p * means[i][joint];
            for (a, d) in deviation.iter_mut().enumerate() {
                *d += p * means[i][space.with_component(joint, i, a)];
            }
        }
        let best = deviation.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        gaps.push(best - achieved);
    }
    Ok(gaps)
}

/// Per-player correlated gap: the best strategy modification (a remapping of
/// own recommended actions) minus the achieved mean. Each source action is
/// optimized independently from the conditional over the other players;
/// source actions with conditional mass below 1e-15 contribute nothing.
pub fn one_step_ce_gap(
    action_counts: &[usize],
    means: &[Vec<f64>],
    dist: &[f64],
) -> Result<Vec<f64>> {
    let space = check_inputs(action_counts, means, dist)?;
    let mut gaps = Vec::with_capacity(action_counts.len());
    for (i, &a_i) in action_counts.iter().enumerate() {
        // per (source, target): expected mean when target is substituted on
        // the event that source was recommended
        let mut table = vec![vec![0.0; a_i]; a_i];
        let mut mass = vec![0.0; a_i];
        let mut achieved = 0.0;
        for (joint, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let src = space.component(joint, i);
            mass[src] += p;
            achieved += p * means[i][joint];
            for (tgt, cell) in table[src].iter_mut().enumerate() {
                *cell += p * means[i][space.with_component(joint, i, tgt)];
            }
        }
        let mut modified = 0.0;
        for (src, row) in table.iter().enumerate() {
            if mass[src] < UNREACHABLE_MASS {
                continue;
            }
            modified += row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        gaps.push(modified - achieved);
    }
    Ok(gaps)
}

/// How the numbers in a report were produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GapMethod {
    ExactDp,
    Omniscient,
    MonteCarlo { sigma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlayerGaps {
    pub player: usize,
    pub value: f64,
    pub best_response: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_modification: Option<f64>,
    pub cce_gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ce_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapReport {
    pub method: GapMethod,
    pub players: Vec<PlayerGaps>,
}

impl GapReport {
    pub fn max_cce_gap(&self) -> f64 {
        self.players.iter().map(|p| p.cce_gap).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_ce_gap(&self) -> Option<f64> {
        self.players
            .iter()
            .map(|p| p.ce_gap)
            .collect::<Option<Vec<_>>>()
            .map(|g| g.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("gap report serialization")
    }

    pub fn to_csv(&self) -> String {
        let method = match self.method {
            GapMethod::ExactDp => "exact-dp".to_string(),
            GapMethod::Omniscient => "omniscient".to_string(),
            GapMethod::MonteCarlo { sigma } => format!("monte-carlo(sigma={sigma})"),
        };
        let mut out =
            String::from("player,method,value,best_response,best_modification,cce_gap,ce_gap\n");
        for p in &self.players {
            let bm = p.best_modification.map(|v| v.to_string()).unwrap_or_default();
            let ce = p.ce_gap.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.player, method, p.value, p.best_response, bm, p.cce_gap, ce
            ));
        }
        out
    }
}
