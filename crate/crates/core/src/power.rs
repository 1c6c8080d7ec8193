//! Importance-aware, CSI-free power control.
//!
//! Each node scores how often its local signs agree with the previous
//! broadcast majority vote. Powers then follow the projected recursion
//! `p_m <- clamp(p_m + rho (a_m - a_bar), p_min, p_max)`. No channel state
//! enters the update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::{MvDecision, SignVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerParams {
    pub p_avg: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub rho: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams {
            p_avg: 1.0,
            p_min: 0.1,
            p_max: 2.0,
            rho: 0.05,
        }
    }
}

impl PowerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_min > 0.0 && self.p_min.is_finite()) {
            return Err(Error::config("power.p_min", "must be positive"));
        }
        if self.p_min > self.p_max {
            return Err(Error::config("power.p_min", "must not exceed power.p_max"));
        }
        if !(self.p_avg >= self.p_min && self.p_avg <= self.p_max) {
            return Err(Error::config("power.p_avg", "must lie in [p_min, p_max]"));
        }
        if !self.p_max.is_finite() {
            return Err(Error::config("power.p_max", "must be finite"));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config("power.rho", "must be non-negative"));
        }
        Ok(())
    }
}

/// Which nodes' stored scores enter the mean score `a_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbarScope {
    #[default]
    All,
    Active,
}

/// Score assumed for a node that has not reported yet (chance agreement).
pub const INITIAL_SCORE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerState {
    p: Vec<f64>,
    a: Vec<f64>,
}

impl PowerState {
    /// Every node starts at `p_avg` with the neutral score.
    pub fn initial(num_nodes: usize, params: &PowerParams) -> Self {
        PowerState {
            p: vec![params.p_avg; num_nodes],
            a: vec![INITIAL_SCORE; num_nodes],
        }
    }

    pub fn from_parts(p: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if p.len() != a.len() {
            return Err(Error::usage("power and score vectors differ in length"));
        }
        if a.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::usage("scores must lie in [0, 1]"));
        }
        Ok(PowerState { p, a })
    }

    pub fn powers(&self) -> &[f64] {
        &self.p
    }

    pub fn scores(&self) -> &[f64] {
        &self.a
    }

    pub fn num_nodes(&self) -> usize {
        self.p.len()
    }

    pub fn mean_power(&self) -> f64 {
        mean(&self.p)
    }

    pub fn mean_score(&self) -> f64 {
        mean(&self.a)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Fraction of coordinates where the local sign matches the previous MV.
pub fn consistency_score(local: &SignVector, mv_prev: &MvDecision) -> Result<f64> {
    if local.len() != mv_prev.len() {
        return Err(Error::usage(format!(
            "sign vector has {} coordinates, MV has {}",
            local.len(),
            mv_prev.len()
        )));
    }
    if local.is_empty() {
        return Err(Error::usage("consistency score needs q >= 1"));
    }
    let agree = local
        .signs()
        .iter()
        .zip(mv_prev.votes())
        .filter(|(a, b)| a == b)
        .count();
    Ok(agree as f64 / local.len() as f64)
}

/// Result of one recursion step.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerUpdate {
    pub state: PowerState,
    /// `rho (a_m - a_bar)` before projection, one per node.
    pub increments: Vec<f64>,
    pub a_bar: f64,
}

/// Applies the projected recursion to all nodes with `a_bar` over all nodes.
pub fn update_powers(
    state: &PowerState,
    scores: &[f64],
    params: &PowerParams,
) -> Result<PowerUpdate> {
    let all: Vec<usize> = (0..state.num_nodes()).collect();
    update_powers_scoped(state, scores, params, AbarScope::All, &all)
}

/// As [`update_powers`], with `a_bar` taken over `active` when the scope is
/// [`AbarScope::Active`]. Every node's power is still updated.
pub fn update_powers_scoped(
    state: &PowerState,
    scores: &[f64],
    params: &PowerParams,
    scope: AbarScope,
    active: &[usize],
) -> Result<PowerUpdate> {
    let m = state.num_nodes();
    if m == 0 {
        return Err(Error::usage("power update needs at least one node"));
    }
    if scores.len() != m {
        return Err(Error::usage(format!(
            "{} scores for {m} nodes",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::usage("scores must lie in [0, 1]"));
    }
    let a_bar = match scope {
        AbarScope::All => mean(scores),
        AbarScope::Active => {
            if active.is_empty() || active.iter().any(|&k| k >= m) {
                return Err(Error::usage("active set empty or out of range"));
            }
            active.iter().map(|&k| scores[k]).sum::<f64>() / active.len() as f64
        }
    };
    let increments: Vec<f64> = scores.iter().map(|a| params.rho * (a - a_bar)).collect();
    let p = state
        .p
        .iter()
        .zip(&increments)
        .map(|(p, d)| (p + d).clamp(params.p_min, params.p_max))
        .collect();
    Ok(PowerUpdate {
        state: PowerState {
            p,
            a: scores.to_vec(),
        },
        increments,
        a_bar,
    })
}
