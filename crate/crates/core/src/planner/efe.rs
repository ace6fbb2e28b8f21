//! Per-step expected free energy terms.
//!
//! A step contributes `-w_e * info_gain - w_u * utility + w_c * collision`,
//! lower being better.

use serde::{Deserialize, Serialize};

use super::{ActionId, Preferences};
use crate::error::{NavError, Result};
use crate::model::{argmax, GenerativeModel, PositionId};

/// Lower clamp on the log goal probability.
pub const UTILITY_FLOOR: f64 = -20.0;

/// Probability that `action` leaves the state unchanged, for a state
/// distribution: one minus the learned mass that moves to another state.
/// STAY never collides.
pub fn collision_risk(model: &GenerativeModel, state_dist: &[f64], action: ActionId) -> f64 {
    if model.actions.is_stay(action) {
        return 0.0;
    }
    let moving: f64 = state_dist
        .iter()
        .enumerate()
        .filter(|(_, &q)| q > 0.0)
        .map(|(sp, &q)| q * moving_mass(model, sp, action))
        .sum();
    (1.0 - moving).clamp(0.0, 1.0)
}

/// Normalized learned mass leaving `state` under `action`.
pub(crate) fn moving_mass(model: &GenerativeModel, state: usize, action: ActionId) -> f64 {
    let slab = &model.b_state[action];
    let out: f64 = slab
        .explicit(state)
        .filter(|&(s, _)| s != state)
        .map(|(_, c)| c - model.count_floor)
        .sum();
    out / slab.col_total(state)
}

/// Next state distribution, most likely position and collision risk.
pub fn predict_step(
    model: &GenerativeModel,
    state_dist: &[f64],
    action: ActionId,
) -> (Vec<f64>, Option<PositionId>, f64) {
    let next = model.predict_states(state_dist, action);
    let mut q_p = vec![0.0; model.num_positions()];
    for (s, &q) in next.iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        let total = model.a_pos.col_total(s);
        for (p, c) in model.a_pos.explicit(s) {
            q_p[p] += q * (c - model.count_floor) / total;
        }
    }
    let risk = collision_risk(model, state_dist, action);
    (next, argmax(&q_p), risk)
}

/// Damped entropy of one observation column. The column carries an extra
/// slot at the floor for a not-yet-seen class, so an unvisited state is
/// maximally uncertain even when only one class exists.
pub(crate) fn state_gain(model: &GenerativeModel, s: usize) -> f64 {
    let a = &model.a_obs;
    let floor = model.count_floor;
    let total = a.col_total(s) + floor;
    let implicit = a.rows() - a.explicit(s).count() + 1;
    let p_floor = floor / total;
    let mut h = -(implicit as f64) * p_floor * p_floor.ln();
    for (_, c) in a.explicit(s) {
        let p = c / total;
        h -= p * p.ln();
    }
    h / (1.0 + a.excess(s))
}

/// Expected observation information gain under a state distribution.
pub fn info_gain(model: &GenerativeModel, state_dist: &[f64]) -> f64 {
    state_dist
        .iter()
        .enumerate()
        .filter(|(_, &q)| q > 0.0)
        .map(|(s, &q)| q * state_gain(model, s))
        .sum()
}

/// Goal probability emitted by a single state, if a goal is resolved.
pub(crate) fn goal_prob(model: &GenerativeModel, state: usize, prefs: &Preferences) -> Option<f64> {
    if let Some(g) = prefs.goal_class.filter(|&g| g < model.num_classes()) {
        Some(model.a_obs.prob(g, state))
    } else {
        prefs
            .goal_position
            .filter(|&g| g < model.num_positions())
            .map(|g| model.a_pos.prob(g, state))
    }
}

pub(crate) fn log_clamped(p: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(UTILITY_FLOOR)
    } else {
        UTILITY_FLOOR
    }
}

/// Log probability of the goal outcome expected under a state distribution,
/// clamped at [`UTILITY_FLOOR`].
pub fn utility(model: &GenerativeModel, state_dist: &[f64], prefs: &Preferences) -> Result<f64> {
    let p = if let Some(g) = prefs.goal_class {
        if g >= model.num_classes() {
            return Err(NavError::OutOfRange {
                what: "goal class",
                index: g,
                len: model.num_classes(),
            });
        }
        weighted(state_dist, |s| model.a_obs.prob(g, s))
    } else if let Some(g) = prefs.goal_position {
        if g >= model.num_positions() {
            return Err(NavError::OutOfRange {
                what: "goal position",
                index: g,
                len: model.num_positions(),
            });
        }
        weighted(state_dist, |s| model.a_pos.prob(g, s))
    } else if prefs.utility_weight > 0.0 {
        return Err(NavError::Config(
            "utility weight set without a resolved goal".into(),
        ));
    } else {
        return Ok(0.0);
    };
    Ok(log_clamped(p))
}

fn weighted(dist: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    dist.iter()
        .enumerate()
        .filter(|(_, &q)| q > 0.0)
        .map(|(s, &q)| q * f(s))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTerms {
    pub action: ActionId,
    pub state_dist: Vec<f64>,
    pub position: Option<PositionId>,
    pub info_gain: f64,
    pub utility: f64,
    pub collision_risk: f64,
}

impl StepTerms {
    pub fn efe(&self, prefs: &Preferences) -> f64 {
        -prefs.exploration_weight * self.info_gain - prefs.utility_weight * self.utility
            + prefs.collision_weight * self.collision_risk
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub policy: Vec<ActionId>,
    pub steps: Vec<StepTerms>,
    pub total_efe: f64,
}

impl PolicyEvaluation {
    /// Re-sums the per-step terms.
    pub fn resum(&self, prefs: &Preferences) -> f64 {
        self.steps.iter().map(|s| s.efe(prefs)).sum()
    }
}

/// Rolls a policy forward from `state_dist` and sums its step terms.
pub fn evaluate_policy(
    model: &GenerativeModel,
    state_dist: &[f64],
    policy: &[ActionId],
    prefs: &Preferences,
    rollout_depth: usize,
) -> Result<PolicyEvaluation> {
    if policy.len() > rollout_depth {
        return Err(NavError::Config(format!(
            "policy length {} exceeds rollout depth {rollout_depth}",
            policy.len()
        )));
    }
    let mut dist = state_dist.to_vec();
    dist.resize(model.num_states(), 0.0);
    let mut steps = Vec::with_capacity(policy.len());
    let mut total = 0.0;
    for &a in policy {
        if a >= model.action_count() {
            return Err(NavError::OutOfRange {
                what: "action",
                index: a,
                len: model.action_count(),
            });
        }
        let (next, position, risk) = predict_step(model, &dist, a);
        let terms = StepTerms {
            action: a,
            info_gain: info_gain(model, &next),
            utility: utility(model, &next, prefs)?,
            collision_risk: risk,
            position,
            state_dist: next.clone(),
        };
        total += terms.efe(prefs);
        steps.push(terms);
        dist = next;
    }
    Ok(PolicyEvaluation {
        policy: policy.to_vec(),
        steps,
        total_efe: total,
    })
}
