//! Expected-free-energy scoring and Monte Carlo tree search over the
//! learned transition model.

mod actions;
mod efe;
mod mcts;

pub use actions::{ActionId, ActionSpace};
pub use efe::{
    collision_risk, evaluate_policy, info_gain, predict_step, utility, PolicyEvaluation, StepTerms,
    UTILITY_FLOOR,
};
pub use mcts::{legal_actions, mcts_plan, ActionStats, PlanOutcome, PlannerTrace, PolicySummary};

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::model::PositionId;
use crate::world::ObservationSignature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub goal_signature: Option<ObservationSignature>,
    /// Goal observation class, resolved from `goal_signature` once matched.
    pub goal_class: Option<usize>,
    pub goal_position: Option<PositionId>,
    pub utility_weight: f64,
    pub exploration_weight: f64,
    pub collision_weight: f64,
}

impl Preferences {
    pub fn exploration() -> Self {
        Self {
            goal_signature: None,
            goal_class: None,
            goal_position: None,
            utility_weight: 0.0,
            exploration_weight: 1.0,
            collision_weight: 2.0,
        }
    }

    pub fn goal_directed() -> Self {
        Self {
            utility_weight: 5.0,
            exploration_weight: 0.0,
            ..Self::exploration()
        }
    }

    pub fn has_goal(&self) -> bool {
        self.goal_class.is_some() || self.goal_position.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let w = [
            self.utility_weight,
            self.exploration_weight,
            self.collision_weight,
        ];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(NavError::Config(
                "preference weights must be finite and non-negative".into(),
            ));
        }
        let wants_goal =
            self.utility_weight > 0.0 && (self.has_goal() || self.goal_signature.is_some());
        if !wants_goal && self.exploration_weight == 0.0 {
            return Err(NavError::Config(
                "either a weighted goal or a positive exploration weight is required".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub horizon_m: f64,
    pub rollout_depth: usize,
    pub budget: usize,
    pub ucb_c: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self::for_radius(14.0, 1.0)
    }
}

impl PlanConfig {
    /// Depth derived from the horizon and node spacing.
    pub fn for_radius(horizon_m: f64, influence_radius: f64) -> Self {
        Self {
            horizon_m,
            rollout_depth: ((horizon_m / influence_radius).ceil() as usize).max(1),
            budget: 200,
            ucb_c: 1.414,
            temperature: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self, actions: &ActionSpace) -> Result<()> {
        if self.rollout_depth == 0 {
            return Err(NavError::Config("rollout_depth must be at least 1".into()));
        }
        if self.budget < actions.sector_count {
            return Err(NavError::Config(format!(
                "budget {} is below the sector count {}",
                self.budget, actions.sector_count
            )));
        }
        if !(self.temperature >= 0.0) || !(self.ucb_c >= 0.0) {
            return Err(NavError::Config(
                "temperature and ucb_c must be non-negative".into(),
            ));
        }
        Ok(())
    }
}
