//! Transition learning rates for the Dirichlet pseudo-count update.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feasibility {
    Possible,
    Impossible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Evidence {
    /// The motion was actually attempted.
    Experienced,
    /// Inferred from the LiDAR without moving.
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Situation {
    pub direction: Direction,
    pub feasibility: Feasibility,
    pub evidence: Evidence,
}

impl Situation {
    pub const fn new(direction: Direction, feasibility: Feasibility, evidence: Evidence) -> Self {
        Self {
            direction,
            feasibility,
            evidence,
        }
    }

    pub const fn forward(feasibility: Feasibility, evidence: Evidence) -> Self {
        Self::new(Direction::Forward, feasibility, evidence)
    }

    pub fn reversed(self) -> Self {
        Self {
            direction: Direction::Reverse,
            ..self
        }
    }

    pub fn all() -> [Situation; 8] {
        use Direction::*;
        use Evidence::*;
        use Feasibility::*;
        [
            Situation::new(Forward, Possible, Experienced),
            Situation::new(Forward, Impossible, Experienced),
            Situation::new(Forward, Possible, Predicted),
            Situation::new(Forward, Impossible, Predicted),
            Situation::new(Reverse, Possible, Experienced),
            Situation::new(Reverse, Impossible, Experienced),
            Situation::new(Reverse, Possible, Predicted),
            Situation::new(Reverse, Impossible, Predicted),
        ]
    }
}

/// Learning rate λ per situation, plus a global multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRateTable {
    pub forward_possible: f64,
    pub forward_impossible: f64,
    pub forward_pred_possible: f64,
    pub forward_pred_impossible: f64,
    pub reverse_possible: f64,
    pub reverse_impossible: f64,
    pub reverse_pred_possible: f64,
    pub reverse_pred_impossible: f64,
    pub scale: f64,
}

impl Default for LearningRateTable {
    fn default() -> Self {
        Self {
            forward_possible: 7.0,
            forward_impossible: -7.0,
            forward_pred_possible: 5.0,
            forward_pred_impossible: -5.0,
            reverse_possible: 5.0,
            reverse_impossible: -5.0,
            reverse_pred_possible: 3.0,
            reverse_pred_impossible: -3.0,
            scale: 0.05,
        }
    }
}

impl LearningRateTable {
    /// Raw λ for a situation (before `scale`).
    pub fn lambda(&self, s: Situation) -> f64 {
        use Direction::*;
        use Evidence::*;
        use Feasibility::*;
        match (s.direction, s.feasibility, s.evidence) {
            (Forward, Possible, Experienced) => self.forward_possible,
            (Forward, Impossible, Experienced) => self.forward_impossible,
            (Forward, Possible, Predicted) => self.forward_pred_possible,
            (Forward, Impossible, Predicted) => self.forward_pred_impossible,
            (Reverse, Possible, Experienced) => self.reverse_possible,
            (Reverse, Impossible, Experienced) => self.reverse_impossible,
            (Reverse, Possible, Predicted) => self.reverse_pred_possible,
            (Reverse, Impossible, Predicted) => self.reverse_pred_impossible,
        }
    }

    /// Checks the sign and magnitude ordering of the table.
    pub fn is_well_ordered(&self) -> bool {
        let pairs = [
            (self.forward_possible, self.forward_impossible),
            (self.forward_pred_possible, self.forward_pred_impossible),
            (self.reverse_possible, self.reverse_impossible),
            (self.reverse_pred_possible, self.reverse_pred_impossible),
        ];
        let signs = pairs.iter().all(|&(p, i)| p > 0.0 && i < 0.0);
        let fwd_rev = self.forward_possible.abs() >= self.reverse_possible.abs()
            && self.forward_impossible.abs() >= self.reverse_impossible.abs()
            && self.forward_pred_possible.abs() >= self.reverse_pred_possible.abs()
            && self.forward_pred_impossible.abs() >= self.reverse_pred_impossible.abs();
        let exp_pred = self.forward_possible.abs() >= self.forward_pred_possible.abs()
            && self.forward_impossible.abs() >= self.forward_pred_impossible.abs()
            && self.reverse_possible.abs() >= self.reverse_pred_possible.abs()
            && self.reverse_impossible.abs() >= self.reverse_pred_impossible.abs();
        signs && fwd_rev && exp_pred && self.scale >= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_values() {
        let t = LearningRateTable::default();
        let vals: Vec<f64> = Situation::all().iter().map(|&s| t.lambda(s)).collect();
        assert_eq!(vals, vec![7.0, -7.0, 5.0, -5.0, 5.0, -5.0, 3.0, -3.0]);
        assert!(t.is_well_ordered());
    }

    #[test]
    fn flipped_sign_is_rejected() {
        let t = LearningRateTable {
            reverse_pred_impossible: 3.0,
            ..Default::default()
        };
        assert!(!t.is_well_ordered());
    }
}
