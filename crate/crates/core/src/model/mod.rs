//! The agent's generative model: observation likelihood `A_o`, position
//! likelihood `A_p`, state transitions `B_s` (one slab per action) and the
//! pose table `B_p`.
//!
//! The joint factorizes as
//!
//! ```text
//! P(o_t, s_t, p_t | s_{t-1}, a_{t-1}) = P(o_t|s_t) P(p_t|s_t) P(s_t|s_{t-1}, a_{t-1})
//! ```
//!
//! and every factor is the column-normalized view of a Dirichlet count
//! matrix. Counts never drop below `count_floor`.

mod counts;
mod learning;

pub use counts::{normalized, CountMatrix};
pub use learning::{Direction, Evidence, Feasibility, LearningRateTable, Situation};

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::map::similarity;
use crate::planner::{ActionId, ActionSpace};
use crate::world::{ObservationSignature, Pose};

pub type StateId = usize;
pub type PositionId = usize;
pub type ClassId = usize;

pub const DEFAULT_COUNT_FLOOR: f64 = 0.1;

/// Weight of dead-reckoned position evidence in the position posterior.
const POSITION_EVIDENCE_WEIGHT: f64 = 0.9;

/// A discrete observation outcome and the panorama that founded it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationClass {
    pub id: ClassId,
    pub prototype: ObservationSignature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub q_s: Vec<f64>,
    pub q_p: Vec<f64>,
    pub believed_pose: Pose,
}

impl BeliefState {
    pub fn delta(
        num_states: usize,
        state: StateId,
        num_positions: usize,
        position: PositionId,
        pose: Pose,
    ) -> Self {
        let mut q_s = vec![0.0; num_states];
        q_s[state] = 1.0;
        let mut q_p = vec![0.0; num_positions];
        q_p[position] = 1.0;
        Self {
            q_s,
            q_p,
            believed_pose: pose,
        }
    }

    pub fn uniform(num_states: usize, num_positions: usize, pose: Pose) -> Self {
        Self {
            q_s: vec![1.0 / num_states as f64; num_states],
            q_p: vec![1.0 / num_positions.max(1) as f64; num_positions],
            believed_pose: pose,
        }
    }

    /// Most probable state, lowest id on ties.
    pub fn map_state(&self) -> Option<StateId> {
        argmax(&self.q_s)
    }

    /// Zero-pads the posteriors to the current model dimensions.
    pub fn pad_to(&mut self, num_states: usize, num_positions: usize) {
        if self.q_s.len() < num_states {
            self.q_s.resize(num_states, 0.0);
        }
        if self.q_p.len() < num_positions {
            self.q_p.resize(num_positions, 0.0);
        }
    }
}

/// Confidence of the state posterior: its largest entry.
pub fn state_confidence(belief: &BeliefState) -> f64 {
    belief.q_s.iter().copied().fold(0.0, f64::max)
}

pub(crate) fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.map_or(true, |(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

/// One transition edge `prev --action--> next`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub prev: StateId,
    pub next: StateId,
    pub action: ActionId,
}

/// A single count change produced by a transition update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountChange {
    pub edge: Edge,
    pub situation: Situation,
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    /// `[class × state]`
    pub a_obs: CountMatrix,
    /// `[position × state]`
    pub a_pos: CountMatrix,
    /// Per action, `[next state × previous state]`.
    pub b_state: Vec<CountMatrix>,
    /// Pose table; position ids are never reused.
    pub poses: Vec<Pose>,
    pub classes: Vec<ObservationClass>,
    /// Position each state was anchored to at creation.
    pub state_anchor: Vec<PositionId>,
    pub actions: ActionSpace,
    pub count_floor: f64,
    pub learning: LearningRateTable,
}

impl GenerativeModel {
    pub fn new(actions: ActionSpace, count_floor: f64) -> Self {
        Self {
            a_obs: CountMatrix::new(0, 0, count_floor),
            a_pos: CountMatrix::new(0, 0, count_floor),
            b_state: (0..actions.action_count())
                .map(|_| CountMatrix::new(0, 0, count_floor))
                .collect(),
            poses: Vec::new(),
            classes: Vec::new(),
            state_anchor: Vec::new(),
            actions,
            count_floor,
            learning: LearningRateTable::default(),
        }
    }

    pub fn num_states(&self) -> usize {
        self.state_anchor.len()
    }

    pub fn num_positions(&self) -> usize {
        self.poses.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn action_count(&self) -> usize {
        self.b_state.len()
    }

    /// Appends a pose to `B_p` and a row to `A_p`.
    pub fn grow_position(&mut self, pose: Pose) -> PositionId {
        self.poses.push(pose);
        self.a_pos.push_row()
    }

    /// Adds a state anchored at `anchor`: a floor column in `A_o`, an
    /// anchored column in `A_p`, and a row and column in every `B_s` slab
    /// with a self-transition under STAY.
    pub fn grow_state(&mut self, anchor: PositionId) -> Result<StateId> {
        if anchor >= self.num_positions() {
            return Err(NavError::OutOfRange {
                what: "position",
                index: anchor,
                len: self.num_positions(),
            });
        }
        let s = self.a_obs.push_col();
        self.a_pos.push_col();
        self.a_pos.set(anchor, s, 1.0 + self.count_floor);
        for slab in &mut self.b_state {
            slab.push_row();
            slab.push_col();
        }
        if let Some(stay) = self.actions.stay() {
            self.b_state[stay].set(s, s, 1.0 + self.count_floor);
        }
        self.state_anchor.push(anchor);
        Ok(s)
    }

    /// Best-matching stored prototype and its similarity score.
    pub fn best_class(&self, signature: &ObservationSignature) -> Result<Option<(ClassId, f64)>> {
        let mut best: Option<(ClassId, f64)> = None;
        for class in &self.classes {
            let score = similarity(&class.prototype, signature)?;
            if best.map_or(true, |(_, b)| score > b) {
                best = Some((class.id, score));
            }
        }
        Ok(best)
    }

    /// Registers a new observation class. Unless `force_state` is given the
    /// signature must score below `match_threshold` against every stored
    /// prototype; with `force_state` the new class is also linked to that
    /// state by one count.
    pub fn grow_observation_class(
        &mut self,
        signature: ObservationSignature,
        match_threshold: f64,
        force_state: Option<StateId>,
    ) -> Result<ClassId> {
        if force_state.is_none() {
            if let Some((class, score)) = self.best_class(&signature)? {
                if score >= match_threshold {
                    return Err(NavError::DuplicatePrototype { class, score });
                }
            }
        }
        if let Some(s) = force_state {
            self.check_state(s)?;
        }
        let id = self.a_obs.push_row();
        self.classes.push(ObservationClass {
            id,
            prototype: signature,
        });
        if let Some(s) = force_state {
            self.a_obs.add(id, s, 1.0);
        }
        Ok(id)
    }

    /// Adds one observation count linking `class` to `state`.
    pub fn record_observation(
        &mut self,
        class: ClassId,
        state: StateId,
        weight: f64,
    ) -> Result<()> {
        self.check_state(state)?;
        if class >= self.num_classes() {
            return Err(NavError::OutOfRange {
                what: "observation class",
                index: class,
                len: self.num_classes(),
            });
        }
        self.a_obs.add(class, state, weight);
        Ok(())
    }

    fn check_state(&self, s: StateId) -> Result<()> {
        if s >= self.num_states() {
            return Err(NavError::OutOfRange {
                what: "state",
                index: s,
                len: self.num_states(),
            });
        }
        Ok(())
    }

    fn check_action(&self, a: ActionId) -> Result<()> {
        if a >= self.action_count() {
            return Err(NavError::OutOfRange {
                what: "action",
                index: a,
                len: self.action_count(),
            });
        }
        Ok(())
    }

    /// `Σ_{s'} P(s|s',a) q(s')` over all states, using the floor structure so
    /// the cost is linear in the explicit entries.
    pub fn predict_states(&self, q_prev: &[f64], action: ActionId) -> Vec<f64> {
        let slab = &self.b_state[action];
        let n = self.num_states();
        let mut out = vec![0.0; n];
        let mut floor_mass = 0.0;
        for (sp, &q) in q_prev.iter().enumerate().take(n) {
            if q == 0.0 {
                continue;
            }
            let total = slab.col_total(sp);
            floor_mass += q * self.count_floor / total;
            for (s, c) in slab.explicit(sp) {
                out[s] += q * (c - self.count_floor) / total;
            }
        }
        if floor_mass != 0.0 {
            for v in &mut out {
                *v += floor_mass;
            }
        }
        out
    }

    /// Posterior over states after taking `action` and observing `obs`
    /// (`None` drops the observation factor) at `position`.
    pub fn infer_state(
        &self,
        prev: &BeliefState,
        action: ActionId,
        obs: Option<ClassId>,
        position: PositionId,
    ) -> Result<BeliefState> {
        let n = self.num_states();
        if n == 0 {
            return Err(NavError::EmptyModel);
        }
        self.check_action(action)?;
        if position >= self.num_positions() {
            return Err(NavError::OutOfRange {
                what: "position",
                index: position,
                len: self.num_positions(),
            });
        }
        if let Some(o) = obs {
            if o >= self.num_classes() {
                return Err(NavError::OutOfRange {
                    what: "observation class",
                    index: o,
                    len: self.num_classes(),
                });
            }
        }
        let mut q_prev = prev.q_s.clone();
        q_prev.resize(n, 0.0);
        let prior = self.predict_states(&q_prev, action);
        let mut post: Vec<f64> = (0..n)
            .map(|s| {
                let lo = obs.map_or(1.0, |o| self.a_obs.prob(o, s));
                lo * self.a_pos.prob(position, s) * prior[s]
            })
            .collect();
        let z: f64 = post.iter().sum();
        if z > 0.0 && z.is_finite() {
            post.iter_mut().for_each(|v| *v /= z);
        } else {
            post = vec![1.0 / n as f64; n];
        }

        let m = self.num_positions();
        let mut q_p = vec![0.0; m];
        for (s, &q) in post.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let total = self.a_pos.col_total(s);
            let floor_share = self.count_floor / total;
            for v in q_p.iter_mut() {
                *v += q * floor_share;
            }
            for (p, c) in self.a_pos.explicit(s) {
                q_p[p] += q * (c - self.count_floor) / total;
            }
        }
        for v in q_p.iter_mut() {
            *v *= 1.0 - POSITION_EVIDENCE_WEIGHT;
        }
        q_p[position] += POSITION_EVIDENCE_WEIGHT;

        Ok(BeliefState {
            q_s: post,
            q_p,
            believed_pose: prev.believed_pose,
        })
    }

    /// Applies one pseudo-count update
    /// `count ← count + q_trans · q_prev · count · λ · scale`, clamped at the
    /// floor. A forward situation also updates the reverse edge
    /// `next --opposite(action)--> prev` with the matching reverse rate.
    pub fn update_transition(
        &mut self,
        q_trans: f64,
        q_prev: f64,
        edge: Edge,
        situation: Situation,
    ) -> Result<Vec<CountChange>> {
        let n = self.num_states();
        if edge.prev >= n || edge.next >= n || edge.action >= self.action_count() {
            return Err(NavError::UnknownEdge {
                prev: edge.prev,
                next: edge.next,
                action: edge.action,
            });
        }
        if !(0.0..=1.0).contains(&q_trans) || !(0.0..=1.0).contains(&q_prev) {
            return Err(NavError::Config(format!(
                "responsibilities must lie in [0, 1], got {q_trans} and {q_prev}"
            )));
        }
        let mut changes = vec![self.apply_rate(q_trans, q_prev, edge, situation)];
        let has_companion = situation.direction == Direction::Forward
            && edge.prev != edge.next
            && !self.actions.is_stay(edge.action);
        if has_companion {
            let rev = Edge {
                prev: edge.next,
                next: edge.prev,
                action: self.actions.opposite(edge.action),
            };
            changes.push(self.apply_rate(q_trans, q_prev, rev, situation.reversed()));
        }
        Ok(changes)
    }

    fn apply_rate(
        &mut self,
        q_trans: f64,
        q_prev: f64,
        edge: Edge,
        situation: Situation,
    ) -> CountChange {
        let lambda = self.learning.lambda(situation) * self.learning.scale;
        let slab = &mut self.b_state[edge.action];
        let before = slab.get(edge.next, edge.prev);
        let after = if lambda == 0.0 || q_trans == 0.0 || q_prev == 0.0 {
            before
        } else {
            slab.set(
                edge.next,
                edge.prev,
                before + q_trans * q_prev * before * lambda,
            )
        };
        CountChange {
            edge,
            situation,
            before,
            after,
        }
    }

    pub fn transition_count(&self, edge: Edge) -> f64 {
        self.b_state[edge.action].get(edge.next, edge.prev)
    }

    pub fn transition_prob(&self, edge: Edge) -> f64 {
        self.b_state[edge.action].prob(edge.next, edge.prev)
    }

    /// Smallest count across all matrices.
    pub fn min_count(&self) -> f64 {
        std::iter::once(&self.a_obs)
            .chain(std::iter::once(&self.a_pos))
            .chain(self.b_state.iter())
            .map(CountMatrix::min_count)
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose() -> Pose {
        Pose::new(0.0, 0.0, 0.0)
    }

    fn model_with_states(n: usize, floor: f64) -> GenerativeModel {
        let mut m = GenerativeModel::new(ActionSpace::new(4, true).unwrap(), floor);
        for i in 0..n {
            let p = m.grow_position(Pose::new(i as f64, 0.0, 0.0));
            m.grow_state(p).unwrap();
        }
        m
    }

    fn sig(v: f64) -> ObservationSignature {
        ObservationSignature {
            depth: (0..12)
                .map(|i| v * (1.0 + (i as f64 * 0.7).sin()) / 2.5)
                .collect(),
            appearance: vec![0; 12],
        }
    }

    #[test]
    fn identity_dominant_observation_posterior() {
        let mut m = model_with_states(2, 0.1);
        let c0 = m.grow_observation_class(sig(0.2), 0.85, None).unwrap();
        let c1 = m.grow_observation_class(sig(0.9), 0.85, None).unwrap();
        m.a_obs.set(c0, 0, 10.0);
        m.a_obs.set(c1, 1, 10.0);
        // flatten position and transition evidence
        m.a_pos = CountMatrix::new(2, 2, 0.1);
        for slab in &mut m.b_state {
            *slab = CountMatrix::new(2, 2, 0.1);
        }
        let prior = BeliefState::uniform(2, 2, pose());
        let post = m.infer_state(&prior, 0, Some(c0), 0).unwrap();
        let expected = 10.0 / 10.1;
        let other = 0.1 / 10.1;
        assert!((post.q_s[0] - expected / (expected + other)).abs() < 1e-12);
        assert!((post.q_s[0] - 0.99).abs() < 1e-3);
    }

    #[test]
    fn unknown_observation_uses_position_factor_only() {
        let mut m = model_with_states(3, 0.1);
        for slab in &mut m.b_state {
            *slab = CountMatrix::new(3, 3, 0.1);
        }
        let prior = BeliefState::uniform(3, 3, pose());
        let post = m.infer_state(&prior, 1, None, 2).unwrap();
        let lik: Vec<f64> = (0..3).map(|s| m.a_pos.prob(2, s)).collect();
        let z: f64 = lik.iter().sum();
        for s in 0..3 {
            assert!((post.q_s[s] - lik[s] / z).abs() < 1e-12);
        }
        let total: f64 = post.q_p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_model_is_an_error() {
        let m = GenerativeModel::new(ActionSpace::default(), 0.1);
        let prior = BeliefState::uniform(1, 1, pose());
        assert!(matches!(
            m.infer_state(&prior, 0, None, 0),
            Err(NavError::EmptyModel) | Err(NavError::OutOfRange { .. })
        ));
    }

    #[test]
    fn growth_preserves_old_ratios_and_starts_uniform() {
        let mut m = model_with_states(1, 0.1);
        let c = m.grow_observation_class(sig(0.3), 0.85, Some(0)).unwrap();
        m.grow_observation_class(sig(0.8), 0.85, None).unwrap();
        let stay = m.actions.stay().unwrap();
        let b_before = m.b_state[stay].get(0, 0);
        let p = m.grow_position(Pose::new(1.0, 0.0, 0.0));
        let s = m.grow_state(p).unwrap();
        assert_eq!(s, 1);
        // raw counts of the old state are untouched
        assert_eq!(m.b_state[stay].get(0, 0), b_before);
        assert_eq!(m.a_obs.get(c, 0), 1.1);
        // new column of A_o is uniform
        let col = &m.a_obs.normalized()[s];
        assert!(col.iter().all(|&v| (v - col[0]).abs() < 1e-15));
    }

    #[test]
    fn duplicate_prototype_needs_force() {
        let mut m = model_with_states(1, 0.1);
        assert_eq!(m.grow_observation_class(sig(0.5), 0.85, None).unwrap(), 0);
        let e = m.grow_observation_class(sig(0.5), 0.85, None).unwrap_err();
        assert!(matches!(e, NavError::DuplicatePrototype { class: 0, .. }));
        let c = m.grow_observation_class(sig(0.5), 0.85, Some(0)).unwrap();
        assert_eq!(c, 1);
        assert!((m.a_obs.get(1, 0) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn impossible_experienced_update_arithmetic() {
        let mut m = model_with_states(2, 0.1);
        let edge = Edge {
            prev: 0,
            next: 1,
            action: 0,
        };
        m.b_state[0].set(1, 0, 10.0);
        let ch = m
            .update_transition(
                1.0,
                1.0,
                edge,
                Situation::forward(Feasibility::Impossible, Evidence::Experienced),
            )
            .unwrap();
        assert!((ch[0].after - 6.5).abs() < 1e-12);
        // reverse companion on the opposite action: floor stays at floor
        assert_eq!(
            ch[1].edge,
            Edge {
                prev: 1,
                next: 0,
                action: 2
            }
        );
        assert_eq!(ch[1].after, 0.1);
    }

    #[test]
    fn zero_responsibility_and_clamp() {
        let mut m = model_with_states(2, 0.1);
        let edge = Edge {
            prev: 0,
            next: 1,
            action: 1,
        };
        m.b_state[1].set(1, 0, 4.0);
        let imp = Situation::forward(Feasibility::Impossible, Evidence::Experienced);
        m.update_transition(1.0, 0.0, edge, imp).unwrap();
        assert_eq!(m.transition_count(edge), 4.0);
        for _ in 0..200 {
            m.update_transition(1.0, 1.0, edge, imp).unwrap();
        }
        assert_eq!(m.transition_count(edge), 0.1);
        assert!(m.min_count() >= 0.1);
    }

    #[test]
    fn unknown_edge_is_rejected() {
        let mut m = model_with_states(2, 0.1);
        let e = m.update_transition(
            1.0,
            1.0,
            Edge {
                prev: 0,
                next: 5,
                action: 0,
            },
            Situation::forward(Feasibility::Possible, Evidence::Predicted),
        );
        assert!(matches!(e, Err(NavError::UnknownEdge { .. })));
    }

    #[test]
    fn confidence_is_max_entry() {
        let mut b = BeliefState::uniform(4, 1, pose());
        assert_eq!(state_confidence(&b), 0.25);
        b.q_s = vec![0.7, 0.2, 0.1];
        assert_eq!(state_confidence(&b), 0.7);
        b.q_s = vec![0.0, 1.0];
        assert_eq!(state_confidence(&b), 1.0);
    }
}
