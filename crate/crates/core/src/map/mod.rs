//! Topological map over the generative model.
//!
//! Every node owns one position in `B_p` and one state. Nodes start out
//! hypothetical (posited from free LiDAR space) and become visited once an
//! observation has been associated with them. No two nodes sit closer than
//! the influence radius.

mod similarity;

pub use similarity::{similarity, ssim_1d};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};
use crate::model::{BeliefState, ClassId, Edge, GenerativeModel, PositionId, StateId};
use crate::planner::ActionId;
use crate::world::{LidarScan, ObservationSignature, Pose};

pub type NodeId = usize;

/// Slack on the spacing rule so lattice neighbours exactly one radius apart
/// are not rejected by rounding.
pub const SPACING_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Visited,
    Hypothetical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoNode {
    pub position_id: PositionId,
    pub state_id: Option<StateId>,
    pub status: NodeStatus,
    pub observation_class: Option<ClassId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    /// Minimum spacing between nodes, meters.
    pub influence_radius: f64,
    pub match_threshold: f64,
    pub confidence_threshold: f64,
    pub relocalise_window: usize,
    /// Count given to a transition when a link is first seeded.
    pub edge_seed: f64,
    /// Free space kept between a hypothetical node and the obstacle that
    /// bounds its ray, meters.
    pub wall_clearance: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            influence_radius: 1.0,
            match_threshold: 0.85,
            confidence_threshold: 0.6,
            relocalise_window: 3,
            edge_seed: 1.0,
            wall_clearance: 0.5,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.influence_radius > 0.0) {
            return Err(NavError::Config("influence_radius must be positive".into()));
        }
        if !unit(self.match_threshold) || !unit(self.confidence_threshold) {
            return Err(NavError::Config("thresholds must lie in (0, 1)".into()));
        }
        if self.relocalise_window == 0 {
            return Err(NavError::Config(
                "relocalise_window must be at least 1".into(),
            ));
        }
        if !(self.edge_seed > 0.0) || self.wall_clearance < 0.0 {
            return Err(NavError::Config(
                "edge_seed must be positive, wall_clearance non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MatchResult {
    Match { class: ClassId, score: f64 },
    NoMatch { best: Option<f64> },
}

impl MatchResult {
    pub fn class(&self) -> Option<ClassId> {
        match *self {
            MatchResult::Match { class, .. } => Some(class),
            MatchResult::NoMatch { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoMap {
    pub config: MapConfig,
    pub nodes: Vec<TopoNode>,
    /// Links seeded so far, as `(prev state, action, next state)`.
    pub links: BTreeSet<(StateId, ActionId, StateId)>,
}

impl TopoMap {
    pub fn new(config: MapConfig) -> Self {
        Self {
            config,
            nodes: Vec::new(),
            links: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_pose(&self, model: &GenerativeModel, node: NodeId) -> Pose {
        model.poses[self.nodes[node].position_id]
    }

    pub fn node_of_state(&self, state: StateId) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.state_id == Some(state))
    }

    pub fn visited_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.status == NodeStatus::Visited)
            .count()
    }

    /// Nearest node within the influence radius of `pose`; lowest id on ties.
    pub fn node_at(&self, model: &GenerativeModel, pose: &Pose) -> Option<NodeId> {
        self.nearest_within(model, pose, self.config.influence_radius)
    }

    fn nearest_within(&self, model: &GenerativeModel, pose: &Pose, radius: f64) -> Option<NodeId> {
        let mut best: Option<(NodeId, f64)> = None;
        for (id, n) in self.nodes.iter().enumerate() {
            let d = model.poses[n.position_id].distance(pose);
            if d <= radius && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((id, d));
            }
        }
        best.map(|(id, _)| id)
    }

    /// Creates a hypothetical node (new position and state) at `pose`.
    pub fn add_node(&mut self, model: &mut GenerativeModel, pose: Pose) -> Result<NodeId> {
        let p = model.grow_position(pose);
        let s = model.grow_state(p)?;
        self.nodes.push(TopoNode {
            position_id: p,
            state_id: Some(s),
            status: NodeStatus::Hypothetical,
            observation_class: None,
        });
        Ok(self.nodes.len() - 1)
    }

    /// Marks a node visited with its observation class.
    pub fn mark_visited(&mut self, node: NodeId, class: ClassId) {
        let n = &mut self.nodes[node];
        n.status = NodeStatus::Visited;
        n.observation_class = Some(class);
    }

    /// Seeds the transition pair between two nodes, labelling each direction
    /// by the sector of its bearing. Already seeded links are left alone.
    pub fn link(&mut self, model: &mut GenerativeModel, from: NodeId, to: NodeId) -> bool {
        let (Some(a), Some(b)) = (self.nodes[from].state_id, self.nodes[to].state_id) else {
            return false;
        };
        let pa = self.node_pose(model, from);
        let pb = self.node_pose(model, to);
        let fwd = model.actions.sector_of(pa.bearing_to(&pb));
        let rev = model.actions.sector_of(pb.bearing_to(&pa));
        let mut added = false;
        for (prev, action, next) in [(a, fwd, b), (b, rev, a)] {
            if self.links.insert((prev, action, next)) {
                let e = Edge { prev, next, action };
                let cur = model.transition_count(e);
                model.b_state[action].set(next, prev, cur.max(self.config.edge_seed));
                added = true;
            }
        }
        added
    }

    /// Posits hypothetical nodes along each sector bisector at multiples of
    /// the influence radius, up to the free range the scan shows in that
    /// direction, and seeds transitions between consecutive nodes.
    pub fn expand_hypothetical(
        &mut self,
        model: &mut GenerativeModel,
        believed_pose: &Pose,
        scan: &LidarScan,
    ) -> Result<Vec<NodeId>> {
        let r = self.config.influence_radius;
        let origin = self.node_at(model, believed_pose);
        let mut created = Vec::new();
        let sectors: Vec<ActionId> = model.actions.sectors().collect();
        for a in sectors {
            let heading = model.actions.bisector(a);
            let range = scan.range_towards(heading);
            let usable = if range < scan.max_range {
                range - self.config.wall_clearance
            } else {
                scan.max_range
            };
            if usable < r - SPACING_EPS {
                continue;
            }
            let steps = ((usable + SPACING_EPS) / r).floor() as usize;
            let mut prev = origin;
            for k in 1..=steps {
                let cand = believed_pose.offset(heading, k as f64 * r);
                match self.nearest_within(model, &cand, r - SPACING_EPS) {
                    Some(existing) => {
                        if Some(existing) == prev {
                            continue;
                        }
                        if let Some(p) = prev {
                            let from = self.node_pose(model, p);
                            let to = self.node_pose(model, existing);
                            if model.actions.sector_of(from.bearing_to(&to)) != a {
                                break;
                            }
                            self.link(model, p, existing);
                        }
                        prev = Some(existing);
                    }
                    None => {
                        let id = self.add_node(model, cand)?;
                        if let Some(p) = prev {
                            self.link(model, p, id);
                        }
                        created.push(id);
                        prev = Some(id);
                    }
                }
            }
        }
        Ok(created)
    }

    /// Smallest pairwise distance between node poses.
    pub fn min_spacing(&self, model: &GenerativeModel) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.nodes.len() {
            for j in (i + 1)..self.nodes.len() {
                best = best.min(self.node_pose(model, i).distance(&self.node_pose(model, j)));
            }
        }
        best
    }

    /// Target node of `action` from `state`: the strongest explicit transition
    /// to another state, lowest id on ties.
    pub fn action_target(
        &self,
        model: &GenerativeModel,
        state: StateId,
        action: ActionId,
    ) -> Option<StateId> {
        if model.actions.is_stay(action) {
            return Some(state);
        }
        let mut best: Option<(StateId, f64)> = None;
        for (s, c) in model.b_state[action].explicit(state) {
            if s == state {
                continue;
            }
            if best.map_or(true, |(_, bc)| c > bc) {
                best = Some((s, c));
            }
        }
        best.map(|(s, _)| s)
    }

    /// Filtered belief over states for a window of recent panoramas, starting
    /// from a uniform prior. `actions[i]` is the action taken just before
    /// `signatures[i]`; the first action is ignored.
    pub fn relocalise(
        &self,
        model: &GenerativeModel,
        signatures: &[ObservationSignature],
        actions: &[ActionId],
    ) -> Result<BeliefState> {
        let need = self.config.relocalise_window;
        let n = model.num_states();
        if n == 0 {
            return Err(NavError::EmptyModel);
        }
        if signatures.len() < need || actions.len() + 1 < need {
            return Err(NavError::WindowTooShort {
                got: signatures.len().min(actions.len() + 1),
                need,
            });
        }
        let sigs = &signatures[signatures.len() - need..];
        let acts = &actions[actions.len() + 1 - need..];
        let mut q = vec![1.0 / n as f64; n];
        for (i, sig) in sigs.iter().enumerate() {
            if i > 0 {
                q = model.predict_states(&q, acts[i - 1]);
            }
            if let Some(class) = match_observation(self, model, sig)?.class() {
                for (s, v) in q.iter_mut().enumerate() {
                    *v *= model.a_obs.prob(class, s);
                }
            }
            let z: f64 = q.iter().sum();
            if z > 0.0 {
                q.iter_mut().for_each(|v| *v /= z);
            }
        }
        let m = model.num_positions();
        let mut q_p = vec![0.0; m];
        for (s, &qs) in q.iter().enumerate() {
            for (p, v) in q_p.iter_mut().enumerate() {
                *v += qs * model.a_pos.prob(p, s);
            }
        }
        let best = crate::model::argmax(&q).unwrap_or(0);
        Ok(BeliefState {
            q_s: q,
            q_p,
            believed_pose: model.poses[model.state_anchor[best]],
        })
    }
}

/// Best stored observation class for `signature`, or `NoMatch` when the
/// best score is below the match threshold.
pub fn match_observation(
    map: &TopoMap,
    model: &GenerativeModel,
    signature: &ObservationSignature,
) -> Result<MatchResult> {
    Ok(match model.best_class(signature)? {
        Some((class, score)) if score >= map.config.match_threshold => {
            MatchResult::Match { class, score }
        }
        best => MatchResult::NoMatch {
            best: best.map(|(_, s)| s),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::ActionSpace;

    fn setup() -> (TopoMap, GenerativeModel) {
        (
            TopoMap::new(MapConfig::default()),
            GenerativeModel::new(ActionSpace::default(), 0.01),
        )
    }

    #[test]
    fn node_at_radius_and_ties() {
        let (mut map, mut model) = setup();
        let a = map.add_node(&mut model, Pose::new(0.0, 0.0, 0.0)).unwrap();
        let b = map.add_node(&mut model, Pose::new(1.5, 0.0, 0.0)).unwrap();
        assert_eq!(map.node_at(&model, &Pose::new(0.4, 0.0, 0.0)), Some(a));
        assert_eq!(map.node_at(&model, &Pose::new(0.0, 1.6, 0.0)), None);
        assert_eq!(map.node_at(&model, &Pose::new(0.6, 0.0, 0.0)), Some(a));
        assert_eq!(map.node_at(&model, &Pose::new(0.9, 0.0, 0.0)), Some(b));
        assert_eq!(map.node_at(&model, &Pose::new(0.75, 0.0, 0.0)), Some(a));
    }

    fn scan_all(range: f64, rays: usize) -> LidarScan {
        LidarScan {
            ranges: vec![range; rays],
            max_range: 12.0,
            start_angle: 0.0,
        }
    }

    #[test]
    fn sealed_closet_adds_nothing() {
        let (mut map, mut model) = setup();
        let p = Pose::new(0.0, 0.0, 0.0);
        map.add_node(&mut model, p).unwrap();
        let new = map
            .expand_hypothetical(&mut model, &p, &scan_all(0.8, 36))
            .unwrap();
        assert!(new.is_empty());
    }

    #[test]
    fn corridor_yields_four_nodes_ahead_and_is_idempotent() {
        let (mut map, mut model) = setup();
        let p = Pose::new(0.0, 0.0, 0.0);
        map.add_node(&mut model, p).unwrap();
        let mut ranges = vec![0.5; 36];
        ranges[0] = 5.0;
        let scan = LidarScan {
            ranges,
            max_range: 12.0,
            start_angle: 0.0,
        };
        let new = map.expand_hypothetical(&mut model, &p, &scan).unwrap();
        assert_eq!(new.len(), 4);
        for (k, &id) in new.iter().enumerate() {
            let q = map.node_pose(&model, id);
            assert!((q.x - (k + 1) as f64).abs() < 1e-12 && q.y.abs() < 1e-12);
        }
        let again = map.expand_hypothetical(&mut model, &p, &scan).unwrap();
        assert!(again.is_empty());
        assert!(map.min_spacing(&model) >= 1.0 - SPACING_EPS);
        // chain 0 -> 1 -> 2 under sector 0, reverse under sector 4
        assert_eq!(map.action_target(&model, 0, 0), Some(1));
        assert_eq!(map.action_target(&model, 1, 4), Some(0));
    }

    #[test]
    fn empty_memory_is_no_match() {
        let (map, model) = setup();
        let s = ObservationSignature {
            depth: vec![0.5; 8],
            appearance: vec![0; 8],
        };
        assert_eq!(
            match_observation(&map, &model, &s).unwrap(),
            MatchResult::NoMatch { best: None }
        );
    }

    #[test]
    fn relocalise_rejects_short_window() {
        let (mut map, mut model) = setup();
        map.add_node(&mut model, Pose::new(0.0, 0.0, 0.0)).unwrap();
        let s = ObservationSignature {
            depth: vec![0.5; 8],
            appearance: vec![0; 8],
        };
        assert!(matches!(
            map.relocalise(&model, &[s.clone(), s], &[0]),
            Err(NavError::WindowTooShort { .. })
        ));
    }
}
