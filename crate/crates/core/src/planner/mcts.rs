//! UCB1 tree search over action sequences.
//!
//! Tree nodes carry the full predicted state distribution. Leaves below the
//! rollout depth are valued by a dynamic program over the most likely
//! successor graph, computed once per decision.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::efe::{
    evaluate_policy, goal_prob, info_gain, log_clamped, moving_mass, predict_step, state_gain,
    utility,
};
use super::{ActionId, PlanConfig, Preferences};
use crate::error::{NavError, Result};
use crate::model::{argmax, GenerativeModel, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub action: ActionId,
    pub visits: usize,
    pub mean_value: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: Vec<ActionId>,
    pub total_efe: f64,
    pub info_gain: f64,
    pub utility: f64,
    pub collision_risk: f64,
}

/// Per-decision interpretability record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerTrace {
    pub confidence: f64,
    pub top_policies: Vec<PolicySummary>,
    pub chosen: ActionId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub action: ActionId,
    pub stats: Vec<ActionStats>,
    pub trace: PlannerTrace,
}

/// Strongest learned successor of `state` under `action` other than itself.
pub(crate) fn successor(
    model: &GenerativeModel,
    state: StateId,
    action: ActionId,
) -> Option<StateId> {
    if model.actions.is_stay(action) {
        return Some(state);
    }
    let mut best: Option<(StateId, f64)> = None;
    for (s, c) in model.b_state[action].explicit(state) {
        if s != state && best.map_or(true, |(_, b)| c > b) {
            best = Some((s, c));
        }
    }
    best.map(|(s, _)| s)
}

/// STAY plus every sector with a learned successor, ascending.
pub fn legal_actions(model: &GenerativeModel, state: StateId) -> Vec<ActionId> {
    (0..model.action_count())
        .filter(|&a| model.actions.is_stay(a) || successor(model, state, a).is_some())
        .collect()
}

/// `value[k][s]`: best achievable negative EFE over `k` further steps from a
/// point mass at `s` following most likely successors.
fn value_table(model: &GenerativeModel, prefs: &Preferences, depth: usize) -> Vec<Vec<f64>> {
    let n = model.num_states();
    let reward: Vec<f64> = (0..n)
        .map(|s| {
            prefs.exploration_weight * state_gain(model, s)
                + prefs.utility_weight * goal_prob(model, s, prefs).map_or(0.0, log_clamped)
        })
        .collect();
    let moves: Vec<Vec<(StateId, f64)>> = (0..n)
        .map(|s| {
            legal_actions(model, s)
                .into_iter()
                .filter(|&a| !model.actions.is_stay(a))
                .filter_map(|a| {
                    Some((
                        successor(model, s, a)?,
                        (1.0 - moving_mass(model, s, a)).clamp(0.0, 1.0),
                    ))
                })
                .collect()
        })
        .collect();
    let mut table = vec![vec![0.0; n]];
    for k in 1..=depth {
        let prev = &table[k - 1];
        let row = (0..n)
            .map(|s| {
                moves[s]
                    .iter()
                    .map(|&(t, risk)| reward[t] - prefs.collision_weight * risk + prev[t])
                    .fold(reward[s] + prev[s], f64::max)
            })
            .collect();
        table.push(row);
    }
    table
}

struct TreeNode {
    dist: Vec<f64>,
    cum_value: f64,
    depth: usize,
    untried: Vec<ActionId>,
    children: Vec<(ActionId, usize)>,
    visits: usize,
    value_sum: f64,
}

impl TreeNode {
    fn new(model: &GenerativeModel, dist: Vec<f64>, cum_value: f64, depth: usize) -> Self {
        let untried = argmax(&dist).map_or_else(Vec::new, |s| legal_actions(model, s));
        Self {
            dist,
            cum_value,
            depth,
            untried,
            children: Vec::new(),
            visits: 0,
            value_sum: 0.0,
        }
    }

    fn mean(&self) -> f64 {
        if self.visits == 0 {
            f64::NEG_INFINITY
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

/// Runs the search from the state posterior `q_s` and samples a root action.
pub fn mcts_plan(
    model: &GenerativeModel,
    q_s: &[f64],
    prefs: &Preferences,
    config: &PlanConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PlanOutcome> {
    let n = model.num_states();
    if n == 0 {
        return Err(NavError::EmptyModel);
    }
    config.validate(&model.actions)?;
    let mut root_dist = q_s.to_vec();
    root_dist.resize(n, 0.0);
    let depth = config.rollout_depth;
    let values = value_table(model, prefs, depth);
    let mut tree = vec![TreeNode::new(model, root_dist.clone(), 0.0, 0)];

    for _ in 0..config.budget {
        let mut path = vec![0usize];
        let mut cur = 0usize;
        loop {
            let node = &tree[cur];
            if node.depth == depth {
                break;
            }
            if !node.untried.is_empty() {
                let a = tree[cur].untried.remove(0);
                let parent = &tree[cur];
                let (next, _, risk) = predict_step(model, &parent.dist, a);
                let step = prefs.exploration_weight * info_gain(model, &next)
                    + prefs.utility_weight * utility(model, &next, prefs)?
                    - prefs.collision_weight * risk;
                let child = TreeNode::new(model, next, parent.cum_value + step, parent.depth + 1);
                tree.push(child);
                let id = tree.len() - 1;
                tree[cur].children.push((a, id));
                path.push(id);
                cur = id;
                break;
            }
            if node.children.is_empty() {
                break;
            }
            let ln_n = (node.visits.max(1) as f64).ln();
            let mut best = (f64::NEG_INFINITY, node.children[0].1);
            for &(_, c) in &node.children {
                let ch = &tree[c];
                let score = ch.mean() + config.ucb_c * (ln_n / ch.visits.max(1) as f64).sqrt();
                if score > best.0 {
                    best = (score, c);
                }
            }
            cur = best.1;
            path.push(cur);
        }
        let leaf = &tree[cur];
        let tail = argmax(&leaf.dist).map_or(0.0, |s| values[depth - leaf.depth][s]);
        let value = leaf.cum_value + tail;
        for &id in &path {
            tree[id].visits += 1;
            tree[id].value_sum += value;
        }
    }

    let root = &tree[0];
    let mut stats: Vec<ActionStats> = root
        .children
        .iter()
        .map(|&(a, c)| ActionStats {
            action: a,
            visits: tree[c].visits,
            mean_value: tree[c].mean(),
            probability: 0.0,
        })
        .collect();
    if stats.is_empty() {
        return Err(NavError::Config(
            "no legal action at the current state".into(),
        ));
    }
    let probs = softmax(
        &stats.iter().map(|s| s.mean_value).collect::<Vec<_>>(),
        config.temperature,
    );
    for (s, p) in stats.iter_mut().zip(&probs) {
        s.probability = *p;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = stats.last().map(|s| s.action).unwrap_or(0);
    for s in &stats {
        acc += s.probability;
        if u < acc {
            chosen = s.action;
            break;
        }
    }

    let mut ranked: Vec<&(ActionId, usize)> = root.children.iter().collect();
    ranked.sort_by(|a, b| {
        tree[b.1]
            .mean()
            .total_cmp(&tree[a.1].mean())
            .then(a.0.cmp(&b.0))
    });
    let mut top_policies = Vec::new();
    for &&(a, c) in ranked.iter().take(3) {
        let mut policy = vec![a];
        let mut cur = c;
        while let Some(&(na, nc)) = tree[cur]
            .children
            .iter()
            .max_by(|x, y| tree[x.1].visits.cmp(&tree[y.1].visits).then(y.0.cmp(&x.0)))
        {
            policy.push(na);
            cur = nc;
        }
        let eval = evaluate_policy(model, &root_dist, &policy, prefs, depth)?;
        top_policies.push(PolicySummary {
            total_efe: eval.total_efe,
            info_gain: eval.steps.iter().map(|s| s.info_gain).sum(),
            utility: eval.steps.iter().map(|s| s.utility).sum(),
            collision_risk: eval.steps.iter().map(|s| s.collision_risk).sum(),
            policy,
        });
    }
    Ok(PlanOutcome {
        action: chosen,
        trace: PlannerTrace {
            confidence: root_dist.iter().copied().fold(0.0, f64::max),
            top_policies,
            chosen,
        },
        stats,
    })
}

/// Softmax of `values / temperature`; a zero temperature puts all mass on
/// the first maximum.
fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if temperature <= 1e-12 || !max.is_finite() {
        let i = values.iter().position(|&v| v == max).unwrap_or(0);
        return (0..values.len())
            .map(|j| if j == i { 1.0 } else { 0.0 })
            .collect();
    }
    let w: Vec<f64> = values
        .iter()
        .map(|v| ((v - max) / temperature).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|v| v / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::ActionSpace;
    use crate::world::Pose;
    use rand::SeedableRng;

    fn line_model() -> GenerativeModel {
        let mut m = GenerativeModel::new(ActionSpace::new(4, true).unwrap(), 0.01);
        for i in 0..3 {
            let p = m.grow_position(Pose::new(i as f64, 0.0, 0.0));
            m.grow_state(p).unwrap();
        }
        m.b_state[0].set(1, 0, 1.0);
        m.b_state[2].set(0, 1, 1.0);
        let sig = crate::world::ObservationSignature {
            depth: vec![0.5; 8],
            appearance: vec![0; 8],
        };
        m.grow_observation_class(sig, 0.85, Some(0)).unwrap();
        m
    }

    #[test]
    fn single_legal_action_takes_all_visits() {
        let mut m = line_model();
        m.b_state[0] = crate::model::CountMatrix::new(3, 3, 0.01);
        let cfg = PlanConfig {
            budget: 20,
            rollout_depth: 3,
            ..Default::default()
        };
        let out = mcts_plan(
            &m,
            &[1.0, 0.0, 0.0],
            &Preferences::exploration(),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(out.action, 4);
        assert_eq!(out.stats.len(), 1);
        assert_eq!(out.stats[0].visits, 20);
    }

    #[test]
    fn zero_temperature_is_argmax_and_seed_is_deterministic() {
        let m = line_model();
        let cfg = PlanConfig {
            budget: 50,
            rollout_depth: 3,
            temperature: 0.0,
            ..Default::default()
        };
        let prefs = Preferences::exploration();
        let a = mcts_plan(
            &m,
            &[1.0, 0.0, 0.0],
            &prefs,
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let best = a
            .stats
            .iter()
            .max_by(|x, y| x.mean_value.total_cmp(&y.mean_value))
            .unwrap();
        assert_eq!(a.action, best.action);
        assert_eq!(a.action, 0, "moving to the unvisited neighbour wins");
        let warm = PlanConfig {
            temperature: 1.0,
            ..cfg
        };
        let x = mcts_plan(
            &m,
            &[1.0, 0.0, 0.0],
            &prefs,
            &warm,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        let y = mcts_plan(
            &m,
            &[1.0, 0.0, 0.0],
            &prefs,
            &warm,
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn budget_below_sector_count_is_rejected() {
        let m = line_model();
        let cfg = PlanConfig {
            budget: 3,
            ..Default::default()
        };
        let e = mcts_plan(
            &m,
            &[1.0, 0.0, 0.0],
            &Preferences::exploration(),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(e, Err(NavError::Config(_))));
    }

    #[test]
    fn softmax_limits() {
        assert_eq!(softmax(&[1.0, 3.0, 3.0], 0.0), vec![0.0, 1.0, 0.0]);
        let p = softmax(&[0.0, 0.0], 1.0);
        assert_eq!(p, vec![0.5, 0.5]);
    }
}
