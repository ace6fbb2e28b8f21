//! The perception-action loop binding the model, the map and the planner.
//!
//! Each step runs the same phases in order: sense, match, infer, gate,
//! expand, plan, act, learn. Motions are atomic node-to-node hops, and the
//! believed pose only changes by integrating intended motions or by
//! relocalisation.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coverage::CoverageTracker;
use crate::error::{NavError, Result};
use crate::map::{match_observation, MapConfig, MatchResult, NodeId, NodeStatus, TopoMap};
use crate::model::{
    state_confidence, BeliefState, ClassId, CountChange, Edge, Evidence, Feasibility,
    GenerativeModel, PositionId, Situation, StateId,
};
use crate::planner::{mcts_plan, ActionId, ActionSpace, PlanConfig, PlannerTrace, Preferences};
use crate::world::{
    CellIndex, LidarScan, ObservationSignature, Odometry, Pose, World, DEFAULT_MAX_RANGE,
    DEFAULT_RAYS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Explore,
    GoalSignature,
    GoalPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub actions: ActionSpace,
    pub map: MapConfig,
    pub plan: PlanConfig,
    pub prefs: Preferences,
    pub mode: Mode,
    pub max_steps: usize,
    pub stuck_window: usize,
    /// Stuck events after which the episode is abandoned.
    pub max_stuck_events: usize,
    pub count_floor: f64,
    pub rays: usize,
    pub max_range: f64,
    pub coverage_target: f64,
    /// A ray shorter than the node distance by this much counts as blocked.
    pub block_margin: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let map = MapConfig::default();
        Self {
            actions: ActionSpace::default(),
            plan: PlanConfig::for_radius(14.0, map.influence_radius),
            map,
            prefs: Preferences::exploration(),
            mode: Mode::Explore,
            max_steps: 1000,
            stuck_window: 5,
            max_stuck_events: 20,
            count_floor: 0.001,
            rays: DEFAULT_RAYS,
            max_range: DEFAULT_MAX_RANGE,
            coverage_target: 0.95,
            block_margin: 0.2,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        self.map.validate()?;
        self.plan.validate(&self.actions)?;
        self.prefs.validate()?;
        let goal_ok = match self.mode {
            Mode::Explore => true,
            Mode::GoalSignature => {
                self.prefs.goal_signature.is_some() || self.prefs.goal_class.is_some()
            }
            Mode::GoalPosition => self.prefs.goal_position.is_some(),
        };
        if !goal_ok {
            return Err(NavError::Config(format!(
                "{:?} mode needs a goal",
                self.mode
            )));
        }
        if self.stuck_window == 0
            || self.rays < 4
            || !(self.max_range > 0.0)
            || !(self.count_floor > 0.0)
        {
            return Err(NavError::Config("invalid agent settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Sense,
    Match,
    Infer,
    Associate,
    Relocalise,
    Expand,
    Plan,
    Act,
    Learn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub believed_pose: Pose,
    pub true_pose: Pose,
    pub odometry_pose: Pose,
    pub node: Option<NodeId>,
    pub action: ActionId,
    pub target_node: Option<NodeId>,
    pub motion_attempted: bool,
    pub motion_succeeded: bool,
    pub observation_class: Option<ClassId>,
    pub confidence: f64,
    pub new_nodes: Vec<NodeId>,
    pub updates: Vec<CountChange>,
    pub distance: f64,
    pub coverage: f64,
    pub stuck_event: bool,
    pub goal_reached: bool,
    pub phases: Vec<Phase>,
    pub plan: Option<PlannerTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminalReason {
    CoverageReached,
    GoalReached,
    MaxSteps,
    Stuck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub reports: Vec<StepReport>,
    pub terminal: TerminalReason,
    pub stuck_events: usize,
}

impl EpisodeLog {
    pub fn distance(&self) -> f64 {
        self.reports.last().map_or(0.0, |r| r.distance)
    }

    pub fn final_coverage(&self) -> f64 {
        self.reports.last().map_or(0.0, |r| r.coverage)
    }

    /// One JSON object per step, then a summary line.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.reports {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        let summary = serde_json::json!({
            "terminal": self.terminal,
            "stuck_events": self.stuck_events,
            "steps": self.reports.len(),
            "distance": self.distance(),
            "coverage": self.final_coverage(),
        });
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Planner decisions only, one per line.
    pub fn write_trace_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for r in &self.reports {
            if let Some(p) = &r.plan {
                let line = serde_json::json!({ "step": r.step, "trace": p });
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}

/// True iff the last `window` reports all failed a motion from one node.
pub fn detect_stuck(reports: &[StepReport], window: usize) -> bool {
    if window == 0 || reports.len() < window {
        return false;
    }
    let tail = &reports[reports.len() - window..];
    let node = tail[0].node;
    tail.iter()
        .all(|r| r.motion_attempted && !r.motion_succeeded && r.node == node && !r.stuck_event)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub config: AgentConfig,
    pub model: GenerativeModel,
    pub map: TopoMap,
    pub belief: Option<BeliefState>,
    pub true_pose: Pose,
    pub believed_pose: Pose,
    pub odometry: Odometry,
    pub odometry_pose: Pose,
    pub distance: f64,
    pub current_node: Option<NodeId>,
    pub stuck_events: usize,
    pub reports: Vec<StepReport>,
    /// Goal class resolved from the goal signature.
    pub goal_class: Option<ClassId>,
    last_action: Option<ActionId>,
    last_moved: bool,
    history: Vec<(ObservationSignature, ActionId)>,
    #[serde(skip, default = "default_rng")]
    rng: ChaCha8Rng,
}

fn default_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

impl Agent {
    pub fn new(config: AgentConfig, start: Pose) -> Result<Self> {
        config.validate()?;
        let model = GenerativeModel::new(config.actions, config.count_floor);
        let map = TopoMap::new(config.map);
        Ok(Self::with_memory(config, model, map, start))
    }

    /// Starts from a previously learned model and map.
    pub fn with_memory(
        config: AgentConfig,
        model: GenerativeModel,
        map: TopoMap,
        start: Pose,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.plan.seed);
        let goal_class = config.prefs.goal_class;
        Self {
            config,
            model,
            map,
            belief: None,
            true_pose: start,
            believed_pose: start,
            odometry: Odometry::default(),
            odometry_pose: start,
            distance: 0.0,
            current_node: None,
            stuck_events: 0,
            reports: Vec::new(),
            goal_class,
            last_action: None,
            last_moved: false,
            history: Vec::new(),
            rng,
        }
    }

    fn state_of(&self, node: NodeId) -> StateId {
        self.map.nodes[node]
            .state_id
            .expect("map nodes own a state")
    }

    fn position_of(&self, node: NodeId) -> PositionId {
        self.map.nodes[node].position_id
    }

    /// Preferences in force: exploration until a goal class is known.
    pub fn active_preferences(&self) -> Preferences {
        let p = &self.config.prefs;
        match self.config.mode {
            Mode::Explore => p.clone(),
            Mode::GoalPosition => p.clone(),
            Mode::GoalSignature => match self.goal_class {
                Some(g) => Preferences {
                    goal_class: Some(g),
                    ..p.clone()
                },
                None => Preferences {
                    goal_class: None,
                    utility_weight: 0.0,
                    exploration_weight: 1.0,
                    ..p.clone()
                },
            },
        }
    }

    fn goal_reached(&self, node: NodeId, confidence: f64) -> bool {
        if confidence < self.config.map.confidence_threshold {
            return false;
        }
        match self.config.mode {
            Mode::Explore => false,
            Mode::GoalSignature => {
                self.goal_class.is_some()
                    && self.map.nodes[node].observation_class == self.goal_class
            }
            Mode::GoalPosition => Some(self.position_of(node)) == self.config.prefs.goal_position,
        }
    }

    /// Runs one step. `scripted` replaces the planner's choice.
    pub fn step(
        &mut self,
        world: &World,
        coverage: Option<&mut CoverageTracker>,
        scripted: Option<ActionId>,
    ) -> Result<StepReport> {
        let step = self.reports.len();
        let mut phases = Vec::with_capacity(8);
        let arrived = self.belief.is_none() || self.last_action_moved();

        // 1. sense
        phases.push(Phase::Sense);
        let sig =
            world.panorama_signature(&self.true_pose, self.config.rays, self.config.max_range)?;
        let scan = sig.to_scan(self.config.max_range);
        let coverage = coverage.map_or(0.0, |c| {
            c.observe(world, &self.true_pose);
            c.fraction()
        });

        // 2. match
        phases.push(Phase::Match);
        let matched = match_observation(&self.map, &self.model, &sig)?;

        // 3. infer
        phases.push(Phase::Infer);
        let mut new_nodes = Vec::new();
        let node = match self.map.node_at(&self.model, &self.believed_pose) {
            Some(n) => n,
            None => {
                let n = self.map.add_node(&mut self.model, self.believed_pose)?;
                new_nodes.push(n);
                n
            }
        };
        let (ns, np) = (self.model.num_states(), self.model.num_positions());
        let belief = match self.belief.take() {
            None => BeliefState::delta(
                ns,
                self.state_of(node),
                np,
                self.position_of(node),
                self.believed_pose,
            ),
            Some(mut prev) => {
                prev.pad_to(ns, np);
                let action = self.effective_last_action();
                let mut b = self.model.infer_state(
                    &prev,
                    action,
                    matched.class(),
                    self.position_of(node),
                )?;
                b.believed_pose = self.believed_pose;
                b
            }
        };
        let confidence = state_confidence(&belief);
        self.history
            .push((sig.clone(), self.effective_last_action()));

        // 4. gate
        let mut belief = belief;
        let mut node = node;
        let observation_class;
        if confidence >= self.config.map.confidence_threshold {
            phases.push(Phase::Associate);
            let s = belief.map_state().unwrap_or(self.state_of(node));
            if let Some(n) = self.map.node_of_state(s) {
                if n != node {
                    node = n;
                    self.believed_pose = self.map.node_pose(&self.model, n);
                }
            }
            observation_class = Some(self.associate(node, &matched, sig.clone(), arrived)?);
        } else {
            phases.push(Phase::Relocalise);
            let window = self.config.map.relocalise_window;
            if self.history.len() >= window {
                let sigs: Vec<_> = self.history.iter().map(|h| h.0.clone()).collect();
                let acts: Vec<_> = self.history.iter().skip(1).map(|h| h.1).collect();
                let relocated = self.map.relocalise(&self.model, &sigs, &acts)?;
                if let Some(n) = relocated
                    .map_state()
                    .and_then(|s| self.map.node_of_state(s))
                {
                    node = n;
                    self.believed_pose = self.map.node_pose(&self.model, n);
                }
                belief = BeliefState {
                    believed_pose: self.believed_pose,
                    ..relocated
                };
            }
            observation_class = matched.class();
        }
        self.current_node = Some(node);

        // goal bookkeeping
        if self.config.mode == Mode::GoalSignature && self.goal_class.is_none() {
            if let Some(goal) = &self.config.prefs.goal_signature {
                self.goal_class = match_observation(&self.map, &self.model, goal)?.class();
            }
        }
        let goal_reached = self.goal_reached(node, confidence);

        // 5. expand
        phases.push(Phase::Expand);
        new_nodes.extend(self.map.expand_hypothetical(
            &mut self.model,
            &self.believed_pose,
            &scan,
        )?);
        belief.pad_to(self.model.num_states(), self.model.num_positions());

        let mut report = StepReport {
            step,
            believed_pose: self.believed_pose,
            true_pose: self.true_pose,
            odometry_pose: self.odometry_pose,
            node: Some(node),
            action: self.model.actions.stay().unwrap_or(0),
            target_node: None,
            motion_attempted: false,
            motion_succeeded: true,
            observation_class,
            confidence,
            new_nodes,
            updates: Vec::new(),
            distance: self.distance,
            coverage,
            stuck_event: false,
            goal_reached,
            phases,
            plan: None,
        };
        if goal_reached {
            self.belief = Some(belief);
            self.last_action = self.model.actions.stay();
            self.last_moved = false;
            self.reports.push(report.clone());
            return Ok(report);
        }

        // 6. plan
        report.phases.push(Phase::Plan);
        let s = self.state_of(node);
        let action = match scripted {
            Some(a) => a,
            None => {
                let prefs = self.active_preferences();
                let out = mcts_plan(
                    &self.model,
                    &belief.q_s,
                    &prefs,
                    &self.config.plan,
                    &mut self.rng,
                )?;
                report.plan = Some(out.trace);
                out.action
            }
        };
        report.action = action;

        // 7. act
        report.phases.push(Phase::Act);
        let mut target = None;
        if !self.model.actions.is_stay(action) {
            let t = self
                .map
                .action_target(&self.model, s, action)
                .ok_or_else(|| {
                    NavError::Config(format!(
                        "action {action} has no learned successor from state {s}"
                    ))
                })?;
            let tn = self
                .map
                .node_of_state(t)
                .expect("every state belongs to a node");
            let goal = self.map.node_pose(&self.model, tn);
            let res = world.execute_motion(&self.true_pose, &goal, &mut self.odometry)?;
            report.motion_attempted = true;
            report.motion_succeeded = res.succeeded;
            report.target_node = Some(tn);
            self.odometry_pose = res.odometry_pose;
            if res.succeeded {
                self.distance += self.true_pose.distance(&res.true_pose);
                self.true_pose = res.true_pose;
                self.believed_pose = goal;
            }
            target = Some((t, res.succeeded));
        }

        // 8. learn
        report.phases.push(Phase::Learn);
        let q_prev = belief.q_s.get(s).copied().unwrap_or(0.0);
        if let Some((t, ok)) = target {
            let feas = if ok {
                Feasibility::Possible
            } else {
                Feasibility::Impossible
            };
            let edge = Edge {
                prev: s,
                next: t,
                action,
            };
            let q_trans = self.share(edge);
            report.updates.extend(self.model.update_transition(
                q_trans,
                q_prev,
                edge,
                Situation::forward(feas, Evidence::Experienced),
            )?);
        }
        report
            .updates
            .extend(self.predicted_updates(node, &scan, action, q_prev)?);

        report.distance = self.distance;
        self.reports.push(report);
        if detect_stuck(&self.reports, self.config.stuck_window) {
            self.stuck_events += 1;
            let changes = self.blacklist_outgoing(s)?;
            let last = self.reports.last_mut().expect("just pushed");
            last.stuck_event = true;
            last.updates.extend(changes);
        }
        let report = self.reports.last().expect("just pushed").clone();
        self.last_action = Some(if report.motion_attempted && !report.motion_succeeded {
            self.model.actions.stay().unwrap_or(action)
        } else {
            action
        });
        self.last_moved = report.motion_attempted && report.motion_succeeded;
        self.belief = Some(belief);
        Ok(report)
    }

    fn last_action_moved(&self) -> bool {
        self.last_moved
    }

    /// The action the agent knows it effectively took last step; a blocked
    /// motion counts as STAY.
    fn effective_last_action(&self) -> ActionId {
        self.last_action.or(self.model.actions.stay()).unwrap_or(0)
    }

    /// Registers the observation at `node`: founds a new class when nothing
    /// matches and counts it towards the node's state on arrival.
    fn associate(
        &mut self,
        node: NodeId,
        matched: &MatchResult,
        sig: ObservationSignature,
        arrived: bool,
    ) -> Result<ClassId> {
        let s = self.state_of(node);
        let class = match matched.class() {
            Some(c) => {
                if arrived {
                    self.model.record_observation(c, s, 1.0)?;
                }
                c
            }
            None => {
                self.model
                    .grow_observation_class(sig, self.config.map.match_threshold, Some(s))?
            }
        };
        let n = &self.map.nodes[node];
        if n.status == NodeStatus::Hypothetical || n.observation_class != Some(class) {
            self.map.mark_visited(node, class);
        }
        Ok(class)
    }

    /// Share of the column's learned mass held by `edge.next`.
    fn share(&self, edge: Edge) -> f64 {
        let slab = &self.model.b_state[edge.action];
        let excess = slab.excess(edge.prev);
        if excess <= 0.0 {
            return 0.0;
        }
        ((slab.get(edge.next, edge.prev) - self.model.count_floor) / excess).clamp(0.0, 1.0)
    }

    /// LiDAR-predicted feasibility of the untried edges leaving `node`.
    fn predicted_updates(
        &mut self,
        node: NodeId,
        scan: &LidarScan,
        tried: ActionId,
        q_prev: f64,
    ) -> Result<Vec<CountChange>> {
        let s = self.state_of(node);
        let here = self.map.node_pose(&self.model, node);
        let r = self.config.map.influence_radius;
        let margin = self.config.block_margin;
        let mut changes = Vec::new();
        let mut occupied = Vec::new();
        for a in self.model.actions.sectors() {
            if a == tried {
                continue;
            }
            let Some(t) = self.map.action_target(&self.model, s, a) else {
                continue;
            };
            let tn = self
                .map
                .node_of_state(t)
                .expect("every state belongs to a node");
            let there = self.map.node_pose(&self.model, tn);
            let d = here.distance(&there);
            let seen = scan.widest_range_towards(here.bearing_to(&there));
            let edge = Edge {
                prev: s,
                next: t,
                action: a,
            };
            if seen < d - margin {
                let q = self.share(edge);
                changes.extend(self.model.update_transition(
                    q,
                    q_prev,
                    edge,
                    Situation::forward(Feasibility::Impossible, Evidence::Predicted),
                )?);
                if seen >= d - r {
                    occupied.push(t);
                }
            } else if self.model.transition_count(edge) < self.config.map.edge_seed {
                let q = self.share(edge);
                changes.extend(self.model.update_transition(
                    q,
                    q_prev,
                    edge,
                    Situation::forward(Feasibility::Possible, Evidence::Predicted),
                )?);
            }
        }
        // a node that looks occupied loses its incoming edges from elsewhere
        for t in occupied {
            for a in self.model.actions.sectors() {
                let sources: Vec<StateId> = (0..self.model.num_states())
                    .filter(|&x| {
                        x != s && x != t && self.model.b_state[a].get(t, x) > self.model.count_floor
                    })
                    .collect();
                for x in sources {
                    let edge = Edge {
                        prev: x,
                        next: t,
                        action: a,
                    };
                    let q = self.share(edge);
                    changes.extend(self.model.update_transition(
                        q,
                        1.0,
                        edge,
                        Situation::forward(Feasibility::Impossible, Evidence::Predicted),
                    )?);
                }
            }
        }
        Ok(changes)
    }

    /// Stuck response: every outgoing edge of `s` is predicted impossible.
    fn blacklist_outgoing(&mut self, s: StateId) -> Result<Vec<CountChange>> {
        let mut changes = Vec::new();
        for a in self.model.actions.sectors() {
            let targets: Vec<StateId> = self.model.b_state[a]
                .explicit(s)
                .map(|(t, _)| t)
                .filter(|&t| t != s)
                .collect();
            for t in targets {
                let edge = Edge {
                    prev: s,
                    next: t,
                    action: a,
                };
                let q = self.share(edge);
                changes.extend(self.model.update_transition(
                    q,
                    1.0,
                    edge,
                    Situation::forward(Feasibility::Impossible, Evidence::Predicted),
                )?);
            }
        }
        Ok(changes)
    }
}

/// A finished run: the log and the agent with its learned memory.
#[derive(Debug, Clone)]
pub struct Episode {
    pub log: EpisodeLog,
    pub agent: Agent,
}

/// Explores from the centre of `start` until the coverage target, the step
/// limit or repeated stuck events.
pub fn run_exploration(
    config: AgentConfig,
    world: &mut World,
    start: CellIndex,
) -> Result<Episode> {
    if config.mode != Mode::Explore {
        return Err(NavError::Config("exploration needs Explore mode".into()));
    }
    let agent = Agent::new(config, world.cell_center(start))?;
    run_agent(agent, world, start, &[])
}

/// Navigates to the configured goal from `start`, optionally with a learned
/// model and map.
pub fn run_goal(
    config: AgentConfig,
    world: &mut World,
    start: Pose,
    memory: Option<(GenerativeModel, TopoMap)>,
) -> Result<Episode> {
    if config.mode == Mode::Explore {
        return Err(NavError::Config("goal runs need a goal mode".into()));
    }
    config.validate()?;
    let cell = world
        .cell_at(start.x, start.y)
        .filter(|&c| world.cell(c).is_free())
        .ok_or(NavError::PoseInWall {
            x: start.x,
            y: start.y,
        })?;
    let agent = match memory {
        Some((model, map)) => Agent::with_memory(config, model, map, start),
        None => Agent::new(config, start)?,
    };
    run_agent(agent, world, cell, &[])
}

/// Runs a scripted episode: entry `t` of `script` overrides the planner at
/// step `t` and the run ends with the script.
pub fn run_replay(
    config: AgentConfig,
    world: &mut World,
    start: CellIndex,
    script: &[Option<ActionId>],
) -> Result<Episode> {
    let config = AgentConfig {
        max_steps: script.len(),
        ..config
    };
    let agent = Agent::new(config, world.cell_center(start))?;
    run_agent(agent, world, start, script)
}

/// Drives `agent` until a terminal condition, applying scheduled obstacle
/// events before each step.
pub fn run_agent(
    mut agent: Agent,
    world: &mut World,
    start: CellIndex,
    script: &[Option<ActionId>],
) -> Result<Episode> {
    let mut coverage = CoverageTracker::new(world, start, agent.config.max_range);
    let explore = agent.config.mode == Mode::Explore;
    let mut terminal = TerminalReason::MaxSteps;
    for t in 0..agent.config.max_steps {
        world.apply_obstacle_event(t)?;
        let scripted = script.get(t).copied().flatten();
        let r = agent.step(world, Some(&mut coverage), scripted)?;
        if r.goal_reached {
            terminal = TerminalReason::GoalReached;
            break;
        }
        if explore && script.is_empty() && r.coverage >= agent.config.coverage_target {
            terminal = TerminalReason::CoverageReached;
            break;
        }
        if agent.stuck_events >= agent.config.max_stuck_events {
            terminal = TerminalReason::Stuck;
            break;
        }
    }
    let log = EpisodeLog {
        reports: agent.reports.clone(),
        terminal,
        stuck_events: agent.stuck_events,
    };
    Ok(Episode { log, agent })
}
