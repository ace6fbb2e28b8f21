//! Scenario harness: batch runs, coverage curves, snapshots and map renders.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{run_exploration, AgentConfig, EpisodeLog, TerminalReason};
use crate::error::{NavError, Result};
use crate::frontier::{run_baseline, BaselineConfig};
use crate::map::{NodeStatus, TopoMap};
use crate::model::{Edge, GenerativeModel};
use crate::world::{CellIndex, Drift, World};

pub const SNAPSHOT_VERSION: u32 = 1;
const SNAPSHOT_MAGIC: &str = "toponav-snapshot";

/// Coverage against travelled distance; distance strictly increases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub points: Vec<(f64, f64)>,
}

impl CoverageCurve {
    /// Smallest travelled distance at which coverage reached `target`.
    pub fn distance_to(&self, target: f64) -> Option<f64> {
        self.points.iter().find(|p| p.1 >= target).map(|p| p.0)
    }

    /// Coverage after travelling `d` (step interpolation).
    pub fn coverage_at(&self, d: f64) -> f64 {
        self.points
            .iter()
            .take_while(|p| p.0 <= d)
            .last()
            .map_or(0.0, |p| p.1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("distance_m,coverage\n");
        for (d, c) in &self.points {
            let _ = writeln!(out, "{d:.6},{c:.6}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// One row per step. Steps that travel no further (STAY, failed motions)
/// are merged into the row of the same distance, keeping the later coverage.
pub fn coverage_curve(log: &EpisodeLog) -> CoverageCurve {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(log.reports.len());
    for r in &log.reports {
        match points.last_mut() {
            Some(last) if r.distance <= last.0 => last.1 = last.1.max(r.coverage),
            _ => points.push((r.distance, r.coverage)),
        }
    }
    CoverageCurve { points }
}

/// Pointwise mean of step-interpolated curves sampled every `spacing` meters
/// up to the longest run.
pub fn mean_curve(curves: &[CoverageCurve], spacing: f64) -> CoverageCurve {
    let end = curves
        .iter()
        .filter_map(|c| c.points.last().map(|p| p.0))
        .fold(0.0, f64::max);
    if curves.is_empty() || !(spacing > 0.0) {
        return CoverageCurve { points: Vec::new() };
    }
    let samples = (end / spacing).ceil() as usize;
    let points = (0..=samples)
        .map(|k| {
            let d = k as f64 * spacing;
            let mean = curves.iter().map(|c| c.coverage_at(d)).sum::<f64>() / curves.len() as f64;
            (d, mean)
        })
        .collect();
    CoverageCurve { points }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub model: GenerativeModel,
    pub map: TopoMap,
}

/// Header line `toponav-snapshot <version> <sha256 of body>`, then the JSON
/// body.
pub fn snapshot_to_string(model: &GenerativeModel, map: &TopoMap) -> Result<String> {
    let body = serde_json::to_string(&Snapshot {
        model: model.clone(),
        map: map.clone(),
    })?;
    let digest = hex(&Sha256::digest(body.as_bytes()));
    Ok(format!(
        "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} {digest}\n{body}"
    ))
}

pub fn snapshot_from_str(text: &str) -> Result<(GenerativeModel, TopoMap)> {
    let (header, body) = text
        .split_once('\n')
        .ok_or_else(|| NavError::CorruptSnapshot("missing header".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(SNAPSHOT_MAGIC) {
        return Err(NavError::CorruptSnapshot("not a snapshot".into()));
    }
    let version: u32 = fields
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| NavError::CorruptSnapshot("bad version field".into()))?;
    if version != SNAPSHOT_VERSION {
        return Err(NavError::VersionMismatch {
            found: version,
            expected: SNAPSHOT_VERSION,
        });
    }
    let digest = fields
        .next()
        .ok_or_else(|| NavError::CorruptSnapshot("missing checksum".into()))?;
    if hex(&Sha256::digest(body.as_bytes())) != digest {
        return Err(NavError::ChecksumMismatch);
    }
    let snap: Snapshot =
        serde_json::from_str(body).map_err(|e| NavError::CorruptSnapshot(e.to_string()))?;
    Ok((snap.model, snap.map))
}

pub fn save_snapshot(path: impl AsRef<Path>, model: &GenerativeModel, map: &TopoMap) -> Result<()> {
    std::fs::write(path, snapshot_to_string(model, map)?)?;
    Ok(())
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<(GenerativeModel, TopoMap)> {
    snapshot_from_str(&std::fs::read_to_string(path)?)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];
const PX_PER_M: f64 = 40.0;
const MAX_EDGE_PX: f64 = 6.0;

/// Stroke width of the directed link `from -> to`: the largest normalized
/// transition probability over all actions, scaled to `MAX_EDGE_PX`.
pub fn edge_width(model: &GenerativeModel, from: usize, to: usize) -> f64 {
    (0..model.action_count())
        .map(|action| {
            model.transition_prob(Edge {
                prev: from,
                next: to,
                action,
            })
        })
        .fold(0.0, f64::max)
        * MAX_EDGE_PX
}

/// SVG document of the map. Nodes are circles filled by observation class
/// (hypothetical nodes hollow); every learned link between two nodes is a
/// line whose width tracks its transition probability.
pub fn render_map(model: &GenerativeModel, map: &TopoMap) -> String {
    let poses: Vec<_> = map
        .nodes
        .iter()
        .map(|n| model.poses[n.position_id])
        .collect();
    let max_x = poses.iter().map(|p| p.x).fold(1.0, f64::max) + 1.0;
    let max_y = poses.iter().map(|p| p.y).fold(1.0, f64::max) + 1.0;
    let (w, h) = (max_x * PX_PER_M, max_y * PX_PER_M);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.1}\" height=\"{h:.1}\" viewBox=\"0 0 {w:.1} {h:.1}\">\n"
    );
    let node_of_state: std::collections::BTreeMap<usize, usize> = map
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(i, n)| n.state_id.map(|s| (s, i)))
        .collect();
    for (i, n) in map.nodes.iter().enumerate() {
        let Some(s) = n.state_id else { continue };
        let targets: std::collections::BTreeSet<usize> = (0..model.action_count())
            .flat_map(|a| {
                model.b_state[a]
                    .explicit(s)
                    .map(|(t, _)| t)
                    .collect::<Vec<_>>()
            })
            .filter(|&t| t != s)
            .collect();
        for t in targets {
            let Some(&j) = node_of_state.get(&t) else {
                continue;
            };
            let (a, b) = (poses[i], poses[j]);
            let _ = writeln!(
                svg,
                "  <line class=\"edge\" data-from=\"{i}\" data-to=\"{j}\" x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#444\" stroke-width=\"{:.4}\"/>",
                a.x * PX_PER_M,
                a.y * PX_PER_M,
                b.x * PX_PER_M,
                b.y * PX_PER_M,
                edge_width(model, s, t)
            );
        }
    }
    for (i, n) in map.nodes.iter().enumerate() {
        let p = poses[i];
        let fill = match (n.status, n.observation_class) {
            (NodeStatus::Visited, Some(c)) => PALETTE[c % PALETTE.len()],
            _ => "none",
        };
        let _ = writeln!(
            svg,
            "  <circle class=\"node\" data-node=\"{i}\" cx=\"{:.1}\" cy=\"{:.1}\" r=\"6\" fill=\"{fill}\" stroke=\"#222\" stroke-width=\"1.5\"/>",
            p.x * PX_PER_M,
            p.y * PX_PER_M
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Runner {
    Agent,
    Baseline,
}

impl Runner {
    fn name(self) -> &'static str {
        match self {
            Runner::Agent => "agent",
            Runner::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub world: PathBuf,
    pub runners: Vec<Runner>,
    pub seeds: Vec<u64>,
    pub agent: AgentConfig,
    pub baseline: BaselineConfig,
    /// Replaces the drift declared by the world file.
    pub drift: Option<Drift>,
    pub out: PathBuf,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(NavError::Config("seed list is empty".into()));
        }
        if self.runners.is_empty() {
            return Err(NavError::Config("no runner selected".into()));
        }
        self.agent.validate()
    }
}

/// Start cell for a seed: the world's fixed start, else a reachable cell
/// drawn with the seed.
pub fn seed_start(world: &World, seed: u64) -> Result<CellIndex> {
    if let Some(s) = world.start {
        return Ok(s);
    }
    let anchor = world.free_cells().next().ok_or(NavError::NoFreeCell)?;
    let cells = world.reachable_cells(anchor);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cells.choose(&mut rng).copied().ok_or(NavError::NoFreeCell)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runner: Runner,
    pub seed: u64,
    pub terminal: TerminalReason,
    pub distance: f64,
    pub distance_to_target: Option<f64>,
    pub final_coverage: f64,
    pub stuck_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerSummary {
    pub runner: Runner,
    /// Over the seeds that reached the coverage target.
    pub mean_distance: f64,
    pub stdev_distance: f64,
    pub reached: usize,
    pub stuck_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub runs: Vec<RunSummary>,
    pub runners: Vec<RunnerSummary>,
}

impl ScenarioSummary {
    pub fn from_runs(runs: Vec<RunSummary>, order: &[Runner]) -> Self {
        let runners = order
            .iter()
            .map(|&runner| {
                let ds: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.runner == runner)
                    .filter_map(|r| r.distance_to_target)
                    .collect();
                let n = ds.len().max(1) as f64;
                let mean = ds.iter().sum::<f64>() / n;
                let var = ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
                RunnerSummary {
                    runner,
                    mean_distance: mean,
                    stdev_distance: var.sqrt(),
                    reached: ds.len(),
                    stuck_events: runs
                        .iter()
                        .filter(|r| r.runner == runner)
                        .map(|r| r.stuck_events)
                        .sum(),
                }
            })
            .collect();
        Self { runs, runners }
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("runner,seeds_reached,mean_distance_m,stdev_distance_m,stuck_events\n");
        for r in &self.runners {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4},{}",
                r.runner.name(),
                r.reached,
                r.mean_distance,
                r.stdev_distance,
                r.stuck_events
            );
        }
        out
    }
}

/// Runs every selected runner on every seed and writes per-seed logs and
/// curves, one mean curve per runner and `summary.csv` under `config.out`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioSummary> {
    config.validate()?;
    let mut world = World::load(&config.world)?;
    if let Some(d) = config.drift {
        world.drift = d;
    }
    std::fs::create_dir_all(&config.out)?;
    let target = config.agent.coverage_target;
    let mut runs = Vec::new();
    for &runner in &config.runners {
        let mut curves = Vec::new();
        for &seed in &config.seeds {
            let start = seed_start(&world, seed)?;
            let mut w = world.clone();
            let stem = config.out.join(format!("{}-seed{seed}", runner.name()));
            let log = match runner {
                Runner::Agent => {
                    let mut cfg = config.agent.clone();
                    cfg.plan.seed = seed;
                    let ep = run_exploration(cfg, &mut w, start)?;
                    ep.log
                        .write_trace_jsonl(stem.with_extension("trace.jsonl"))?;
                    save_snapshot(
                        stem.with_extension("snapshot"),
                        &ep.agent.model,
                        &ep.agent.map,
                    )?;
                    std::fs::write(
                        stem.with_extension("svg"),
                        render_map(&ep.agent.model, &ep.agent.map),
                    )?;
                    ep.log
                }
                Runner::Baseline => run_baseline(&config.baseline, &mut w, start)?.0,
            };
            log.write_jsonl(stem.with_extension("jsonl"))?;
            let curve = coverage_curve(&log);
            curve.write_csv(stem.with_extension("csv"))?;
            runs.push(RunSummary {
                runner,
                seed,
                terminal: log.terminal,
                distance: log.distance(),
                distance_to_target: curve.distance_to(target),
                final_coverage: log.final_coverage(),
                stuck_events: log.stuck_events,
            });
            curves.push(curve);
        }
        mean_curve(&curves, 0.5)
            .write_csv(config.out.join(format!("{}-mean.csv", runner.name())))?;
    }
    let summary = ScenarioSummary::from_runs(runs, &config.runners);
    std::fs::write(config.out.join("summary.csv"), summary.to_csv())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::StepReport;
    use crate::map::MapConfig;
    use crate::planner::ActionSpace;
    use crate::world::Pose;

    fn report(distance: f64, coverage: f64) -> StepReport {
        StepReport {
            step: 0,
            believed_pose: Pose::new(0.0, 0.0, 0.0),
            true_pose: Pose::new(0.0, 0.0, 0.0),
            odometry_pose: Pose::new(0.0, 0.0, 0.0),
            node: None,
            action: 0,
            target_node: None,
            motion_attempted: false,
            motion_succeeded: false,
            observation_class: None,
            confidence: 1.0,
            new_nodes: Vec::new(),
            updates: Vec::new(),
            distance,
            coverage,
            stuck_event: false,
            goal_reached: false,
            phases: Vec::new(),
            plan: None,
        }
    }

    fn log(rows: &[(f64, f64)]) -> EpisodeLog {
        EpisodeLog {
            reports: rows.iter().map(|&(d, c)| report(d, c)).collect(),
            terminal: TerminalReason::MaxSteps,
            stuck_events: 0,
        }
    }

    #[test]
    fn stationary_log_is_one_row() {
        let c = coverage_curve(&log(&[(0.0, 0.3), (0.0, 0.3), (0.0, 0.3)]));
        assert_eq!(c.points, vec![(0.0, 0.3)]);
    }

    #[test]
    fn curve_merges_stays_and_ends_on_final_coverage() {
        let c = coverage_curve(&log(&[(0.0, 0.2), (1.0, 0.4), (1.0, 0.5), (2.0, 0.9)]));
        assert_eq!(c.points, vec![(0.0, 0.2), (1.0, 0.5), (2.0, 0.9)]);
        assert_eq!(c.distance_to(0.5), Some(1.0));
        assert_eq!(c.distance_to(0.95), None);
        assert_eq!(c.to_csv().lines().next(), Some("distance_m,coverage"));
    }

    #[test]
    fn mean_curve_is_pointwise() {
        let a = CoverageCurve {
            points: vec![(0.0, 0.0), (1.0, 1.0)],
        };
        let b = CoverageCurve {
            points: vec![(0.0, 0.5)],
        };
        let m = mean_curve(&[a, b], 0.5);
        assert_eq!(m.points, vec![(0.0, 0.25), (0.5, 0.25), (1.0, 0.75)]);
    }

    fn one_node() -> (GenerativeModel, TopoMap) {
        let mut model = GenerativeModel::new(ActionSpace::default(), 0.1);
        let mut map = TopoMap::new(MapConfig::default());
        map.add_node(&mut model, Pose::new(1.0, 1.0, 0.0)).unwrap();
        (model, map)
    }

    #[test]
    fn snapshot_round_trip_and_damage() {
        let (model, map) = one_node();
        let text = snapshot_to_string(&model, &map).unwrap();
        assert_eq!(snapshot_from_str(&text).unwrap(), (model, map));
        let cut = &text[..text.len() - 5];
        assert!(matches!(
            snapshot_from_str(cut),
            Err(NavError::ChecksumMismatch)
        ));
        let bumped = text.replacen("toponav-snapshot 1", "toponav-snapshot 2", 1);
        assert!(matches!(
            snapshot_from_str(&bumped),
            Err(NavError::VersionMismatch {
                found: 2,
                expected: 1
            })
        ));
        assert!(matches!(
            snapshot_from_str("junk"),
            Err(NavError::CorruptSnapshot(_))
        ));
    }

    #[test]
    fn empty_model_snapshot_is_valid() {
        let model = GenerativeModel::new(ActionSpace::default(), 0.1);
        let map = TopoMap::new(MapConfig::default());
        let text = snapshot_to_string(&model, &map).unwrap();
        assert_eq!(snapshot_from_str(&text).unwrap(), (model, map));
    }

    #[test]
    fn single_node_renders_one_circle() {
        let (model, map) = one_node();
        let svg = render_map(&model, &map);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert_eq!(svg.matches("<line").count(), 0);
        assert!(svg.contains("fill=\"none\""));
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let cfg = ScenarioConfig {
            world: "missing.toml".into(),
            runners: vec![Runner::Agent],
            seeds: Vec::new(),
            agent: AgentConfig::default(),
            baseline: BaselineConfig::default(),
            drift: None,
            out: "out".into(),
        };
        assert!(matches!(run_scenario(&cfg), Err(NavError::Config(_))));
        let cfg = ScenarioConfig {
            seeds: vec![0],
            ..cfg
        };
        assert!(matches!(run_scenario(&cfg), Err(NavError::Io(_))));
    }
}
