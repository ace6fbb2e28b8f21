//! Command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use toponav::agent::{run_goal, run_replay, AgentConfig, Mode};
use toponav::experiment::{
    coverage_curve, load_snapshot, render_map, run_scenario, save_snapshot, seed_start, Runner,
    ScenarioConfig,
};
use toponav::frontier::BaselineConfig;
use toponav::map::MapConfig;
use toponav::planner::{ActionSpace, PlanConfig, Preferences};
use toponav::world::{Drift, World};
use toponav::{NavError, Result};

#[derive(Parser)]
#[command(
    name = "toponav",
    about = "Topological active-inference navigation in grid worlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore a world until the coverage target.
    Explore(RunArgs),
    /// Run the nearest-frontier baseline.
    Baseline(RunArgs),
    /// Navigate to the place seen from a goal cell.
    Goal {
        #[command(flatten)]
        run: RunArgs,
        /// Goal cell as `row,col`.
        #[arg(long, value_parser = parse_cell)]
        goal: (usize, usize),
        /// Snapshot to start from instead of an empty memory.
        #[arg(long)]
        memory: Option<PathBuf>,
    },
    /// Render a snapshot as SVG.
    Render {
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a fixed action script; `-` hands a step to the planner.
    Replay {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        script: Vec<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    world: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 8)]
    sectors: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long = "horizon-m", default_value_t = 14.0)]
    horizon_m: f64,
    /// `wu,we,wc`
    #[arg(long, value_parser = parse_triple)]
    weights: Option<[f64; 3]>,
    /// `dx,dy,dyaw` per motion
    #[arg(long, value_parser = parse_triple)]
    drift: Option<[f64; 3]>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn agent_config(&self, prefs: Preferences, mode: Mode) -> Result<AgentConfig> {
        let map = MapConfig {
            influence_radius: self.radius,
            ..MapConfig::default()
        };
        let mut prefs = prefs;
        if let Some([wu, we, wc]) = self.weights {
            prefs.utility_weight = wu;
            prefs.exploration_weight = we;
            prefs.collision_weight = wc;
        }
        let config = AgentConfig {
            actions: ActionSpace::new(self.sectors, true)?,
            plan: PlanConfig::for_radius(self.horizon_m, self.radius),
            map,
            prefs,
            mode,
            ..AgentConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    fn drift(&self) -> Option<Drift> {
        self.drift.map(|[dx, dy, dyaw]| Drift { dx, dy, dyaw })
    }

    fn load_world(&self) -> Result<World> {
        let mut world = World::load(&self.world)?;
        if let Some(d) = self.drift() {
            world.drift = d;
        }
        Ok(world)
    }

    fn scenario(&self, runner: Runner) -> Result<ScenarioConfig> {
        Ok(ScenarioConfig {
            world: self.world.clone(),
            runners: vec![runner],
            seeds: self.seeds.clone(),
            agent: self.agent_config(Preferences::exploration(), Mode::Explore)?,
            baseline: BaselineConfig::default(),
            drift: self.drift(),
            out: self.out.clone(),
        })
    }
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into()
        .map_err(|_| "expected three comma-separated numbers".to_string())
}

fn parse_cell(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected row,col")?;
    Ok((
        r.trim().parse().map_err(|e| format!("{e}"))?,
        c.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Explore(args) => print_summary(&args, Runner::Agent),
        Command::Baseline(args) => print_summary(&args, Runner::Baseline),
        Command::Goal { run, goal, memory } => {
            let world = run.load_world()?;
            let signature = world.panorama_signature(
                &world.cell_center(goal),
                AgentConfig::default().rays,
                AgentConfig::default().max_range,
            )?;
            let prefs = Preferences {
                goal_signature: Some(signature),
                ..Preferences::goal_directed()
            };
            std::fs::create_dir_all(&run.out)?;
            for &seed in &run.seeds {
                let mut config = run.agent_config(prefs.clone(), Mode::GoalSignature)?;
                config.plan.seed = seed;
                let memory = memory.as_ref().map(load_snapshot).transpose()?;
                let mut w = world.clone();
                let start = world.cell_center(seed_start(&world, seed)?);
                let ep = run_goal(config, &mut w, start, memory)?;
                ep.log
                    .write_jsonl(run.out.join(format!("goal-seed{seed}.jsonl")))?;
                ep.log
                    .write_trace_jsonl(run.out.join(format!("goal-seed{seed}.trace.jsonl")))?;
                println!(
                    "seed {seed}: {:?} after {:.2} m, {} stuck events",
                    ep.log.terminal,
                    ep.log.distance(),
                    ep.log.stuck_events
                );
            }
            Ok(())
        }
        Command::Render { snapshot, out } => {
            let (model, map) = load_snapshot(snapshot)?;
            std::fs::write(out, render_map(&model, &map))?;
            Ok(())
        }
        Command::Replay { run, script } => {
            let script: Vec<Option<usize>> = script
                .iter()
                .map(|s| match s.trim() {
                    "-" => Ok(None),
                    a => a
                        .parse()
                        .map(Some)
                        .map_err(|_| NavError::Config(format!("bad action `{a}`"))),
                })
                .collect::<Result<_>>()?;
            let world = run.load_world()?;
            std::fs::create_dir_all(&run.out)?;
            for &seed in &run.seeds {
                let mut config = run.agent_config(Preferences::exploration(), Mode::Explore)?;
                config.plan.seed = seed;
                let mut w = world.clone();
                let ep = run_replay(config, &mut w, seed_start(&world, seed)?, &script)?;
                let stem = run.out.join(format!("replay-seed{seed}"));
                ep.log.write_jsonl(stem.with_extension("jsonl"))?;
                coverage_curve(&ep.log).write_csv(stem.with_extension("csv"))?;
                save_snapshot(
                    stem.with_extension("snapshot"),
                    &ep.agent.model,
                    &ep.agent.map,
                )?;
                std::fs::write(
                    stem.with_extension("svg"),
                    render_map(&ep.agent.model, &ep.agent.map),
                )?;
                println!(
                    "seed {seed}: {} steps, {} nodes",
                    ep.log.reports.len(),
                    ep.agent.map.len()
                );
            }
            Ok(())
        }
    }
}

fn print_summary(args: &RunArgs, runner: Runner) -> Result<()> {
    let summary = run_scenario(&args.scenario(runner)?)?;
    for r in &summary.runs {
        println!(
            "seed {}: {:?}, {:.2} m, coverage {:.3}, {} stuck events",
            r.seed, r.terminal, r.distance, r.final_coverage, r.stuck_events
        );
    }
    print!("{}", summary.to_csv());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
