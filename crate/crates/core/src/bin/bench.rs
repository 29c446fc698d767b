use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use navviz::bench::{
    choose_goal, fetch_world, render_report, run_experiment, Endpoints, ExperimentConfig, ModeSpec, ReportFormat,
    DEFAULT_TRIALS,
};
use navviz::pipeline::VisualizationMode;
use navviz::sim::PlanarPose;

/// Runs the five-mode visualization experiment against a simulator.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Simulator endpoint, `ws://host:port`.
    #[arg(long)]
    sim: String,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    modes: Vec<u8>,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    /// Seconds per trial.
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    /// Report files; the extension (csv, json, md) picks the format.
    #[arg(long, num_args = 1.., required = true)]
    out: Vec<PathBuf>,
    /// Navigation goal `x,y[,theta]`; defaults to a far reachable cell of the map.
    #[arg(long, value_parser = parse_pose)]
    goal: Option<PlanarPose>,
    /// Robot start poses `x,y[,theta]`, separated by `;`. Defaults to the current pose.
    #[arg(long, value_delimiter = ';', value_parser = parse_pose)]
    positions: Vec<PlanarPose>,
    /// Minimum distance from the default goal to any obstacle, in metres.
    #[arg(long, default_value_t = 0.3)]
    goal_clearance: f64,
}

fn parse_pose(s: &str) -> Result<PlanarPose, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y] => Ok(PlanarPose::new(x, y, 0.0)),
        [x, y, th] => Ok(PlanarPose::new(x, y, th)),
        _ => Err("expected x,y[,theta]".into()),
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let mut outputs = Vec::new();
    for path in &args.out {
        match ReportFormat::from_path(path) {
            Some(f) => outputs.push((path, f)),
            None => {
                eprintln!("bench: {}: unknown report format, use .csv, .json or .md", path.display());
                return ExitCode::from(2);
            }
        }
    }
    let mut modes = Vec::new();
    for &m in &args.modes {
        match VisualizationMode::from_index(m) {
            Some(mode) => modes.push(mode),
            None => {
                eprintln!("bench: mode {m} is not in 1..=5");
                return ExitCode::from(2);
            }
        }
    }

    let endpoints = Endpoints::new(args.sim.clone());
    let goal = match args.goal {
        Some(g) => g,
        None => {
            let (grid, robot) = match fetch_world(&endpoints).await {
                Ok(w) => w,
                Err(e) => {
                    eprintln!("bench: {e}");
                    return ExitCode::FAILURE;
                }
            };
            let from = args.positions.first().copied().unwrap_or(robot);
            match choose_goal(&grid, from, args.goal_clearance) {
                Some(g) => g,
                None => {
                    eprintln!("bench: no reachable goal from ({:.2}, {:.2}); pass --goal", from.x, from.y);
                    return ExitCode::FAILURE;
                }
            }
        }
    };
    log::info!("goal ({:.2}, {:.2})", goal.x, goal.y);

    let config = ExperimentConfig {
        modes: modes.into_iter().map(|m| ModeSpec::new(m, args.duration, Some(goal))).collect(),
        trials: args.trials,
        positions: args.positions.clone(),
    };
    let report = run_experiment(&config, &endpoints).await;

    for (path, format) in outputs {
        if let Err(e) = std::fs::write(path, render_report(&report, format)) {
            eprintln!("bench: cannot write {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    if report.partial {
        eprintln!("bench: {} trial(s) failed", report.failures.len());
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
