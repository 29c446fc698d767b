use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use navviz::msgs::load_map_yaml;
use navviz::sim::{demo_map, free_pose_near_center, serve, PlanarPose, ServerConfig, WorldParams};

/// Simulated robot with a laser scanner, served over the rosbridge JSON protocol.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// map_server YAML file; without it a built-in 1060×448 lab map at 0.02 m/cell is used.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, default_value_t = 9090)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 10.0)]
    scan_rate: f64,
    #[arg(long, default_value_t = 360)]
    beams: usize,
    /// Range noise standard deviation in metres.
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Advance time only on /sim/step requests, by this many seconds each.
    #[arg(long)]
    fixed_step: Option<f64>,
    /// Start pose `x,y,theta`; defaults to the free cell nearest the map center.
    #[arg(long, value_parser = parse_pose)]
    start: Option<PlanarPose>,
    #[arg(long, default_value_t = 10.0)]
    pose_rate: f64,
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

    let grid = match &args.map {
        Some(p) => match load_map_yaml(p) {
            Ok(g) => g,
            Err(e) => {
                eprintln!("simbot: cannot load {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => demo_map(1060, 448, 0.02),
    };
    let world = WorldParams {
        scan_rate: args.scan_rate,
        beams: args.beams,
        noise_sigma: args.noise,
        ..WorldParams::default()
    };
    let Some(start) = args.start.or_else(|| free_pose_near_center(&grid, world.inflation_radius)) else {
        eprintln!("simbot: the map has no free space for the robot");
        return ExitCode::from(2);
    };
    let bind: SocketAddr = match format!("{}:{}", args.host, args.port).parse() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("simbot: bad address: {e}");
            return ExitCode::from(2);
        }
    };

    let mut config = ServerConfig::new(grid, start);
    config.bind = bind;
    config.world = world;
    config.seed = args.seed;
    config.pose_rate = args.pose_rate;
    config.fixed_step = args.fixed_step;

    let mut server = match serve(config).await {
        Ok(s) => s,
        Err(e) => {
            eprintln!("simbot: {e}");
            return ExitCode::FAILURE;
        }
    };
    // The first stdout line is the URL, for callers that pass --port 0.
    println!("{}", server.url());
    log::info!(
        "serving on {} (robot at {:.2}, {:.2}; {})",
        server.url(),
        start.x,
        start.y,
        match args.fixed_step {
            Some(dt) => format!("fixed step {dt} s"),
            None => "wall clock".into(),
        }
    );
    tokio::select! {
        _ = tokio::signal::ctrl_c() => {}
        _ = server.wait() => {}
    }
    server.shutdown().await;
    ExitCode::SUCCESS
}
