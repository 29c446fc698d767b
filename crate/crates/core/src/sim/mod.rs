//! Simulated differential-drive robot with a laser scanner, served over the bridge protocol.

pub mod planner;
pub mod raycast;
pub mod server;
pub mod world;

pub use planner::{plan_path, InflatedGrid, PlanError, PlanResult};
pub use raycast::raycast;
pub use server::{serve, RunningServer, ServerConfig, ServerStats};
pub use world::{demo_map, free_pose_near_center, MotionStep, PlanarPose, WorldModel, WorldParams};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("ray origin ({0:.3}, {1:.3}) is outside the map")]
    OriginOutOfBounds(f64, f64),
    #[error("robot pose ({0:.3}, {1:.3}) is not in free space")]
    RobotNotFree(f64, f64),
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("cannot bind: {0}")]
    BindFailed(String),
}
