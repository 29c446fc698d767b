//! Navigation-stack visualization loop over the rosbridge JSON protocol.
//!
//! * [`proto`]: envelope codec and a pub/sub client session over WebSocket.
//! * [`msgs`]: typed navigation messages and `map_server` map files.
//! * [`geom`]: rigid transforms and headset/robot/map alignment.
//! * [`pipeline`]: message → world-frame point conversion and scene state.
//! * [`sim`]: simulated robot and bridge server.
//! * [`bench`]: five-mode experiment harness and reporting.

pub mod bench;
pub mod geom;
pub mod msgs;
pub mod par;
pub mod pipeline;
pub mod proto;
pub mod queue;
pub mod sim;

pub use geom::{AnchorRecord, Quat, RigidTransform, Vec3};
pub use msgs::{LaserScan, NavMessage, NavPath, OccupancyGrid, Odometry, Pose};
pub use proto::{ClientSession, Op, ProtocolEnvelope};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Proto(#[from] proto::ProtoError),
    #[error(transparent)]
    Msg(#[from] msgs::MsgError),
    #[error(transparent)]
    Plan(#[from] sim::PlanError),
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
}
