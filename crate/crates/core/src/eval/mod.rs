//! Workspace maps, warm-start benchmarks, transition sweeps and ablations.

mod ablation;
mod bench;
mod maps;
mod shelf;
mod sweep;

pub use ablation::{run_ablation, AblationRow, AblationSetup, AblationTable, Variant};
pub use bench::{
    mode_guesses, run_benchmark, solve_problems, BenchMode, BenchmarkReport, ModeSummary, ProblemSet, ProblemSpec,
    SolveRecord,
};
pub use maps::{build_maps, MapConfig, MapLayer, MapSampling, WorkspaceMap};
pub use shelf::Shelf;
pub use sweep::{high_error_segment, median, straight_path, transition_sweep, SweepPoint};

use crate::kin::{wrap_angle, Dim, JointConfig, Pose, RobotModel};

/// Position and rotation error of `q`'s TCP against `target`.
pub fn prediction_error(robot: &RobotModel, q: &JointConfig, target: &Pose) -> (f64, f64) {
    let tcp = &robot.frames(q.as_slice())[robot.tcp_frame];
    let pos = (tcp.translation - target.translation).norm();
    let rot = match robot.dim {
        Dim::Planar => wrap_angle(tcp.planar_angle() - target.planar_angle()).abs(),
        Dim::Spatial => {
            let c = ((tcp.rotation.transpose() * target.rotation).trace() - 1.0) / 2.0;
            c.clamp(-1.0, 1.0).acos()
        }
    };
    (pos, rot)
}
