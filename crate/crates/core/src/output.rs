//! Deterministic CSV emission of run records and Monte-Carlo summaries.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! re-emitting identical data is byte-identical and parsing a file recovers
//! the exact binary values.

use crate::measurement::{measurement_csv_row, TimedMeasurement, MEASUREMENT_CSV_HEADER};
use crate::se3::Rotation;
use crate::sim::{McSummary, RunRecord, RunStatus};
use nalgebra::Rotation3;
use std::io::Write;
use std::path::Path;

pub const RUN_CSV_HEADER: &str = "t,\
px,py,pz,qw,qx,qy,qz,\
px_hat,py_hat,pz_hat,qw_hat,qx_hat,qy_hat,qz_hat,\
wx,wy,wz,vx,vy,vz,\
wx_hat,wy_hat,wz_hat,vx_hat,vy_hat,vz_hat,\
eps1,eps2,eps3,eps4,eps5,eps6,\
ve1,ve2,ve3,ve4,ve5,ve6,\
W";

/// Unit quaternion `[w, x, y, z]` of a rotation, canonicalized to `w >= 0`.
pub fn quaternion_wxyz(r: &Rotation) -> [f64; 4] {
    let q = nalgebra::UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
        *r.matrix(),
    ));
    let (w, v) = (q.w, q.imag());
    if w < 0.0 {
        [-w, -v.x, -v.y, -v.z]
    } else {
        [w, v.x, v.y, v.z]
    }
}

/// Render a run record as CSV, one row per recorded epoch.
pub fn run_csv(record: &RunRecord) -> String {
    let mut out = String::with_capacity(64 + record.epochs.len() * 256);
    out.push_str(RUN_CSV_HEADER);
    out.push('\n');
    for e in &record.epochs {
        let mut fields: Vec<String> = Vec::with_capacity(40);
        fields.push(format!("{}", e.time));
        let tp = e.truth_pose.translation();
        let tq = quaternion_wxyz(e.truth_pose.rotation());
        let ep = e.estimate_pose.translation();
        let eq = quaternion_wxyz(e.estimate_pose.rotation());
        for v in [tp[0], tp[1], tp[2], tq[0], tq[1], tq[2], tq[3]] {
            fields.push(format!("{v}"));
        }
        for v in [ep[0], ep[1], ep[2], eq[0], eq[1], eq[2], eq[3]] {
            fields.push(format!("{v}"));
        }
        for v in e.truth_velocity.to_vector().iter() {
            fields.push(format!("{v}"));
        }
        for v in e.estimate_velocity.to_vector().iter() {
            fields.push(format!("{v}"));
        }
        for v in e.epsilon.to_vector().iter() {
            fields.push(format!("{v}"));
        }
        for v in e.velocity_error.to_vector().iter() {
            fields.push(format!("{v}"));
        }
        fields.push(format!("{}", e.lyapunov_w));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

const SUMMARY_COLUMNS: &str = "pe_x,pe_y,pe_z,pe_norm,theta_x_deg,theta_y_deg,theta_z_deg,theta_norm_deg";

/// Render the per-run finals plus a statistics footer.
///
/// The footer lines start with `#` so the body parses as plain CSV.
pub fn summary_csv(summary: &McSummary, records: &[RunRecord]) -> String {
    let mut out = String::new();
    out.push_str(&format!("run,status,{SUMMARY_COLUMNS}\n"));
    for r in records {
        let status = match &r.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Diverged { time, .. } => format!("diverged@{time}"),
        };
        match &r.finals {
            Some(f) => {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    r.run_index,
                    status,
                    f.position[0],
                    f.position[1],
                    f.position[2],
                    f.position_norm(),
                    f.orientation_deg[0],
                    f.orientation_deg[1],
                    f.orientation_deg[2],
                    f.orientation_norm_deg(),
                ));
            }
            None => {
                out.push_str(&format!("{},{},,,,,,,,\n", r.run_index, status));
            }
        }
    }
    out.push_str(&format!(
        "# runs={} completed={} failed={:?}\n",
        summary.runs, summary.completed, summary.failed_runs
    ));
    out.push_str(&format!("# stat,{SUMMARY_COLUMNS}\n"));
    let m = &summary.mean_position_error;
    let mt = &summary.mean_orientation_error_deg;
    out.push_str(&format!(
        "# mean,{},{},{},,{},{},{},\n",
        m[0], m[1], m[2], mt[0], mt[1], mt[2]
    ));
    let s = &summary.std_position_error;
    let st = &summary.std_orientation_error_deg;
    out.push_str(&format!(
        "# std,{},{},{},,{},{},{},\n",
        s[0], s[1], s[2], st[0], st[1], st[2]
    ));
    out.push_str(&format!(
        "# max_norm,,,,{},,,,{}\n",
        summary.max_position_error_norm, summary.max_orientation_error_norm_deg
    ));
    out.push_str(&format!(
        "# min_norm,,,,{},,,,{}\n",
        summary.min_position_error_norm, summary.min_orientation_error_norm_deg
    ));
    out
}

/// Render a measurement stream as CSV (`t, r11..r33 row-major, px, py, pz`).
pub fn measurements_csv(measurements: &[TimedMeasurement]) -> String {
    let mut out = String::with_capacity(64 + measurements.len() * 200);
    out.push_str(MEASUREMENT_CSV_HEADER);
    out.push('\n');
    for m in measurements {
        out.push_str(&measurement_csv_row(m));
        out.push('\n');
    }
    out
}

pub fn write_file(path: impl AsRef<Path>, contents: &str) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{Pose, Twist};
    use crate::sim::{FinalErrors, RunEpoch};
    use nalgebra::Vector3;

    fn tiny_record(n_epochs: usize) -> RunRecord {
        let epoch = RunEpoch {
            time: 0.0,
            truth_pose: Pose::identity(),
            truth_velocity: Twist::zero(),
            estimate_pose: Pose::identity(),
            estimate_velocity: Twist::zero(),
            epsilon: Twist::zero(),
            velocity_error: Twist::zero(),
            lyapunov_w: 0.0,
        };
        RunRecord {
            run_index: 0,
            status: RunStatus::Completed,
            epochs: vec![epoch; n_epochs],
            finals: Some(FinalErrors {
                position: Vector3::new(1e-3, -2e-3, 0.5e-3),
                orientation_deg: Vector3::new(0.1, -0.2, 0.05),
            }),
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        let record = RunRecord { epochs: vec![], ..tiny_record(0) };
        let csv = run_csv(&record);
        assert_eq!(csv.lines().count(), 1);
        assert_eq!(csv.lines().next().unwrap(), RUN_CSV_HEADER);
    }

    #[test]
    fn one_epoch_is_two_lines_with_forty_columns() {
        let csv = run_csv(&tiny_record(1));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), 40);
        assert_eq!(lines[1].split(',').count(), 40);
    }

    #[test]
    fn emission_is_byte_stable() {
        let record = tiny_record(3);
        assert_eq!(run_csv(&record), run_csv(&record));
    }

    #[test]
    fn parsed_floats_round_trip_exactly() {
        let mut record = tiny_record(1);
        record.epochs[0].lyapunov_w = 0.123_456_789_012_345_68;
        record.epochs[0].time = 1.0 / 3.0;
        let csv = run_csv(&record);
        let data_line = csv.lines().nth(1).unwrap();
        let fields: Vec<f64> = data_line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(fields[0], record.epochs[0].time);
        assert_eq!(fields[39], record.epochs[0].lyapunov_w);
    }

    #[test]
    fn quaternion_of_identity() {
        assert_eq!(quaternion_wxyz(&Rotation::identity()), [1.0, 0.0, 0.0, 0.0]);
    }
}
