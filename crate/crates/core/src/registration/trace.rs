use std::io::{self, Write};

use super::RegistrationResult;
use crate::geometry::{pose_error, Pose};

/// Writes the convergence trace as CSV. The error columns are left empty
/// when no ground truth is given.
pub fn write_trace_csv<W: Write>(
    mut w: W,
    result: &RegistrationResult,
    truth: Option<&Pose>,
) -> io::Result<()> {
    writeln!(w, "iter,cost,step_norm,active_points,rot_err,trans_err")?;
    for (n, e) in result.trace.iter().enumerate() {
        write!(w, "{},{:.12e},{:.12e},{}", n + 1, e.cost, e.step_norm, e.active_points)?;
        match truth {
            Some(gt) => {
                let err = pose_error(&e.pose, gt);
                writeln!(w, ",{:.12e},{:.12e}", err.rotation, err.translation)?;
            }
            None => writeln!(w, ",,")?,
        }
    }
    Ok(())
}
