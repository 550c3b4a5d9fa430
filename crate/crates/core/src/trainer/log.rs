use std::io::Write;

use super::schedule::ramp;
use super::TrainError;

pub const LOG_HEADER: &str = "step,L_v,L_z,L_total,alpha_z,grad_norm_z,reset_count";

/// One optimizer step as logged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub l_v: f64,
    pub l_z: f64,
    pub l_total: f64,
    /// Weight actually applied to `L_z` in this step.
    pub alpha_z: f64,
    pub grad_norm_z: f64,
    pub reset_count: u64,
}

impl LossRecord {
    /// CSV row; floats use the shortest representation that parses back to
    /// the same bits.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{}",
            self.step, self.l_v, self.l_z, self.l_total, self.alpha_z, self.grad_norm_z, self.reset_count
        )
    }
}

pub fn write_log<W: Write>(mut w: W, records: &[LossRecord]) -> std::io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn parse_log(text: &str) -> Result<Vec<LossRecord>, TrainError> {
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(TrainError::Log("missing or wrong header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || TrainError::Log(format!("row {}: {line:?}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(LossRecord {
                step: f[0].parse().map_err(|_| bad())?,
                l_v: num(f[1])?,
                l_z: num(f[2])?,
                l_total: num(f[3])?,
                alpha_z: num(f[4])?,
                grad_norm_z: num(f[5])?,
                reset_count: f[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Checks a log against the ramp-and-reset rule: every row where
/// `reset_count` rises has `alpha_z = 0`, every other row has
/// `alpha_z = alpha_max·min(1, (step − last reset)/ramp_steps)` exactly, and
/// `L_total = L_v + alpha_z·L_z` to 1e-12. Returns the reset steps.
pub fn verify_alpha_trace(records: &[LossRecord], alpha_max: f64, ramp_steps: u64) -> Result<Vec<u64>, String> {
    let mut last_reset = 0;
    let mut resets = 0;
    let mut reset_steps = Vec::new();
    for r in records {
        let expected = if r.reset_count > resets {
            if r.reset_count != resets + 1 {
                return Err(format!("step {}: reset count jumped to {}", r.step, r.reset_count));
            }
            resets = r.reset_count;
            last_reset = r.step;
            reset_steps.push(r.step);
            0.0
        } else if r.reset_count < resets {
            return Err(format!("step {}: reset count decreased", r.step));
        } else {
            ramp(alpha_max, ramp_steps, r.step - last_reset)
        };
        if r.alpha_z != expected {
            return Err(format!("step {}: alpha_z {} but the ramp gives {}", r.step, r.alpha_z, expected));
        }
        if (r.l_total - (r.l_v + r.alpha_z * r.l_z)).abs() > 1e-12 {
            return Err(format!("step {}: L_total inconsistent", r.step));
        }
    }
    Ok(reset_steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, alpha: f64, resets: u64) -> LossRecord {
        LossRecord {
            step,
            l_v: 0.3,
            l_z: 0.1,
            l_total: 0.3 + alpha * 0.1,
            alpha_z: alpha,
            grad_norm_z: 0.2,
            reset_count: resets,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![rec(0, 0.0, 0), rec(1, 0.1 + 0.2, 0)];
        let mut buf = Vec::new();
        write_log(&mut buf, &rows).unwrap();
        let back = parse_log(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn detects_wrong_alpha() {
        let rows = vec![rec(0, 0.0, 0), rec(1, 0.25, 0), rec(2, 0.5, 0)];
        assert!(verify_alpha_trace(&rows, 1.0, 4).is_ok());
        let rows = vec![rec(0, 0.0, 0), rec(1, 0.25, 0), rec(2, 0.25, 0)];
        assert!(verify_alpha_trace(&rows, 1.0, 4).is_err());
        let rows = vec![rec(0, 0.0, 0), rec(1, 0.25, 1)];
        assert!(verify_alpha_trace(&rows, 1.0, 4).is_err());
    }
}
