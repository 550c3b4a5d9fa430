use std::io::Write;

use serde::{Deserialize, Serialize};

/// Per-sequence evaluation row.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub spatial_iou: f64,
    pub spatiotemporal_iou: f64,
    pub weighted_spatial_iou: f64,
    pub mse: f64,
    pub physics_iq: f64,
    pub bounce_timing_error: f64,
    pub trajectory_rmse: f64,
}

pub const METRICS_HEADER: &str =
    "id,spatial_iou,spatiotemporal_iou,weighted_spatial_iou,mse,physics_iq,bounce_timing_error,trajectory_rmse";

const FLOOR: f64 = 1e-6;

fn ratio(m: f64, c: f64) -> f64 {
    if m >= c {
        1.0
    } else {
        (m / c.max(FLOOR)).clamp(0.0, 1.0)
    }
}

/// Ceiling-normalised score in `[0, 100]`: the mean of the three IoU ratios
/// `m / ceiling` and the MSE ratio `ceiling / m`, each clamped to `[0, 1]`.
/// Components at or beyond the ceiling count as 1.
pub fn physics_iq_score(m: &MetricsRecord, ceiling: &MetricsRecord) -> f64 {
    let iou = [
        ratio(m.spatial_iou, ceiling.spatial_iou),
        ratio(m.spatiotemporal_iou, ceiling.spatiotemporal_iou),
        ratio(m.weighted_spatial_iou, ceiling.weighted_spatial_iou),
    ];
    let mse = if m.mse <= ceiling.mse {
        1.0
    } else {
        let c = ceiling.mse.max(FLOOR);
        (c / m.mse.max(c)).clamp(0.0, 1.0)
    };
    100.0 * (iou[0] + iou[1] + iou[2] + mse) / 4.0
}

impl MetricsRecord {
    fn fields(&self) -> [f64; 7] {
        [
            self.spatial_iou,
            self.spatiotemporal_iou,
            self.weighted_spatial_iou,
            self.mse,
            self.physics_iq,
            self.bounce_timing_error,
            self.trajectory_rmse,
        ]
    }

    pub fn mean(rows: &[MetricsRecord]) -> MetricsRecord {
        let n = rows.len().max(1) as f64;
        let mut s = [0.0; 7];
        for r in rows {
            for (a, b) in s.iter_mut().zip(r.fields()) {
                *a += b;
            }
        }
        MetricsRecord {
            spatial_iou: s[0] / n,
            spatiotemporal_iou: s[1] / n,
            weighted_spatial_iou: s[2] / n,
            mse: s[3] / n,
            physics_iq: s[4] / n,
            bounce_timing_error: s[5] / n,
            trajectory_rmse: s[6] / n,
        }
    }

    pub fn csv_row(&self, id: &str) -> String {
        let mut s = id.to_string();
        for v in self.fields() {
            s.push_str(&format!(",{v:?}"));
        }
        s
    }
}

/// One row per sequence followed by a `mean` row.
pub fn write_metrics_csv<W: Write>(mut w: W, rows: &[(String, MetricsRecord)]) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for (id, r) in rows {
        writeln!(w, "{}", r.csv_row(id))?;
    }
    let only: Vec<MetricsRecord> = rows.iter().map(|(_, r)| *r).collect();
    writeln!(w, "{}", MetricsRecord::mean(&only).csv_row("mean"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(s: f64, st: f64, w: f64, mse: f64) -> MetricsRecord {
        MetricsRecord {
            spatial_iou: s,
            spatiotemporal_iou: st,
            weighted_spatial_iou: w,
            mse,
            ..Default::default()
        }
    }

    #[test]
    fn ceiling_scores_hundred() {
        let c = rec(0.8, 0.6, 0.7, 0.01);
        assert_eq!(physics_iq_score(&c, &c), 100.0);
        let z = rec(0.0, 0.0, 0.0, 0.0);
        assert_eq!(physics_iq_score(&z, &z), 100.0);
    }

    #[test]
    fn worst_case_scores_zero() {
        let c = rec(0.8, 0.6, 0.7, 0.01);
        let m = rec(0.0, 0.0, 0.0, 1e12);
        assert!(physics_iq_score(&m, &c) < 1e-9);
    }

    #[test]
    fn hand_components() {
        let c = rec(0.8, 0.6, 0.4, 0.01);
        let m = rec(0.8, 0.3, 0.2, 0.005);
        assert_eq!(physics_iq_score(&m, &c), 75.0);
    }

    #[test]
    fn csv_has_mean_row() {
        let rows = vec![("a".to_string(), rec(1.0, 1.0, 1.0, 0.0)), ("b".to_string(), rec(0.0, 0.0, 0.0, 2.0))];
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("mean,0.5,0.5,0.5,1.0,"));
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER);
    }
}
