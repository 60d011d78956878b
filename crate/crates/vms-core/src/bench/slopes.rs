//! Log-log slope fits over sweep records: the scaling exponent is the
//! least-squares slope of ln(wall_ns) against ln(tokens), which is robust
//! to the unknown constant factor and is the number the scaling claims are
//! stated in (1 for the scan, 2 for attention).

use std::collections::BTreeMap;

use crate::bench::sweep::{BenchRecord, Operator, RowStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub operator: Operator,
    pub slope: f64,
    pub r2: f64,
    pub points: usize,
}

/// Minimum usable points per operator and minimum token spread (octaves).
pub const MIN_POINTS: usize = 5;
pub const MIN_OCTAVES: f64 = 2.0;

/// Fits one slope per operator over its non-skipped rows. Operators without
/// enough usable points or spread fail with [`Error::InsufficientPoints`].
pub fn fit_slopes(records: &[BenchRecord]) -> Result<Vec<SlopeFit>> {
    let mut groups: BTreeMap<&'static str, (Operator, Vec<(f64, f64)>)> = BTreeMap::new();
    for r in records {
        if r.status != RowStatus::Ok {
            continue;
        }
        let Some(wall) = r.wall_ns else { continue };
        if wall == 0 || r.tokens == 0 {
            continue;
        }
        groups
            .entry(r.operator.name())
            .or_insert_with(|| (r.operator, Vec::new()))
            .1
            .push(((r.tokens as f64).ln(), (wall as f64).ln()));
    }
    if groups.is_empty() {
        return Err(Error::InsufficientPoints {
            operator: "any".to_string(),
            detail: "no usable rows".to_string(),
        });
    }
    let mut fits = Vec::new();
    for (name, (operator, pts)) in groups {
        if pts.len() < MIN_POINTS {
            return Err(Error::InsufficientPoints {
                operator: name.to_string(),
                detail: format!("{} usable points, need {MIN_POINTS}", pts.len()),
            });
        }
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
        let octaves = (hi - lo) / std::f64::consts::LN_2;
        if octaves < MIN_OCTAVES {
            return Err(Error::InsufficientPoints {
                operator: name.to_string(),
                detail: format!("token range spans {octaves:.2} octaves, need {MIN_OCTAVES}"),
            });
        }
        let n = pts.len() as f64;
        let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        let mut syy = 0.0;
        for (x, y) in &pts {
            sxx += (x - mean_x) * (x - mean_x);
            sxy += (x - mean_x) * (y - mean_y);
            syy += (y - mean_y) * (y - mean_y);
        }
        let slope = sxy / sxx;
        let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
        fits.push(SlopeFit {
            operator,
            slope,
            r2,
            points: pts.len(),
        });
    }
    Ok(fits)
}

pub fn render_fits(fits: &[SlopeFit]) -> String {
    let mut out = String::from("operator,points,slope,r2\n");
    for f in fits {
        out.push_str(&format!(
            "{},{},{:.4},{:.4}\n",
            f.operator.name(),
            f.points,
            f.slope,
            f.r2
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::sweep::Dtype;
    use crate::num::rng::Rng;

    fn record(op: Operator, tokens: usize, wall_ns: u128) -> BenchRecord {
        BenchRecord {
            operator: op,
            frames: tokens / 196,
            tokens_per_frame: 196,
            tokens,
            dtype: Dtype::F64,
            repeats: 9,
            wall_ns: Some(wall_ns),
            bytes_peak: 0,
            status: RowStatus::Ok,
        }
    }

    fn power_law(op: Operator, exponent: f64, sizes: &[usize]) -> Vec<BenchRecord> {
        sizes
            .iter()
            .map(|&m| record(op, m, (25.0 * (m as f64).powf(exponent)) as u128))
            .collect()
    }

    #[test]
    fn exact_linear_data_fits_slope_one() {
        let sizes = [784, 1568, 3136, 6272, 12544, 25088];
        let fits = fit_slopes(&power_law(Operator::SelectiveScan, 1.0, &sizes)).unwrap();
        assert_eq!(fits.len(), 1);
        assert!((fits[0].slope - 1.0).abs() < 1e-6);
        assert!(fits[0].r2 > 0.999999);
    }

    #[test]
    fn exact_quadratic_data_fits_slope_two() {
        let sizes = [784, 1568, 3136, 6272, 12544];
        let fits = fit_slopes(&power_law(Operator::AttentionNaive, 2.0, &sizes)).unwrap();
        assert!((fits[0].slope - 2.0).abs() < 1e-6);
    }

    #[test]
    fn jittered_data_stays_near_truth() {
        let mut rng = Rng::new(42);
        let sizes = [784, 1568, 3136, 6272, 12544, 25088, 50176];
        let records: Vec<BenchRecord> = sizes
            .iter()
            .map(|&m| {
                let jitter = 1.0 + rng.uniform(-0.1, 0.1);
                record(Operator::SelectiveScan, m, (40.0 * m as f64 * jitter) as u128)
            })
            .collect();
        let fits = fit_slopes(&records).unwrap();
        assert!((fits[0].slope - 1.0).abs() < 0.1, "slope {}", fits[0].slope);
    }

    #[test]
    fn skipped_rows_are_excluded() {
        let sizes = [784, 1568, 3136, 6272, 12544];
        let mut records = power_law(Operator::AttentionNaive, 2.0, &sizes);
        records.push(BenchRecord {
            wall_ns: None,
            status: RowStatus::Skipped,
            ..record(Operator::AttentionNaive, 100352, 0)
        });
        let fits = fit_slopes(&records).unwrap();
        assert_eq!(fits[0].points, 5);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let sizes = [784, 1568, 3136];
        let err = fit_slopes(&power_law(Operator::SelectiveScan, 1.0, &sizes)).unwrap_err();
        assert!(matches!(err, Error::InsufficientPoints { .. }));
    }

    #[test]
    fn narrow_spread_is_an_error() {
        let sizes = [1000, 1100, 1200, 1300, 1400];
        let err = fit_slopes(&power_law(Operator::SelectiveScan, 1.0, &sizes)).unwrap_err();
        assert!(matches!(err, Error::InsufficientPoints { .. }));
    }

    #[test]
    fn operators_fit_independently() {
        let sizes = [784, 1568, 3136, 6272, 12544];
        let mut records = power_law(Operator::SelectiveScan, 1.0, &sizes);
        records.extend(power_law(Operator::AttentionNaive, 2.0, &sizes));
        let fits = fit_slopes(&records).unwrap();
        assert_eq!(fits.len(), 2);
        for f in fits {
            match f.operator {
                Operator::SelectiveScan => assert!((f.slope - 1.0).abs() < 1e-6),
                Operator::AttentionNaive => assert!((f.slope - 2.0).abs() < 1e-6),
                _ => unreachable!(),
            }
        }
    }
}
